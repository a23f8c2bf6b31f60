"""Certified bounds on the 1-Wasserstein distance between an SDE's invariant measure and its
numerical scheme's, from common-noise extrapolation and coupling-based contraction estimates."""
from .config import ConfigError, RunConfig
from .coupling import CouplingPolicy, coupling_time, coupling_times
from .estimators import (CappedDistance, OmegaBox, certified_bound, contraction_rate,
                         finite_time_error, rough_bound, sample_contraction_ratios,
                         survival_and_tail_rate)
from .evt import EstimatorFailure, fit_gpd
from .integrate import NoiseStream, em_step, milstein_step, paired_fine_coarse, simulate
from .models import CATALOG, SdeModel, make_model

__version__ = "0.1.0"
