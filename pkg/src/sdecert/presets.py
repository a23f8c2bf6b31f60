"""Packaged configurations for the benchmark examples at two scales.

``paper`` is the full-size reference run (8 trajectories' worth of
finite-error samples, 20000 pairs x 1000 replicates); those are multi-hour
cluster jobs.  ``desk`` shrinks sample counts roughly 100-fold and finishes
in minutes on a workstation.  Segment counts are total trajectory length / T.
"""
from __future__ import annotations

from .config import ConfigError, CouplingConfig, DistanceConfig, RunConfig, ValidateConfig

SCALES = ("paper", "desk")


def _ring(scale):
    paper = scale == "paper"
    return RunConfig(
        model="ring", params={"sigma": 0.5}, h=1e-3, T=10.0,
        coupling=CouplingConfig("mixed"),
        omega_lower=[-2.0, -2.0], omega_upper=[2.0, 2.0],
        n_segments=1_000_000 if paper else 100_000,
        n_pairs=20000 if paper else 2000, m_replicates=1000 if paper else 200,
        validation=ValidateConfig(resolution=256, box_lower=[-2.0, -2.0], box_upper=[2.0, 2.0],
                                  n_chains=8000 if paper else 1000,
                                  n_steps=10_000_000 if paper else 100_000,
                                  burn_in=20000, thin=10, chains_per_chunk=125),
    )


def _double_well(scale):
    paper = scale == "paper"
    return RunConfig(
        model="double-well", params={"r": 5.0, "sigma": 1.2}, h=2.5e-3, T=50.0,
        coupling=CouplingConfig("mixed"), distance=DistanceConfig(1.0, 0.45),
        omega_lower=[-2.0], omega_upper=[4.0],
        n_segments=800_000 if paper else 8000,
        n_pairs=20000 if paper else 800, m_replicates=1000 if paper else 25,
        validation=ValidateConfig(resolution=256, box_lower=[-2.0], box_upper=[4.0],
                                  n_chains=8000 if paper else 1000,
                                  n_steps=4_000_000 if paper else 200_000,
                                  burn_in=40000, thin=4, chains_per_chunk=125, split_point=0.0),
    )


def _langevin(scale):
    paper = scale == "paper"
    return RunConfig(
        model="langevin-ring", params={"sigma": 0.5, "gamma": 1.0}, h=1e-3, T=40.0,
        coupling=CouplingConfig("langevin-mixed"),
        omega_lower=[-3.0, -3.0, -6.0, -6.0], omega_upper=[3.0, 3.0, 6.0, 6.0],
        n_segments=800_000 if paper else 8000,
        n_pairs=20000 if paper else 800, m_replicates=1000 if paper else 25,
        validation=ValidateConfig(resolution=512 if paper else 128, axes=[0, 1],
                                  box_lower=[-2.0, -2.0], box_upper=[2.0, 2.0],
                                  n_chains=80 if paper else 1000,
                                  n_steps=10_000_000_000 if paper else 100_000,
                                  burn_in=40000, thin=10, chains_per_chunk=125),
    )


def _lorenz96(dim):
    def make(scale):
        paper = scale == "paper"
        return RunConfig(
            model="lorenz96", params={"dim": dim, "forcing": 8.0, "sigma": 3.0}, h=1e-4, T=3.0,
            mode="certified" if dim == 4 else "rough",
            coupling=CouplingConfig("mixed"),
            omega_lower=[-16.0] * dim, omega_upper=[19.0] * dim,
            n_segments=800_000 if paper else 8000,
            n_pairs=20000 if paper else 800, m_replicates=1000 if paper else 25,
        )
    return make


def _fhn(n):
    def make(scale):
        paper = scale == "paper"
        return RunConfig(
            model="fhn", params={"n_neurons": n, "d_u": 0.03, "w": 0.3, "sigma": 0.6,
                                 "a": 1.05, "mu": 0.1},
            h=5e-4, T=3.0, mode="certified" if n == 2 else "rough",
            coupling=CouplingConfig("mixed"),
            omega_lower=[-6.0] * (2 * n), omega_upper=[6.0] * (2 * n),
            n_segments=800_000 if paper else 8000,
            n_pairs=(40000 if n == 2 else 20000) if paper else 800,
            m_replicates=1000 if paper else 25,
        )
    return make


PRESETS = {
    "ring": _ring,
    "double-well": _double_well,
    "langevin": _langevin,
    "lorenz96-4": _lorenz96(4),
    "lorenz96-5": _lorenz96(5),
    "fhn2": _fhn(2),
    "fhn40": _fhn(40),
}


def preset(name: str, scale: str = "desk") -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown example {name!r}; choose from {sorted(PRESETS)}")
    if scale not in SCALES:
        raise ConfigError(f"scale must be one of {SCALES}")
    cfg = PRESETS[name](scale)
    cfg.out = f"runs/{name}-{scale}"
    return cfg.check()
