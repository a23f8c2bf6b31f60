"""Finite-time error, contraction rate, tail rate and the assembled bounds.

The bound on d_w(pi, pi_hat) is (E + 2 eps) / (1 - alpha) where E is the
finite-time error from common-noise extrapolation and alpha the contraction of
the time-T kernel over Omega x Omega, estimated from coupling probabilities and
a generalized Pareto endpoint.  The rough variant replaces alpha by exp(-gamma T)
with gamma the exponential tail rate of the coupling time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coupling import CouplingPolicy, CouplingTimes, coupling_times, with_defaults
from .evt import (N_MIN, REMEDY, EstimatorFailure, GpdFit, GpdFitError, ThresholdError,
                  fit_gpd, gpd_upper_endpoint, select_threshold)
from .integrate import (PURPOSE, DivergenceError, NoiseStream, extrapolation_constant,
                        n_steps, paired_fine_coarse, strong_order)
from .models import SdeModel
from .parallel import map_chunks


@dataclass(frozen=True)
class CappedDistance:
    """d(x, y) = min(cap, |x - y|^exponent)."""
    cap: float = 1.0
    exponent: float = 1.0

    def __post_init__(self):
        if self.cap <= 0 or self.exponent <= 0:
            raise ValueError("cap and exponent must be positive")

    def __call__(self, x, y):
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return np.minimum(self.cap, np.linalg.norm(diff, axis=-1) ** self.exponent)


def capped_distance(d: CappedDistance, x, y):
    x, y = np.asarray(x), np.asarray(y)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError("dimension mismatch")
    return d(x, y)


@dataclass
class OmegaBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise ValueError("Omega needs lower < upper componentwise")

    @property
    def dim(self) -> int:
        return self.lower.size

    def sample(self, rng, size):
        return self.lower + (self.upper - self.lower) * rng.random((size, self.dim))

    def contains(self, x):
        x = np.asarray(x)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)


def derive_omega_and_epsilon(samples, margin: float = 0.05):
    """Bounding box of a long trajectory, widened by ``margin`` of its width per side; eps = 1/count."""
    s = np.atleast_2d(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ValueError("empty trajectory")
    return omega_from_bounds(s.min(axis=0), s.max(axis=0), s.shape[0], margin)


def omega_from_bounds(lo, hi, count, margin=0.05):
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    pad = margin * (hi - lo)
    return OmegaBox(lo - pad, hi + pad), 1.0 / count


# ---------------------------------------------------------------- finite-time error

@dataclass
class FiniteTimeResult:
    estimate: float
    errors: np.ndarray          # (n_chains, segments_per_chain) scaled distances y_i
    constant: float
    h: float
    T: float
    box_lower: np.ndarray
    box_upper: np.ndarray
    n_samples: int              # trajectory length in units of sample_interval
    final_states: np.ndarray

    @property
    def n_segments(self) -> int:
        return self.errors.size

    @property
    def stderr(self) -> float:
        # chains are independent; segments within a chain are treated as weakly correlated
        per_chain = self.errors.mean(axis=1)
        if per_chain.size < 2:
            return float("nan")
        return float(per_chain.std(ddof=1) / math.sqrt(per_chain.size))


def _finite_time_chunk(task):
    model, scheme, h, T, x0, nseg, burn_in, stream = task
    rng = stream.generator()
    x = np.array(x0, dtype=float)
    lo = np.full(model.dim, np.inf)
    hi = np.full(model.dim, -np.inf)
    track = [False]

    def on_step(xf):
        if track[0]:
            np.minimum(lo, xf.min(axis=0), out=lo)
            np.maximum(hi, xf.max(axis=0), out=hi)

    out = np.empty((nseg, x.shape[0]))
    for s in range(burn_in + nseg):
        track[0] = s >= burn_in
        try:
            fine, coarse = paired_fine_coarse(model, x, h, T, rng, scheme, on_fine_step=on_step)
        except DivergenceError as err:
            done = max(s - burn_in, 0)
            raise DivergenceError(f"segment {s} of stream {stream.stream_id} diverged",
                                  time=(s + 1) * T, partial=out[:done].T.copy()) from err
        if s >= burn_in:
            out[s - burn_in] = np.linalg.norm(fine - coarse, axis=-1)
        x = fine
    return out.T, lo, hi, x


def finite_time_error(model: SdeModel, h: float, T: float, n_segments: int, seed: int = 0,
                      scheme: str = "euler-maruyama", order: Optional[float] = None,
                      n_chains: Optional[int] = None, chains_per_chunk: int = 256,
                      burn_in: int = 1, x0=None, omega: Optional[OmegaBox] = None,
                      workers: Optional[int] = 1, sample_interval: float = 1.0) -> FiniteTimeResult:
    """Chained common-noise extrapolation of d(X_T, X^h_T).

    ``n_chains`` independent chains each run ``ceil(n_segments / n_chains)``
    consecutive segments of length T after ``burn_in`` discarded segments; the
    start of each segment is the previous fine endpoint.
    """
    n_steps(T, h, multiple=2)
    if n_segments < 1:
        raise ValueError("need at least one segment")
    n_chains = min(n_segments, 1024) if n_chains is None else int(n_chains)
    spc = math.ceil(n_segments / n_chains)
    order = strong_order(model, scheme) if order is None else order
    c = extrapolation_constant(order)

    base = NoiseStream(seed, 0, PURPOSE["finite-error"])
    if x0 is not None:
        starts = np.broadcast_to(np.asarray(x0, dtype=float), (n_chains, model.dim)).copy()
    elif omega is not None:
        starts = omega.sample(base.derive(2**31).generator(), n_chains)
    else:
        starts = np.zeros((n_chains, model.dim))

    tasks = []
    for i, a in enumerate(range(0, n_chains, chains_per_chunk)):
        tasks.append((model, scheme, h, T, starts[a:a + chains_per_chunk], spc, burn_in,
                      base.derive(i)))
    results = map_chunks(_finite_time_chunk, tasks, workers)
    errors = c * np.concatenate([r[0] for r in results], axis=0)
    lo = np.min([r[1] for r in results], axis=0)
    hi = np.max([r[2] for r in results], axis=0)
    final = np.concatenate([r[3] for r in results], axis=0)
    n_samples = max(1, int(round(errors.size * T / sample_interval)))
    return FiniteTimeResult(float(errors.mean()), errors, c, h, T, lo, hi, n_samples, final)


# ---------------------------------------------------------------- contraction rate

@dataclass
class ContractionSample:
    x: np.ndarray
    y: np.ndarray
    coupled: int
    replicates: int
    r: float
    v: float


@dataclass
class ContractionSamples:
    """Per-pair coupling statistics; r = P[tau > T] / d(x, y) with P from M replicates."""
    x: np.ndarray
    y: np.ndarray
    distance: np.ndarray
    coupled: np.ndarray
    replicates: int
    h: float
    T: float
    steps: Optional[np.ndarray] = None      # (N, M) coupling steps, -1 if censored
    diverged: int = 0

    @property
    def r(self) -> np.ndarray:
        return (self.replicates - self.coupled) / (self.replicates * self.distance)

    @property
    def v(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / (1.0 - self.r)

    def __len__(self):
        return self.coupled.size

    def __getitem__(self, i) -> ContractionSample:
        return ContractionSample(self.x[i], self.y[i], int(self.coupled[i]), self.replicates,
                                 float(self.r[i]), float(self.v[i]))

    def coupling_times(self) -> CouplingTimes:
        if self.steps is None:
            raise ValueError("coupling steps were not kept")
        s = self.steps.ravel()
        return CouplingTimes(s, np.zeros(s.size, dtype=bool), self.h, self.T)


def draw_pairs(omega: OmegaBox, n_pairs: int, distance: CappedDistance, stream: NoiseStream):
    """Uniform pairs on Omega x Omega; zero-distance pairs are redrawn."""
    rng = stream.generator()
    x = omega.sample(rng, n_pairs)
    y = omega.sample(rng, n_pairs)
    d = distance(x, y)
    while np.any(d <= 0):
        bad = d <= 0
        x[bad] = omega.sample(rng, int(bad.sum()))
        y[bad] = omega.sample(rng, int(bad.sum()))
        d = distance(x, y)
    return x, y, d


def _coupling_chunk(task):
    model, policy, h, T, x, y, m, stream = task
    ct = coupling_times(model, policy, np.repeat(x, m, axis=0), np.repeat(y, m, axis=0),
                        h, T, stream)
    steps = ct.steps.reshape(-1, m).astype(np.int32)
    return steps, int(ct.diverged.sum())


def sample_contraction_ratios(model: SdeModel, policy: CouplingPolicy, omega: OmegaBox,
                              distance: CappedDistance, h: float, T: float, n_pairs: int,
                              m_replicates: int, seed: int = 0, workers: Optional[int] = 1,
                              chunk_runs: int = 20000, pairs=None) -> ContractionSamples:
    """Run M coupled replicates from each of N uniform pairs in Omega x Omega until min(tau, T)."""
    if n_pairs < 1 or m_replicates < 1:
        raise ValueError("N and M must be at least 1")
    n_steps(T, h)
    policy = with_defaults(policy, model, h)
    if pairs is None:
        x, y, d = draw_pairs(omega, n_pairs, distance, NoiseStream(seed, 0, PURPOSE["pairs"]))
    else:
        x, y = (np.asarray(p, dtype=float) for p in pairs)
        d = distance(x, y)
        if np.any(d <= 0):
            raise ValueError("initial pairs must be distinct")
    per_chunk = max(1, chunk_runs // m_replicates)
    base = NoiseStream(seed, 0, PURPOSE["coupling"])
    tasks = [(model, policy, h, T, x[a:a + per_chunk], y[a:a + per_chunk], m_replicates,
              base.derive(i))
             for i, a in enumerate(range(0, x.shape[0], per_chunk))]
    results = map_chunks(_coupling_chunk, tasks, workers)
    steps = np.concatenate([r[0] for r in results], axis=0)
    coupled = np.count_nonzero(steps >= 0, axis=1)
    return ContractionSamples(x, y, d, coupled, m_replicates, h, T, steps,
                              sum(r[1] for r in results))


@dataclass
class ContractionRate:
    alpha: float
    threshold: Optional[float] = None
    fit: Optional[GpdFit] = None
    v_max: Optional[float] = None
    exceedances: Optional[np.ndarray] = None
    note: str = ""


def contraction_rate(samples, exceedance_fraction: float = 0.05,
                     n_min: int = N_MIN) -> ContractionRate:
    """alpha_Omega = 1 - 1/v_max with v_max the GPD endpoint of v = 1/(1 - r).

    ``samples`` is a :class:`ContractionSamples` or an array of ratios r.
    Raises :class:`EstimatorFailure` when max r >= 1 or the fitted shape is >= 0.
    """
    r = samples.r if isinstance(samples, ContractionSamples) else np.asarray(samples, dtype=float)
    if r.size == 0:
        raise ValueError("no contraction samples")
    if r.max() >= 1.0:
        raise EstimatorFailure(f"max r_i = {r.max():.4g} >= 1. {REMEDY}")
    if np.all(r == 0):
        return ContractionRate(0.0, note="every replicate coupled before T; "
                                         "no contraction evidence needed")
    v = 1.0 / (1.0 - r)
    try:
        threshold = select_threshold(v, exceedance_fraction, n_min)
    except ThresholdError as err:
        raise EstimatorFailure(f"threshold selection failed ({err}). {REMEDY}") from err
    exc = v[v > threshold] - threshold
    try:
        fit = fit_gpd(exc, threshold=threshold, n_min=n_min)
    except GpdFitError as err:
        raise EstimatorFailure(f"GPD fit failed ({err}). {REMEDY}") from err
    v_max = gpd_upper_endpoint(fit)
    return ContractionRate(1.0 - 1.0 / v_max, threshold, fit, v_max, exc)


# ---------------------------------------------------------------- tail rate

@dataclass
class TailRate:
    times: np.ndarray
    survival: np.ndarray
    gamma: float
    intercept: float
    window: tuple = (0.01, 0.5)
    n_fit_points: int = 0


def _as_taus(outcomes):
    if isinstance(outcomes, CouplingTimes):
        return outcomes.tau, outcomes.horizon
    if isinstance(outcomes, ContractionSamples):
        ct = outcomes.coupling_times()
        return ct.tau, ct.horizon
    if len(outcomes) and hasattr(outcomes[0], "horizon"):
        taus = np.array([o.tau if o.coupled else np.inf for o in outcomes], dtype=float)
        return taus, max(o.horizon for o in outcomes)
    return np.asarray(outcomes, dtype=float), None


def survival_and_tail_rate(outcomes, fit_window=(0.01, 0.5), horizon: Optional[float] = None,
                           n_points: int = 1001) -> TailRate:
    """Empirical S(t) = P[tau > t] and gamma = -slope of log S over S in ``fit_window``."""
    taus, hz = _as_taus(outcomes)
    horizon = horizon if horizon is not None else hz
    if horizon is None:
        finite = taus[np.isfinite(taus)]
        if finite.size == 0:
            raise ValueError("no coupling events and no horizon given")
        horizon = float(finite.max())
    taus = np.sort(taus)
    times = np.linspace(0.0, horizon, n_points)
    surv = 1.0 - np.searchsorted(taus, times, side="right") / taus.size
    lo, hi = fit_window
    mask = (surv >= lo) & (surv <= hi) & (surv > 0)
    if np.count_nonzero(mask) < 2:
        raise ValueError(f"no survival mass inside the fit window {fit_window}")
    slope, intercept = np.polyfit(times[mask], np.log(surv[mask]), 1)
    return TailRate(times, surv, float(-slope), float(intercept), tuple(fit_window),
                    int(np.count_nonzero(mask)))


# ---------------------------------------------------------------- bounds

@dataclass
class CertifiedBound:
    finite_time_error: float
    epsilon: float
    bound: float
    mode: str
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    T: Optional[float] = None
    extras: dict = field(default_factory=dict)


def certified_bound(E: float, epsilon: float, alpha: float, cap: float = 1.0) -> CertifiedBound:
    """(min(E, cap) + 2 eps) / (1 - alpha)."""
    if not 0 <= alpha < 1:
        raise EstimatorFailure(f"alpha = {alpha} outside [0, 1). {REMEDY}")
    if E < 0 or epsilon < 0:
        raise ValueError("E and epsilon must be nonnegative")
    e = min(E, cap)
    return CertifiedBound(E, epsilon, (e + 2 * epsilon) / (1 - alpha), "certified", alpha=alpha)


def rough_bound(E: float, epsilon: float, gamma: float, T: float, cap: float = 1.0) -> CertifiedBound:
    """(min(E, cap) + 2 eps) / (1 - exp(-gamma T))."""
    if gamma <= 0 or T <= 0:
        raise ValueError("gamma and T must be positive")
    if E < 0 or epsilon < 0:
        raise ValueError("E and epsilon must be nonnegative")
    e = min(E, cap)
    return CertifiedBound(E, epsilon, (e + 2 * epsilon) / (-math.expm1(-gamma * T)), "rough",
                          gamma=gamma, T=T)
