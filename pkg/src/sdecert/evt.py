"""Generalized Pareto peaks-over-threshold fitting and the upper-endpoint estimate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

REMEDY = "Choose better coupling algorithm or larger T"
N_MIN = 30


class EstimatorFailure(RuntimeError):
    """The contraction estimator cannot produce a bound; the message names the remedy."""


class ThresholdError(ValueError):
    pass


class GpdFitError(ValueError):
    pass


@dataclass
class GpdFit:
    threshold: float
    scale: float
    shape: float
    n_exceedances: int
    log_likelihood: float
    method: str = "mle"

    def cdf(self, x):
        return gpd_cdf(self.shape, self.scale, x)


def gpd_cdf(xi: float, beta: float, x):
    """F(x) = 1 - (1 + xi x / beta)^(-1/xi), or 1 - exp(-x / beta) when xi == 0."""
    if beta <= 0:
        raise ValueError("scale must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("GPD support starts at 0")
    if xi < 0 and np.any(x > -beta / xi * (1 + 1e-12)):
        raise ValueError(f"x beyond the right endpoint {-beta / xi}")
    if xi == 0:
        return -np.expm1(-x / beta)
    z = np.maximum(xi * x / beta, -1.0)
    with np.errstate(divide="ignore"):
        return -np.expm1(-np.log1p(z) / xi)


def gpd_ppf(xi: float, beta: float, p):
    p = np.asarray(p, dtype=float)
    if xi == 0:
        return -beta * np.log1p(-p)
    return beta / xi * np.expm1(-xi * np.log1p(-p))


def gpd_loglik(xi: float, beta: float, x) -> float:
    x = np.asarray(x, dtype=float)
    if beta <= 0:
        return -np.inf
    if xi == 0:
        return -x.size * math.log(beta) - x.sum() / beta
    z = 1.0 + xi * x / beta
    if np.any(z <= 0):
        return -np.inf
    return -x.size * math.log(beta) - (1.0 + 1.0 / xi) * np.log(z).sum()


def select_threshold(samples, exceedance_fraction: float = 0.05, n_min: int = N_MIN) -> float:
    """Lower empirical (1 - fraction) quantile: the order statistic at ceil((1 - f) n)."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise ThresholdError("no samples")
    if not 0 < exceedance_fraction < 1:
        raise ValueError("exceedance_fraction must lie in (0, 1)")
    rank = max(1, math.ceil((1.0 - exceedance_fraction) * s.size - 1e-9))
    threshold = float(s[rank - 1])
    n_exc = int(np.count_nonzero(s > threshold))
    if n_exc < max(n_min, 1):
        raise ThresholdError(f"only {n_exc} samples exceed threshold {threshold} (need {n_min})")
    return threshold


def fit_gpd_pwm(exceedances, threshold: float = 0.0) -> GpdFit:
    """Probability-weighted-moment estimate (Hosking & Wallis plotting positions)."""
    x = np.sort(np.asarray(exceedances, dtype=float))
    n = x.size
    a0 = x.mean()
    p = (np.arange(1, n + 1) - 0.35) / n
    a1 = np.mean((1.0 - p) * x)
    k = a0 / (a0 - 2.0 * a1) - 2.0
    scale = 2.0 * a0 * a1 / (a0 - 2.0 * a1)
    xi = -k
    if scale <= 0 or not np.isfinite(scale):
        raise GpdFitError("PWM produced a nonpositive scale")
    if xi < 0:
        # keep the data inside the fitted support
        scale = max(scale, -xi * x[-1] * (1 + 1e-9))
    return GpdFit(threshold, float(scale), float(xi), n, float(gpd_loglik(xi, scale, x)), "pwm")


def _xi_of_theta(theta, x):
    return np.mean(np.log1p(theta * x))


def _profile_nll(theta, x):
    n = x.size
    if abs(theta) < 1e-12:
        m = x.mean()
        return n * math.log(m) + n
    xi = _xi_of_theta(theta, x)
    scale = xi / theta
    if not np.isfinite(xi) or scale <= 0:
        return np.inf
    return n * math.log(scale) + n * (xi + 1.0)


def fit_gpd(exceedances, threshold: float = 0.0, n_min: int = N_MIN) -> GpdFit:
    """Maximum-likelihood GPD fit via the one-parameter profile in theta = xi / scale.

    The search is restricted to xi >= -1, where the likelihood has a maximum;
    PWM seeds the scan.
    """
    x = np.asarray(exceedances, dtype=float).ravel()
    if x.size < n_min:
        raise GpdFitError(f"{x.size} exceedances, need at least {n_min}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise GpdFitError("exceedances must be finite and nonnegative")
    if np.ptp(x) <= 1e-14 * max(abs(x.max()), 1.0):
        raise GpdFitError("degenerate exceedances (all equal)")
    xmax = x.max()

    lo_edge = -1.0 / xmax
    # xi(theta) increases from -inf at theta -> -1/xmax to 0 at theta = 0
    edge = lo_edge * (1 - 1e-12)
    if _xi_of_theta(edge, x) >= -1.0:
        theta_lo = edge
    else:
        theta_lo = optimize.brentq(lambda t: _xi_of_theta(t, x) + 1.0, edge, 0.0,
                                   xtol=1e-14 / xmax)
    theta_hi = 1.0 / x.mean()
    while _xi_of_theta(theta_hi, x) < 3.0:
        theta_hi *= 4.0

    grid = np.concatenate([np.linspace(theta_lo, 0.0, 200, endpoint=False),
                           np.geomspace(1e-6 * theta_hi, theta_hi, 200)])
    try:
        pwm = fit_gpd_pwm(x)
        t0 = pwm.shape / pwm.scale
        if theta_lo < t0 < theta_hi:
            grid = np.append(grid, t0)
    except GpdFitError:
        pass
    nll = np.array([_profile_nll(t, x) for t in grid])
    order = np.argsort(grid)
    grid, nll = grid[order], nll[order]
    i = int(np.nanargmin(nll))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.size - 1)]
    theta = grid[i]
    if b > a:
        res = optimize.minimize_scalar(_profile_nll, bounds=(a, b), args=(x,), method="bounded",
                                       options={"xatol": 1e-12 * max(abs(a), abs(b))})
        if res.success and res.fun <= nll[i]:
            theta = res.x
    if abs(theta) < 1e-12:
        xi, scale = 0.0, x.mean()
    else:
        xi = _xi_of_theta(theta, x)
        scale = xi / theta
    ll = gpd_loglik(xi, scale, x)
    if not np.isfinite(ll):
        raise GpdFitError("maximum-likelihood search failed")
    return GpdFit(float(threshold), float(scale), float(xi), x.size, float(ll))


def gpd_upper_endpoint(fit: GpdFit) -> float:
    """V - scale / xi; only a finite endpoint when xi < 0."""
    if fit.shape >= 0:
        raise EstimatorFailure(f"GPD shape xi = {fit.shape:.4g} >= 0, no finite endpoint. {REMEDY}")
    return fit.threshold - fit.scale / fit.shape


def gpd_diagnostic_table(exceedances, fit: GpdFit) -> np.ndarray:
    """Rows (exceedance, empirical_cdf, fitted_cdf) sorted by exceedance."""
    x = np.sort(np.asarray(exceedances, dtype=float))
    emp = np.arange(1, x.size + 1) / x.size
    upper = -fit.scale / fit.shape if fit.shape < 0 else np.inf
    fitted = gpd_cdf(fit.shape, fit.scale, np.minimum(x, upper))
    return np.column_stack([x, emp, fitted])
