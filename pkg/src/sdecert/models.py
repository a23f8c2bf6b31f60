"""SDE models dX = f(X) dt + sigma(X) dW and the built-in benchmark catalog.

All drift/diffusion callables are vectorized over leading axes: a state batch
of shape ``(..., n)`` maps to a drift of shape ``(..., n)``.  Catalog models
are built from module-level functions bound with :func:`functools.partial`
so they pickle cleanly into worker processes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional

import numpy as np
from scipy import integrate


class ModelError(ValueError):
    pass


@dataclass
class SdeModel:
    name: str
    dim: int
    noise_dim: int
    drift_fn: Callable[[np.ndarray], np.ndarray]
    sigma: Optional[np.ndarray] = None
    diffusion_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # d sigma_ii / d x_i, needed by the diagonal-noise Milstein correction
    diffusion_diag_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)
    density_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.sigma is None and self.diffusion_fn is None:
            raise ModelError("model needs either a constant sigma or a diffusion_fn")
        if self.sigma is not None:
            self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
            if self.sigma.shape != (self.dim, self.noise_dim):
                raise ModelError(
                    f"sigma has shape {self.sigma.shape}, expected {(self.dim, self.noise_dim)}")

    @property
    def constant_diffusion(self) -> bool:
        return self.sigma is not None

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ModelError(f"{self.name}: state has trailing dim {x.shape[-1:]}, expected {self.dim}")
        return x

    def drift(self, x):
        return self.drift_fn(self._check(x))

    def diffusion(self, x):
        x = self._check(x)
        if self.sigma is not None:
            return np.broadcast_to(self.sigma, x.shape[:-1] + self.sigma.shape)
        return self.diffusion_fn(x)

    def density(self, x):
        if self.density_fn is None:
            raise ModelError(f"{self.name} has no known invariant density")
        return self.density_fn(self._check(x))


@dataclass
class LangevinModel(SdeModel):
    """Underdamped Langevin dX = V dt, dV = -grad U(X) dt - friction V dt + sigma dW.

    State layout is ``(X_1..X_k, V_1..V_k)``; noise acts on the velocity block only.
    """
    friction: float = 1.0
    grad_potential: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def n_pos(self) -> int:
        return self.dim // 2


# ---------------------------------------------------------------- ring

def ring_potential(x):
    return (np.sum(x * x, axis=-1) - 1.0) ** 2


def ring_drift(x):
    r2m1 = np.einsum("...i,...i->...", x, x)[..., None] - 1.0
    f = -4.0 * x * r2m1
    f[..., 0] += x[..., 1]
    f[..., 1] -= x[..., 0]
    return f


def _gibbs_density(x, potential, sigma):
    return np.exp(-2.0 * potential(x) / sigma**2)


def ring(sigma=0.5):
    return SdeModel(
        name="ring", dim=2, noise_dim=2, drift_fn=ring_drift,
        sigma=sigma * np.eye(2), params={"sigma": sigma},
        density_fn=partial(_gibbs_density, potential=ring_potential, sigma=sigma),
    )


def ring_normalizer(sigma):
    """K = pi * int_{-1}^inf exp(-2 t^2 / sigma^2) dt, the ring density's normalizer on R^2."""
    val, _ = integrate.quad(lambda t: np.exp(-2.0 * t * t / sigma**2), -1.0, np.inf)
    return np.pi * val


# ---------------------------------------------------------------- double well

def double_well_potential(x, r):
    x = np.asarray(x, dtype=float)[..., 0]
    return np.select(
        [x >= 4.0, x >= 0.0, x >= -4.0 / r],
        [6 * x**2 - 60, 0.25 * x**4 - 2 * x**2 + 4, 0.25 * r**4 * x**4 - 2 * r**2 * x**2 + 4],
        6 * r**2 * x**2 - 60,
    )


def double_well_grad(x, r):
    x = np.asarray(x, dtype=float)[..., 0]
    g = np.select(
        [x >= 4.0, x >= 0.0, x >= -4.0 / r],
        [12 * x, x**3 - 4 * x, r**4 * x**3 - 4 * r**2 * x],
        12 * r**2 * x,
    )
    return g[..., None]


def double_well_drift(x, r):
    return -double_well_grad(x, r)


def double_well(r=5.0, sigma=1.2):
    pot = partial(double_well_potential, r=r)
    return SdeModel(
        name="double-well", dim=1, noise_dim=1,
        drift_fn=partial(double_well_drift, r=r),
        sigma=np.array([[sigma]]), params={"r": r, "sigma": sigma},
        density_fn=partial(_gibbs_density, potential=pot, sigma=sigma),
    )


# ---------------------------------------------------------------- Langevin ring

def langevin_ring_grad(q):
    return 4.0 * q * (np.sum(q * q, axis=-1, keepdims=True) - 1.0)


def langevin_drift(x, friction, grad_potential):
    k = x.shape[-1] // 2
    q, p = x[..., :k], x[..., k:]
    return np.concatenate([p, -grad_potential(q) - friction * p], axis=-1)


def langevin_density(x, friction, sigma):
    # Gibbs measure exp(-beta H) with H = |V|^2/2 + U(X) and beta = 2 friction / sigma^2
    k = x.shape[-1] // 2
    beta = 2.0 * friction / sigma**2
    q, p = x[..., :k], x[..., k:]
    return np.exp(-beta * (0.5 * np.sum(p * p, axis=-1) + ring_potential(q)))


def langevin_position_density(q, friction, sigma):
    return np.exp(-2.0 * friction / sigma**2 * ring_potential(q))


def langevin_ring(sigma=0.5, gamma=1.0):
    sig = np.zeros((4, 2))
    sig[2:, :] = sigma * np.eye(2)
    return LangevinModel(
        name="langevin-ring", dim=4, noise_dim=2,
        drift_fn=partial(langevin_drift, friction=gamma, grad_potential=langevin_ring_grad),
        sigma=sig, params={"sigma": sigma, "gamma": gamma},
        density_fn=partial(langevin_density, friction=gamma, sigma=sigma),
        friction=gamma, grad_potential=langevin_ring_grad,
    )


# ---------------------------------------------------------------- Lorenz 96

def lorenz96_drift(x, forcing):
    # cyclic indices: X^0 = X^D, X^-1 = X^(D-1), X^(D+1) = X^1
    return (np.roll(x, -1, axis=-1) - np.roll(x, 2, axis=-1)) * np.roll(x, 1, axis=-1) - x + forcing


def lorenz96(dim=4, forcing=8.0, sigma=3.0):
    dim = int(dim)
    if dim < 4:
        raise ModelError("Lorenz-96 needs at least 4 variables")
    return SdeModel(
        name="lorenz96", dim=dim, noise_dim=dim,
        drift_fn=partial(lorenz96_drift, forcing=forcing),
        sigma=sigma * np.eye(dim), params={"dim": dim, "forcing": forcing, "sigma": sigma},
    )


# ---------------------------------------------------------------- FitzHugh-Nagumo ring

def fhn_drift(x, d_u, w, a, mu):
    n = x.shape[-1] // 2
    u, v = x[..., :n], x[..., n:]
    lap = np.roll(u, 1, axis=-1) + np.roll(u, -1, axis=-1) - 2.0 * u
    ubar = u.mean(axis=-1, keepdims=True)
    sq = np.sqrt(mu)
    du = (u - u**3 / 3.0) / mu - v / sq + d_u / mu * lap + w / mu * (ubar - u)
    dv = (u + a) / sq
    return np.concatenate([du, dv], axis=-1)


def fhn(n_neurons=2, d_u=0.03, w=0.3, sigma=0.6, a=1.05, mu=0.1):
    n = int(n_neurons)
    return SdeModel(
        name="fhn", dim=2 * n, noise_dim=2 * n,
        drift_fn=partial(fhn_drift, d_u=d_u, w=w, a=a, mu=mu),
        sigma=sigma / np.sqrt(mu) * np.eye(2 * n),
        params={"n_neurons": n, "d_u": d_u, "w": w, "sigma": sigma, "a": a, "mu": mu},
    )


# ---------------------------------------------------------------- catalog

@dataclass(frozen=True)
class ModelCatalogEntry:
    name: str
    factory: Callable[..., SdeModel]
    default_params: dict
    omega_lower: tuple
    omega_upper: tuple
    default_h: float
    default_T: float

    def make(self, **params) -> SdeModel:
        kw = {**self.default_params, **params}
        return self.factory(**kw)

    def omega(self, **params):
        """Default box; Lorenz-96 and FHN boxes repeat per coordinate."""
        model = self.make(**params)
        lo = np.asarray(self.omega_lower, dtype=float)
        hi = np.asarray(self.omega_upper, dtype=float)
        if lo.size == 1:
            lo, hi = np.full(model.dim, lo[0]), np.full(model.dim, hi[0])
        return lo, hi


CATALOG = {
    "ring": ModelCatalogEntry("ring", ring, {"sigma": 0.5}, (-2, -2), (2, 2), 1e-3, 10.0),
    "double-well": ModelCatalogEntry("double-well", double_well, {"r": 5.0, "sigma": 1.2},
                                     (-2,), (4,), 2.5e-3, 50.0),
    "langevin-ring": ModelCatalogEntry("langevin-ring", langevin_ring, {"sigma": 0.5, "gamma": 1.0},
                                       (-3, -3, -6, -6), (3, 3, 6, 6), 1e-3, 40.0),
    "lorenz96": ModelCatalogEntry("lorenz96", lorenz96, {"dim": 4, "forcing": 8.0, "sigma": 3.0},
                                  (-16,), (19,), 1e-4, 3.0),
    "fhn": ModelCatalogEntry("fhn", fhn, {"n_neurons": 2, "d_u": 0.03, "w": 0.3, "sigma": 0.6,
                                          "a": 1.05, "mu": 0.1}, (-6,), (6,), 5e-4, 3.0),
}


def make_model(name: str, **params) -> SdeModel:
    try:
        entry = CATALOG[name]
    except KeyError:
        raise ModelError(f"unknown model {name!r}; choose from {sorted(CATALOG)}") from None
    return entry.make(**params)


def drift(model: SdeModel, x):
    return model.drift(x)


def diffusion(model: SdeModel, x):
    return model.diffusion(x)


def analytic_density(model: SdeModel, x):
    """Unnormalized invariant density at x."""
    return model.density(x)


def density_normalizer(density: Callable, lower, upper, **quad_kw) -> float:
    """Integral of ``density`` over the box [lower, upper] by adaptive quadrature (dim <= 2)."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.size == 1:
        val, _ = integrate.quad(lambda t: float(density(np.array([t]))), lower[0], upper[0],
                                limit=quad_kw.pop("limit", 400), **quad_kw)
        return val
    if lower.size == 2:
        val, _ = integrate.dblquad(lambda y, x: float(density(np.array([x, y]))),
                                   lower[0], upper[0], lower[1], upper[1], **quad_kw)
        return val
    raise ModelError("quadrature normalizer supports 1D and 2D boxes only")
