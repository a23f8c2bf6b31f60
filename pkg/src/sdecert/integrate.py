"""Time stepping, replayable noise streams and common-noise fine/coarse pairs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import LangevinModel, ModelError, SdeModel


class DivergenceError(RuntimeError):
    """A trajectory left the finite reals. ``time`` is the first time a non-finite state was seen."""

    def __init__(self, message, time=None, partial=None):
        super().__init__(message)
        self.time = time
        self.partial = partial


# purpose tags keep the phases of a run on disjoint streams
PURPOSE = {"finite-error": 1, "pairs": 2, "coupling": 3, "tail": 4, "validate": 5, "test": 99}


@dataclass(frozen=True)
class NoiseStream:
    """Counter-based (Philox) Gaussian stream keyed by (master_seed, purpose, stream_id).

    Distinct keys give independent streams; the same key replays bit-for-bit.
    """
    master_seed: int
    stream_id: int = 0
    purpose: int = 0

    def generator(self, counter: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.master_seed) & (2**64 - 1),
                                    spawn_key=(int(self.purpose), int(self.stream_id)))
        key = ss.generate_state(2, dtype=np.uint64)
        bg = np.random.Philox(key=key)
        if counter:
            bg = bg.advance(counter)
        return np.random.Generator(bg)

    def derive(self, stream_id: int, purpose=None) -> "NoiseStream":
        return NoiseStream(self.master_seed, stream_id,
                           self.purpose if purpose is None else purpose)


def as_generator(stream) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, NoiseStream):
        return stream.generator()
    return np.random.default_rng(stream)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray


@dataclass
class GaussianParams:
    mean: np.ndarray
    cov: np.ndarray

    def logpdf(self, x):
        """Log density, up to nothing: includes the normalizing constant."""
        x = np.asarray(x, dtype=float)
        chol = np.linalg.cholesky(self.cov)
        z = np.linalg.solve(chol, (x - self.mean).T).T
        k = self.mean.shape[-1]
        return (-0.5 * np.sum(z * z, axis=-1) - np.log(np.diag(chol)).sum()
                - 0.5 * k * np.log(2 * np.pi))


def n_steps(T: float, h: float, multiple: int = 1) -> int:
    """Number of steps of size h in [0, T]; T must be an integer multiple of ``multiple * h``."""
    if h <= 0 or T <= 0:
        raise ValueError("h and T must be positive")
    n = int(round(T / h))
    if abs(n * h - T) > 1e-9 * max(T, 1.0) or n % multiple:
        raise ValueError(f"T={T} is not an integer multiple of {multiple}*h={multiple * h}")
    return n


# ---------------------------------------------------------------- schemes

def _noise_term(model: SdeModel, x, dW):
    if model.constant_diffusion:
        return dW @ model.sigma.T
    return np.einsum("...ij,...j->...i", model.diffusion_fn(x), dW)


def em_step(model: SdeModel, x, h: float, dW):
    """x + f(x) h + sigma(x) dW."""
    x = np.asarray(x, dtype=float)
    dW = np.asarray(dW, dtype=float)
    if h <= 0:
        raise ValueError("h must be positive")
    if dW.shape[-1:] != (model.noise_dim,):
        raise ModelError(f"dW has trailing dim {dW.shape[-1:]}, expected {model.noise_dim}")
    return x + model.drift(x) * h + _noise_term(model, x, dW)


def milstein_step(model: SdeModel, x, h: float, dW):
    """EM step plus the diagonal-noise correction 1/2 sigma_ii d_i sigma_ii (dW_i^2 - h).

    With constant sigma this is exactly :func:`em_step`.
    """
    out = em_step(model, x, h, dW)
    if model.constant_diffusion:
        return out
    if model.diffusion_diag_grad is None or model.dim != model.noise_dim:
        raise ModelError("Milstein needs diagonal diffusion with a hand-coded diffusion_diag_grad")
    x = np.asarray(x, dtype=float)
    s = model.diffusion_fn(x)
    off = s - s * np.eye(model.dim)
    if np.any(off != 0):
        raise ModelError("Milstein here supports diagonal state-dependent diffusion only")
    diag = np.diagonal(s, axis1=-2, axis2=-1)
    return out + 0.5 * diag * model.diffusion_diag_grad(x) * (np.asarray(dW) ** 2 - h)


SCHEMES: dict[str, Callable] = {"euler-maruyama": em_step, "milstein": milstein_step}


def get_scheme(name: str) -> Callable:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; choose from {sorted(SCHEMES)}") from None


def strong_order(model: SdeModel, scheme: str) -> float:
    if scheme == "milstein" or model.constant_diffusion:
        return 1.0
    return 0.5


def extrapolation_constant(order: float) -> float:
    """c in y = c d(X^h_T, X^2h_T): Richardson factor 1/(2^p - 1)."""
    return 1.0 / (2.0**order - 1.0)


# ---------------------------------------------------------------- drivers

def simulate(model: SdeModel, x0, h: float, T: float, stream, scheme="euler-maruyama"):
    """Single trajectory on the grid 0, h, ..., T."""
    step = get_scheme(scheme)
    rng = as_generator(stream)
    n = n_steps(T, h)
    states = np.empty((n + 1, model.dim))
    states[0] = x0
    sh = np.sqrt(h)
    for k in range(n):
        states[k + 1] = step(model, states[k], h, sh * rng.standard_normal(model.noise_dim))
        if not np.all(np.isfinite(states[k + 1])):
            raise DivergenceError("trajectory diverged", time=(k + 1) * h,
                                  partial=Trajectory(np.arange(k + 2) * h, states[:k + 2]))
    return Trajectory(np.arange(n + 1) * h, states)


def paired_fine_coarse(model: SdeModel, x0, h: float, T: float, stream,
                       scheme="euler-maruyama", on_fine_step=None):
    """Run step h and step 2h from the same x0 with the same Brownian path.

    The coarse increment is the sum of two consecutive fine increments.  ``x0``
    may be a batch ``(B, n)``; returns the terminal (fine, coarse) states.
    ``on_fine_step`` is called with each fine state (used for bounding boxes).
    """
    step = get_scheme(scheme)
    rng = as_generator(stream)
    n = n_steps(T, h, multiple=2)
    fine = np.array(x0, dtype=float)
    coarse = fine.copy()
    shape = fine.shape[:-1] + (model.noise_dim,)
    sh = np.sqrt(h)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n // 2):
            dw1 = sh * rng.standard_normal(shape)
            dw2 = sh * rng.standard_normal(shape)
            coarse = step(model, coarse, 2 * h, dw1 + dw2)
            fine = step(model, fine, h, dw1)
            if on_fine_step is not None:
                on_fine_step(fine)
            fine = step(model, fine, h, dw2)
            if on_fine_step is not None:
                on_fine_step(fine)
    if not (np.all(np.isfinite(fine)) and np.all(np.isfinite(coarse))):
        raise DivergenceError("fine/coarse pair diverged", time=T)
    return fine, coarse


# ---------------------------------------------------------------- Langevin two-step law

def langevin_two_step_cov(model: LangevinModel, h: float) -> np.ndarray:
    """Covariance of (X, V) after two EM steps; independent of the state.

    Two steps give X_2h - mean = sigma h^{3/2} N0 and
    V_2h - mean = sigma (1 - g h) h^{1/2} N0 + sigma h^{1/2} N1, per coordinate.
    """
    sigma = float(model.params["sigma"])
    if sigma <= 0:
        raise ModelError("two-step density is degenerate for sigma = 0")
    g = model.friction
    k = model.n_pos
    a = 1.0 - g * h
    vxx = sigma**2 * h**3
    vxv = sigma**2 * h**2 * a
    vvv = sigma**2 * h * (a * a + 1.0)
    eye = np.eye(k)
    return np.block([[vxx * eye, vxv * eye], [vxv * eye, vvv * eye]])


def langevin_two_step_mean(model: LangevinModel, state, h: float):
    """Noise-free composition of two EM steps (vectorized over leading axes)."""
    state = np.asarray(state, dtype=float)
    zero = np.zeros(state.shape[:-1] + (model.noise_dim,))
    return em_step(model, em_step(model, state, h, zero), h, zero)


def langevin_two_step_density(model: LangevinModel, state, h: float) -> GaussianParams:
    if not isinstance(model, LangevinModel):
        raise ModelError("two-step density is defined for Langevin models only")
    if h <= 0:
        raise ValueError("h must be positive")
    return GaussianParams(langevin_two_step_mean(model, state, h), langevin_two_step_cov(model, h))
