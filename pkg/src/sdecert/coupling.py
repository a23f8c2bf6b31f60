"""Markov couplings of two numerical trajectories and the coupling-time simulator.

Kernels act on batches: ``x1``, ``x2`` have shape ``(B, n)``.  A pair is only
ever declared coupled by the maximal-coupling acceptance, which sets both
states equal; closeness alone never counts.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .integrate import (as_generator, em_step, langevin_two_step_cov,
                        langevin_two_step_mean, n_steps)
from .models import LangevinModel, ModelError, SdeModel

KINDS = ("reflection", "synchronous", "maximal", "mixed", "langevin-mixed")


@dataclass
class CouplingPolicy:
    kind: str = "mixed"
    # mixed: reflection while |x1 - x2| >= switch_threshold; default 2 sqrt(h) |sigma|_2
    switch_threshold: Optional[float] = None
    # langevin-mixed: reflect while |Q| > q_switch; default 0.08 at h = 1e-3, scaled as sqrt(h)
    q_switch: Optional[float] = None
    window_multiplier: float = 2.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown coupling kind {self.kind!r}; choose from {KINDS}")
        for name in ("switch_threshold", "q_switch", "window_multiplier"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class CoupledState:
    x1: np.ndarray
    x2: np.ndarray
    coupled: bool = False
    t: float = 0.0


@dataclass
class CouplingOutcome:
    coupled: bool
    tau: Optional[float]
    horizon: float
    diverged: bool = False


def default_switch_threshold(model: SdeModel, h: float) -> float:
    return 2.0 * np.sqrt(h) * np.linalg.norm(model.sigma, 2)


def default_q_switch(h: float) -> float:
    return 0.08 * np.sqrt(h / 1e-3)


class _Kernel:
    """Per-(model, h) constants shared by the batch steps."""

    def __init__(self, model: SdeModel, policy: CouplingPolicy, h: float):
        if not model.constant_diffusion:
            raise ModelError("couplings here require constant diffusion")
        self.model, self.policy, self.h = model, policy, h
        self.sqrt_h = np.sqrt(h)
        sig = model.sigma
        self.sigma_inv = None
        if sig.shape[0] == sig.shape[1] and np.linalg.matrix_rank(sig) == sig.shape[0]:
            self.sigma_inv = np.linalg.inv(sig)
            # whitening for the one-step density N(mu, sigma sigma^T h)
            self.whiten = np.linalg.inv(np.linalg.cholesky(sig @ sig.T * h))
        if isinstance(model, LangevinModel):
            self.sig_v = float(model.params["sigma"])
            self.whiten2 = np.linalg.inv(np.linalg.cholesky(langevin_two_step_cov(model, h)))
            self.q_switch = policy.q_switch if policy.q_switch is not None else default_q_switch(h)
        if policy.kind in ("reflection", "mixed", "maximal") and self.sigma_inv is None:
            raise ModelError(f"{policy.kind} coupling needs square invertible sigma")
        if policy.kind == "langevin-mixed" and not isinstance(model, LangevinModel):
            raise ModelError("langevin-mixed coupling needs a Langevin model")
        self.threshold = (policy.switch_threshold if policy.switch_threshold is not None
                          else (default_switch_threshold(model, h) if self.sigma_inv is not None else 0.0))


def _rowdot(a, b):
    return np.einsum("ij,ij->i", a, b)


def _reflect(dw, e):
    return dw - (2.0 * _rowdot(dw, e))[:, None] * e


def _unit(v):
    nrm = np.sqrt(_rowdot(v, v))
    nrm[nrm == 0] = np.inf
    return v / nrm[:, None]


def _maximal_accept(z1, z2, mu1, mu2, whiten, rng):
    """Algorithm-3 acceptance: log r = -|l1(z1) - l2(z1)| - |l1(z2) - l2(z2)|."""
    def logp(z, mu):
        w = (z - mu) @ whiten.T
        return -0.5 * _rowdot(w, w)
    log_r = -np.abs(logp(z1, mu1) - logp(z1, mu2)) - np.abs(logp(z2, mu1) - logp(z2, mu2))
    u = rng.random(z1.shape[0])
    with np.errstate(divide="ignore"):
        return np.log(u) < np.minimum(log_r, 0.0)


# ---------------------------------------------------------------- batch steps

def _reflection_batch(kern, x1, x2, rng, dw=None):
    model = kern.model
    if dw is None:
        dw = kern.sqrt_h * rng.standard_normal((x1.shape[0], model.noise_dim))
    e = _unit((x1 - x2) @ kern.sigma_inv.T)
    return em_step(model, x1, kern.h, dw), em_step(model, x2, kern.h, _reflect(dw, e))


def _synchronous_batch(kern, x1, x2, rng, dw=None):
    model = kern.model
    if dw is None:
        dw = kern.sqrt_h * rng.standard_normal((x1.shape[0], model.noise_dim))
    return em_step(model, x1, kern.h, dw), em_step(model, x2, kern.h, dw)


def _maximal_batch(kern, x1, x2, rng, dw1=None):
    model, h = kern.model, kern.h
    b = x1.shape[0]
    if dw1 is None:
        dw1 = kern.sqrt_h * rng.standard_normal((b, model.noise_dim))
    dw2 = kern.sqrt_h * rng.standard_normal((b, model.noise_dim))
    mu1 = x1 + model.drift(x1) * h
    mu2 = x2 + model.drift(x2) * h
    z1 = mu1 + dw1 @ model.sigma.T
    z2 = mu2 + dw2 @ model.sigma.T
    hit = _maximal_accept(z1, z2, mu1, mu2, kern.whiten, rng)
    z1[hit] = z2[hit]
    return z1, z2, hit


def _mixed_batch(kern, x1, x2, rng):
    b = x1.shape[0]
    dw = kern.sqrt_h * rng.standard_normal((b, kern.model.noise_dim))
    d = x1 - x2
    near = np.flatnonzero(_rowdot(d, d) < kern.threshold**2)
    coupled = np.zeros(b, dtype=bool)
    # reflect everything, then overwrite the (few) rows inside the switch radius
    n1, n2 = _reflection_batch(kern, x1, x2, rng, dw)
    if near.size:
        m1, m2, hit = _maximal_batch(kern, x1[near], x2[near], rng, dw[near])
        n1[near], n2[near] = m1, m2
        coupled[near] = hit
    return n1, n2, coupled


def _langevin_batch(kern, x1, x2, rng, k, n_total):
    """One iteration of the Langevin policy; returns states, coupled mask, steps advanced."""
    model, h = kern.model, kern.h
    npos = model.n_pos
    b = x1.shape[0]
    c = kern.policy.window_multiplier
    dx = x1[:, :npos] - x2[:, :npos]
    dv = x1[:, npos:] - x2[:, npos:]
    window = (np.all(np.abs(dx) < c * kern.sig_v * h**1.5, axis=-1)
              & np.all(np.abs(dv) < c * kern.sig_v * h**0.5, axis=-1)
              & (k + 2 <= n_total))
    n1 = np.empty_like(x1)
    n2 = np.empty_like(x2)
    coupled = np.zeros(b, dtype=bool)
    advanced = np.where(window, 2, 1)

    rest = ~window
    if rest.any():
        dw = kern.sqrt_h * rng.standard_normal((int(rest.sum()), model.noise_dim))
        q = dx[rest] + dv[rest] / model.friction
        refl = (_rowdot(q, q) > kern.q_switch**2)[:, None]
        dw2 = np.where(refl, _reflect(dw, _unit(q)), dw)
        n1[rest] = em_step(model, x1[rest], h, dw)
        n2[rest] = em_step(model, x2[rest], h, dw2)
    if window.any():
        a, bb = x1[window], x2[window]
        m = a.shape[0]
        dws = kern.sqrt_h * rng.standard_normal((4, m, model.noise_dim))
        z1 = em_step(model, em_step(model, a, h, dws[0]), h, dws[1])
        z2 = em_step(model, em_step(model, bb, h, dws[2]), h, dws[3])
        mu1 = langevin_two_step_mean(model, a, h)
        mu2 = langevin_two_step_mean(model, bb, h)
        hit = _maximal_accept(z1, z2, mu1, mu2, kern.whiten2, rng)
        z1[hit] = z2[hit]
        n1[window], n2[window] = z1, z2
        coupled[window] = hit
    return n1, n2, coupled, advanced


def _policy_iteration(kern, x1, x2, rng, k, n_total):
    kind = kern.policy.kind
    if kind == "langevin-mixed":
        return _langevin_batch(kern, x1, x2, rng, k, n_total)
    if kind == "mixed":
        n1, n2, c = _mixed_batch(kern, x1, x2, rng)
    elif kind == "maximal":
        n1, n2, c = _maximal_batch(kern, x1, x2, rng)
    elif kind == "reflection":
        n1, n2 = _reflection_batch(kern, x1, x2, rng)
        c = np.zeros(x1.shape[0], dtype=bool)
    else:
        n1, n2 = _synchronous_batch(kern, x1, x2, rng)
        c = np.zeros(x1.shape[0], dtype=bool)
    return n1, n2, c, 1


@dataclass
class CouplingTimes:
    """Batch result: ``steps[i]`` is the coupling step (tau = steps * h) or -1 if censored."""
    steps: np.ndarray
    diverged: np.ndarray
    h: float
    horizon: float

    @property
    def tau(self) -> np.ndarray:
        return np.where(self.steps >= 0, self.steps * self.h, np.inf)

    @property
    def coupled(self) -> np.ndarray:
        return self.steps >= 0

    def outcomes(self) -> list:
        return [CouplingOutcome(bool(s >= 0), float(s * self.h) if s >= 0 else None,
                                self.horizon, bool(d))
                for s, d in zip(self.steps, self.diverged)]


def coupling_times(model: SdeModel, policy: CouplingPolicy, x, y, h: float, T: float,
                   stream, check_every: int = 64) -> CouplingTimes:
    """Run each pair (x[i], y[i]) until it couples or reaches T."""
    rng = as_generator(stream)
    kern = _Kernel(model, policy, h)
    n_total = n_steps(T, h)
    x1 = np.array(x, dtype=float, ndmin=2)
    x2 = np.array(y, dtype=float, ndmin=2)
    if x1.shape != x2.shape or x1.shape[1] != model.dim:
        raise ModelError("initial pairs must both have shape (B, dim)")
    b = x1.shape[0]
    steps = np.full(b, -1, dtype=np.int64)
    diverged = np.zeros(b, dtype=bool)
    same = np.all(x1 == x2, axis=1)
    steps[same] = 0
    idx = np.flatnonzero(~same)
    x1, x2 = x1[idx], x2[idx]
    k = np.zeros(idx.size, dtype=np.int64)
    it = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while idx.size:
            x1, x2, c, adv = _policy_iteration(kern, x1, x2, rng, k, n_total)
            k = k + adv
            it += 1
            if it % check_every == 0:
                bad = ~(np.all(np.isfinite(x1), axis=1) & np.all(np.isfinite(x2), axis=1))
                if bad.any():
                    diverged[idx[bad]] = True
                    c = c & ~bad
            else:
                bad = None
            if c.any():
                steps[idx[c]] = k[c]
            drop = c | (k >= n_total)
            if bad is not None:
                drop |= bad
            if drop.any():
                keep = ~drop
                idx, x1, x2, k = idx[keep], x1[keep], x2[keep], k[keep]
    return CouplingTimes(steps, diverged, h, T)


def coupling_time(model, policy, x, y, h, T, stream) -> CouplingOutcome:
    return coupling_times(model, policy, [x], [y], h, T, stream).outcomes()[0]


# ---------------------------------------------------------------- single-pair steps

def _absorbed(model, s, h, rng):
    dw = np.sqrt(h) * rng.standard_normal(model.noise_dim)
    x = em_step(model, s.x1, h, dw)
    return CoupledState(x, x.copy(), True, s.t + h)


def reflection_pair_step(model: SdeModel, s: CoupledState, h: float, dW) -> CoupledState:
    """x1 gets dW, x2 gets (I - 2 e e^T) dW with e the unit vector along sigma^{-1}(x1 - x2)."""
    if s.coupled:
        x = em_step(model, s.x1, h, dW)
        return CoupledState(x, x.copy(), True, s.t + h)
    if np.array_equal(s.x1, s.x2):
        raise ValueError("reflection undefined for equal states; mark the pair coupled first")
    kern = _Kernel(model, CouplingPolicy("reflection"), h)
    n1, n2 = _reflection_batch(kern, np.atleast_2d(s.x1), np.atleast_2d(s.x2), None,
                               np.atleast_2d(dW))
    return CoupledState(n1[0], n2[0], False, s.t + h)


def synchronous_pair_step(model: SdeModel, s: CoupledState, h: float, dW) -> CoupledState:
    x1 = em_step(model, s.x1, h, dW)
    if s.coupled:
        return CoupledState(x1, x1.copy(), True, s.t + h)
    return CoupledState(x1, em_step(model, s.x2, h, dW), False, s.t + h)


def independent_pair_step(model: SdeModel, s: CoupledState, h: float, stream) -> CoupledState:
    """Independent coupling; a test baseline only."""
    rng = as_generator(stream)
    if s.coupled:
        return _absorbed(model, s, h, rng)
    sh = np.sqrt(h)
    return CoupledState(em_step(model, s.x1, h, sh * rng.standard_normal(model.noise_dim)),
                        em_step(model, s.x2, h, sh * rng.standard_normal(model.noise_dim)),
                        False, s.t + h)


def maximal_coupling_step(model: SdeModel, s: CoupledState, h: float, stream) -> CoupledState:
    rng = as_generator(stream)
    if s.coupled:
        return _absorbed(model, s, h, rng)
    kern = _Kernel(model, CouplingPolicy("maximal"), h)
    z1, z2, hit = _maximal_batch(kern, np.atleast_2d(s.x1), np.atleast_2d(s.x2), rng)
    return CoupledState(z1[0], z2[0], bool(hit[0]), s.t + h)


def mixed_policy_step(model: SdeModel, s: CoupledState, h: float, stream,
                      policy: Optional[CouplingPolicy] = None) -> CoupledState:
    rng = as_generator(stream)
    if s.coupled:
        return _absorbed(model, s, h, rng)
    kern = _Kernel(model, policy or CouplingPolicy("mixed"), h)
    n1, n2, c = _mixed_batch(kern, np.atleast_2d(s.x1), np.atleast_2d(s.x2), rng)
    return CoupledState(n1[0], n2[0], bool(c[0]), s.t + h)


def langevin_policy_step(model: LangevinModel, s: CoupledState, h: float, stream,
                         policy: Optional[CouplingPolicy] = None) -> CoupledState:
    """Reflection / synchronous / two-step maximal; may advance time by 2h."""
    rng = as_generator(stream)
    if s.coupled:
        return _absorbed(model, s, h, rng)
    kern = _Kernel(model, policy or CouplingPolicy("langevin-mixed"), h)
    n1, n2, c, adv = _langevin_batch(kern, np.atleast_2d(s.x1), np.atleast_2d(s.x2), rng,
                                     np.zeros(1, dtype=np.int64), np.iinfo(np.int64).max)
    return CoupledState(n1[0], n2[0], bool(c[0]), s.t + int(adv[0]) * h)


def langevin_branch(model: LangevinModel, s: CoupledState, h: float,
                    policy: Optional[CouplingPolicy] = None) -> str:
    """Which branch the Langevin policy takes from ``s``: 'maximal', 'reflection' or 'synchronous'."""
    policy = policy or CouplingPolicy("langevin-mixed")
    kern = _Kernel(model, policy, h)
    npos = model.n_pos
    dx, dv = s.x1[:npos] - s.x2[:npos], s.x1[npos:] - s.x2[npos:]
    c = policy.window_multiplier
    if np.all(np.abs(dx) < c * kern.sig_v * h**1.5) and np.all(np.abs(dv) < c * kern.sig_v * h**0.5):
        return "maximal"
    return "reflection" if np.linalg.norm(dx + dv / model.friction) > kern.q_switch else "synchronous"


def mixed_branch(model: SdeModel, s: CoupledState, h: float,
                 policy: Optional[CouplingPolicy] = None) -> str:
    kern = _Kernel(model, policy or CouplingPolicy("mixed"), h)
    return "reflection" if np.linalg.norm(s.x1 - s.x2) >= kern.threshold else "maximal"


def with_defaults(policy: CouplingPolicy, model: SdeModel, h: float) -> CouplingPolicy:
    """Policy with its step-size dependent thresholds filled in."""
    if policy.kind == "mixed" and policy.switch_threshold is None:
        return replace(policy, switch_threshold=default_switch_threshold(model, h))
    if policy.kind == "langevin-mixed" and policy.q_switch is None:
        return replace(policy, q_switch=default_q_switch(h))
    return policy


# ---------------------------------------------------------------- diagnostics

def maximal_marginal_report(model: SdeModel, x1, x2, h: float, n: int = 100_000, seed=0) -> dict:
    """Compare each output marginal of one maximal-coupling step with a plain EM step.

    The acceptance rule is not known to preserve marginals exactly, so this
    measures the deviation (two-sample KS per coordinate, mean shift in units of
    the step s.d.) instead of asserting it away.
    """
    from scipy import stats

    rng = as_generator(seed)
    kern = _Kernel(model, CouplingPolicy("maximal"), h)
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    z1, z2, hit = _maximal_batch(kern, np.tile(x1, (n, 1)), np.tile(x2, (n, 1)), rng)
    sd = np.sqrt(np.diag(model.sigma @ model.sigma.T) * h)
    out = {"coupling_probability": float(hit.mean()), "n": n, "marginals": []}
    for x, z in ((x1, z1), (x2, z2)):
        fresh = em_step(model, np.tile(x, (n, 1)), h,
                        np.sqrt(h) * rng.standard_normal((n, model.noise_dim)))
        ks = [stats.ks_2samp(z[:, j], fresh[:, j]) for j in range(model.dim)]
        out["marginals"].append({
            "ks_statistic": [float(k.statistic) for k in ks],
            "ks_pvalue": [float(k.pvalue) for k in ks],
            "mean_shift_sd": ((z.mean(axis=0) - fresh.mean(axis=0)) / sd).tolist(),
            "variance_ratio": (z.var(axis=0) / fresh.var(axis=0)).tolist(),
        })
    return out
