"""Config-driven stages (finite-error, contraction, tail-rate, certify, rough, validate) and their outputs.

Every stage returns a JSON-ready summary dict; :func:`write_summary` stamps it
with the resolved config, its hash, the seed and a timestamp.  Apart from the
timestamp, the summary is a pure function of the config.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
import os
from functools import partial
from typing import Optional

import numpy as np

from .config import RunConfig
from .coupling import CouplingPolicy
from .estimators import (CappedDistance, OmegaBox, certified_bound, contraction_rate,
                         finite_time_error, omega_from_bounds, rough_bound,
                         sample_contraction_ratios, survival_and_tail_rate)
from .evt import EstimatorFailure, gpd_diagnostic_table
from .integrate import PURPOSE
from .models import LangevinModel, langevin_position_density
from .parallel import default_workers
from .validate import (analytic_cell_masses, infinite_sample_extrapolation,
                       sample_invariant_density, tv_from_masses, write_grid_csv)

log = logging.getLogger("sdecert")


def _workers(cfg: RunConfig) -> int:
    return cfg.workers if cfg.workers is not None else default_workers()


def _policy(cfg: RunConfig) -> CouplingPolicy:
    c = cfg.coupling
    return CouplingPolicy(c.kind, c.switch_threshold, c.q_switch, c.window_multiplier)


def _distance(cfg: RunConfig) -> CappedDistance:
    return CappedDistance(cfg.distance.cap, cfg.distance.exponent)


def _clean(obj):
    """numpy scalars/arrays and non-finite floats to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


# ---------------------------------------------------------------- stages

def run_finite_error(cfg: RunConfig) -> dict:
    model = cfg.make_model()
    log.info("finite-error: %d segments of T=%g at h=%g", cfg.n_segments, cfg.T, cfg.h)
    omega = _config_omega(cfg)
    res = finite_time_error(model, cfg.h, cfg.T, cfg.n_segments, seed=cfg.seed, scheme=cfg.scheme,
                            order=cfg.order, n_chains=cfg.n_chains, burn_in=cfg.burn_in_segments,
                            omega=omega, workers=_workers(cfg), sample_interval=cfg.sample_interval)
    derived, eps_auto = omega_from_bounds(res.box_lower, res.box_upper, res.n_samples,
                                          cfg.omega_margin)
    eps = cfg.epsilon if cfg.epsilon is not None else eps_auto
    return {
        "result": res,
        "omega": omega if omega is not None else derived,
        "epsilon": eps,
        "summary": {
            "finite_error": {"E": res.estimate, "stderr": res.stderr, "n_segments": res.n_segments,
                             "constant": res.constant, "trajectory_length": res.n_samples},
            "trajectory_box": {"lower": res.box_lower, "upper": res.box_upper},
            "omega": _omega_dict(omega if omega is not None else derived,
                                 "config" if omega is not None else "trajectory"),
            "epsilon": eps,
            "epsilon_source": "config" if cfg.epsilon is not None else "trajectory",
        },
    }


def _config_omega(cfg) -> Optional[OmegaBox]:
    if cfg.omega_lower is None:
        return None
    return OmegaBox(cfg.omega_lower, cfg.omega_upper)


def _omega_dict(omega: OmegaBox, source: str) -> dict:
    return {"lower": omega.lower, "upper": omega.upper, "source": source}


def _omega_or_trajectory(cfg):
    om = _config_omega(cfg)
    if om is not None:
        return om, None
    fe = run_finite_error(cfg)
    return fe["omega"], fe


def run_contraction(cfg: RunConfig, omega: OmegaBox, out: Optional[str] = None,
                    horizon: Optional[float] = None) -> dict:
    """Algorithm-2 samples and alpha.  On estimator failure the partial summary is attached."""
    model = cfg.make_model()
    T = horizon if horizon is not None else cfg.T
    log.info("contraction: %d pairs x %d replicates, T=%g", cfg.n_pairs, cfg.m_replicates, T)
    samples = sample_contraction_ratios(model, _policy(cfg), omega, _distance(cfg), cfg.h, T,
                                        cfg.n_pairs, cfg.m_replicates, seed=cfg.seed,
                                        workers=_workers(cfg))
    if out:
        write_pairs_csv(os.path.join(out, "pairs.csv"), samples)
    r = samples.r
    summary = {"contraction": {"n_pairs": len(samples), "m_replicates": samples.replicates,
                               "max_r": float(r.max()), "mean_r": float(r.mean()),
                               "diverged_runs": samples.diverged, "T": T}}
    try:
        rate = contraction_rate(samples, cfg.exceedance_fraction)
    except EstimatorFailure as err:
        err.summary = summary
        err.samples = samples
        raise
    c = summary["contraction"]
    c["alpha"] = rate.alpha
    if rate.fit is not None:
        c.update({"V": rate.threshold, "zeta": rate.fit.scale, "xi": rate.fit.shape,
                  "v_max": rate.v_max, "n_exceedances": rate.fit.n_exceedances,
                  "log_likelihood": rate.fit.log_likelihood})
        if out:
            write_table_csv(os.path.join(out, "gpd_diagnostic.csv"),
                            ["exceedance", "empirical_cdf", "fitted_cdf"],
                            gpd_diagnostic_table(rate.exceedances, rate.fit))
    if rate.note:
        c["note"] = rate.note
    return {"samples": samples, "rate": rate, "summary": summary}


def tail_from_samples(cfg: RunConfig, samples, out: Optional[str] = None) -> dict:
    tr = survival_and_tail_rate(samples, tuple(cfg.tail_window))
    if out:
        write_table_csv(os.path.join(out, "survival.csv"), ["t", "survival"],
                        np.column_stack([tr.times, tr.survival]))
    return {"tail": tr, "summary": {"tail": {"gamma": tr.gamma, "intercept": tr.intercept,
                                             "horizon": float(tr.times[-1]),
                                             "window": list(tr.window),
                                             "n_fit_points": tr.n_fit_points,
                                             "survival_at_T": _survival_at(tr, cfg.T)}}}


def _survival_at(tr, t):
    i = int(np.searchsorted(tr.times, t - 1e-12))
    return float(tr.survival[min(i, tr.times.size - 1)])


def run_tail_rate(cfg: RunConfig, omega: OmegaBox, out: Optional[str] = None) -> dict:
    horizon = cfg.tail_horizon if cfg.tail_horizon is not None else cfg.T
    model = cfg.make_model()
    log.info("tail-rate: %d pairs x %d replicates up to t=%g", cfg.n_pairs, cfg.m_replicates, horizon)
    samples = sample_contraction_ratios(model, _policy(cfg), omega, _distance(cfg), cfg.h, horizon,
                                        cfg.n_pairs, cfg.m_replicates, seed=cfg.seed,
                                        workers=_workers(cfg))
    return tail_from_samples(cfg, samples, out)


# ---------------------------------------------------------------- commands

def cmd_finite_error(cfg, out):
    return run_finite_error(cfg)["summary"]


def cmd_contraction(cfg, out):
    omega, fe = _omega_or_trajectory(cfg)
    summary = fe["summary"] if fe else {"omega": _omega_dict(omega, "config")}
    try:
        summary.update(run_contraction(cfg, omega, out)["summary"])
    except EstimatorFailure as err:
        summary.update(getattr(err, "summary", {}))
        err.summary = summary
        raise
    return summary


def cmd_tail_rate(cfg, out):
    omega, fe = _omega_or_trajectory(cfg)
    summary = fe["summary"] if fe else {"omega": _omega_dict(omega, "config")}
    summary.update(run_tail_rate(cfg, omega, out)["summary"])
    return summary


def cmd_certify(cfg, out):
    """Omega/eps -> finite-time error -> contraction -> certified bound (plus the rough bound)."""
    fe = run_finite_error(cfg)
    summary = dict(fe["summary"])
    E, eps = fe["result"].estimate, fe["epsilon"]
    try:
        con = run_contraction(cfg, fe["omega"], out)
    except EstimatorFailure as err:
        summary.update(getattr(err, "summary", {}))
        samples = getattr(err, "samples", None)
        if samples is not None:
            _attach_rough(cfg, summary, samples, E, eps, out)
        summary["mode"] = "certified"
        err.summary = summary
        raise
    summary.update(con["summary"])
    b = certified_bound(E, eps, con["rate"].alpha, cap=cfg.distance.cap)
    summary.update({"mode": "certified", "bound": b.bound, "alpha": b.alpha})
    _attach_rough(cfg, summary, con["samples"], E, eps, out)
    return summary


def _attach_rough(cfg, summary, samples, E, eps, out):
    try:
        tail = tail_from_samples(cfg, samples, out)
    except ValueError as err:
        summary["tail"] = {"error": str(err)}
        return
    summary.update(tail["summary"])
    summary["rough_bound"] = rough_bound(E, eps, tail["tail"].gamma, cfg.T, cfg.distance.cap).bound


def cmd_rough(cfg, out):
    fe = run_finite_error(cfg)
    summary = dict(fe["summary"])
    tail = run_tail_rate(cfg, fe["omega"], out)
    summary.update(tail["summary"])
    b = rough_bound(fe["result"].estimate, fe["epsilon"], tail["tail"].gamma, cfg.T,
                    cfg.distance.cap)
    summary.update({"mode": "rough", "bound": b.bound, "gamma": b.gamma})
    return summary


def reference_density(model, axes):
    """Unnormalized density of the (projected) invariant measure, or None."""
    if axes is None or list(axes) == list(range(model.dim)):
        return model.density if model.density_fn is not None else None
    if isinstance(model, LangevinModel) and list(axes) == list(range(model.n_pos)):
        return partial(langevin_position_density, friction=model.friction,
                       sigma=float(model.params["sigma"]))
    return None


def cmd_validate(cfg, out):
    """EM histogram after burn-in vs the analytic density: TV and its N^(-1/2) extrapolation."""
    model = cfg.make_model()
    v = cfg.validation
    axes = v.axes
    dim = len(axes) if axes is not None else model.dim
    if v.box_lower is not None:
        box = OmegaBox(v.box_lower, v.box_upper)
    elif cfg.omega_lower is not None:
        lo, hi = np.asarray(cfg.omega_lower), np.asarray(cfg.omega_upper)
        box = OmegaBox(lo[axes] if axes else lo, hi[axes] if axes else hi)
    else:
        raise ValueError("validate needs validation.box_* or an explicit Omega")
    if box.dim != dim:
        raise ValueError("validation box dimension does not match the histogram axes")
    density = reference_density(model, axes)
    if density is None:
        raise ValueError(f"{model.name} has no known invariant density for axes {axes}")
    log.info("validate: %d chains x %d steps after %d burn-in", v.n_chains, v.n_steps, v.burn_in)
    grids = sample_invariant_density(model, cfg.h, box, v.resolution, v.n_chains, v.n_steps,
                                     v.burn_in, thin=v.thin, seed=cfg.seed, axes=axes,
                                     chains_per_chunk=v.chains_per_chunk, workers=_workers(cfg),
                                     return_chunks=True)
    q = analytic_cell_masses(grids[0], density)
    q_out = max(0.0, 1.0 - float(q.sum()))
    # TV on doubling prefixes of the chunk list feeds the infinite-sample extrapolation
    curve = []
    acc = None
    sizes = sorted({min(2**k, len(grids)) for k in range(len(grids).bit_length() + 1)})
    used = 0
    for size in sizes:
        for g in grids[used:size]:
            acc = g.copy() if acc is None else acc.merge(g)
        used = size
        curve.append((acc.total, min(1.0, tv_from_masses(acc.masses, q, acc.outside_mass, q_out))))
    grid = acc
    tv = curve[-1][1]
    summary = {"validate": {"tv": tv, "samples": grid.total, "resolution": list(grid.resolution),
                            "box": {"lower": box.lower, "upper": box.upper},
                            "outside_mass": grid.outside_mass, "analytic_outside_mass": q_out,
                            "tv_curve": [[n, t] for n, t in curve]}}
    if len(curve) >= 2:
        summary["validate"]["tv_extrapolated"] = infinite_sample_extrapolation(curve)
    if v.split_point is not None and dim == 1:
        centers = grid.centers[0]
        left = centers < v.split_point
        summary["validate"]["mass_below_split"] = float(grid.masses[left].sum())
        summary["validate"]["analytic_mass_below_split"] = float(q[left].sum())
        summary["validate"]["split_point"] = v.split_point
    if out:
        write_grid_csv(os.path.join(out, "density_grid.csv"), grid, q)
    return summary


COMMANDS = {
    "finite-error": cmd_finite_error,
    "contraction": cmd_contraction,
    "tail-rate": cmd_tail_rate,
    "certify": cmd_certify,
    "rough": cmd_rough,
    "validate": cmd_validate,
}


def run(command: str, cfg: RunConfig, out: Optional[str] = None) -> dict:
    """Run one command, write ``summary.json`` (also on estimator failure) and return the summary."""
    cfg.check()
    out = out if out is not None else cfg.out
    if out:
        os.makedirs(out, exist_ok=True)
    try:
        body = COMMANDS[command](cfg, out)
        status, error = "ok", None
    except EstimatorFailure as err:
        body = getattr(err, "summary", {})
        status, error = "failed", str(err)
        if out:
            write_summary(os.path.join(out, "summary.json"), command, cfg, body, status, error)
        raise
    summary = write_summary(os.path.join(out, "summary.json") if out else None, command, cfg, body,
                            status, error)
    return summary


def build_summary(command, cfg: RunConfig, body: dict, status="ok", error=None) -> dict:
    s = dict(body)
    s.update({
        "command": command,
        "status": status,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "streams": {k: [cfg.seed, v] for k, v in PURPOSE.items() if k != "test"},
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    })
    if error is not None:
        s["error"] = error
    return _clean(s)


def write_summary(path, command, cfg, body, status="ok", error=None) -> dict:
    s = build_summary(command, cfg, body, status, error)
    if path:
        with open(path, "w") as fh:
            json.dump(s, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return s


# ---------------------------------------------------------------- CSV writers

def write_table_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.asarray(rows):
            w.writerow([f"{v:.10g}" for v in row])


def write_pairs_csv(path, samples):
    dim = samples.x.shape[1]
    header = ([f"x{i}" for i in range(dim)] + [f"y{i}" for i in range(dim)]
              + ["distance", "coupled", "replicates", "r", "v"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        r, v = samples.r, samples.v
        for i in range(len(samples)):
            w.writerow([f"{a:.10g}" for a in samples.x[i]] + [f"{a:.10g}" for a in samples.y[i]]
                       + [f"{samples.distance[i]:.10g}", int(samples.coupled[i]), samples.replicates,
                          f"{r[i]:.10g}", f"{v[i]:.10g}"])
