"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Criteria 3 and 8 run the desk-scale presets end to end (several minutes each).
"""
import math
import pathlib

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import CRITERIA_LINES, free_model
from sdecert.coupling import CoupledState, CouplingPolicy, coupling_times, reflection_pair_step
from sdecert.estimators import certified_bound, rough_bound, survival_and_tail_rate
from sdecert.evt import EstimatorFailure, GpdFit, fit_gpd, gpd_upper_endpoint
from sdecert.integrate import NoiseStream, paired_fine_coarse
from sdecert.models import SdeModel, ring
from sdecert.pipeline import run
from sdecert.presets import PRESETS, preset

ROOT = pathlib.Path(__file__).resolve().parents[1]


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    assert ok, line


def sig4(a, b):
    """Agreement to 4 significant figures, read as relative error below 5e-4."""
    return abs(a - b) <= 5e-4 * abs(b)


def test_criterion_1_bound_arithmetic():
    rows = [
        ("ring certified", certified_bound(0.00141635, 1e-7, 0.3972).bound, 0.002350),
        ("ring rough", rough_bound(0.00141635, 1e-7, 0.1378, 10.0).bound, 0.00189377),
        ("double well certified", certified_bound(0.167345, 1 / 4e7, 0.2019).bound, 0.2097),
        # the reported exp(-gamma T) factor is 0.1068; gamma T itself is recovered from it
        ("double well rough", rough_bound(0.167345, 1 / 4e7, -math.log(0.1068) / 50.0, 50.0).bound,
         0.187354),
        ("langevin certified", certified_bound(0.0111313, 1 / 3.2e7, 0.3727).bound, 0.017745),
        ("langevin rough", rough_bound(0.0111313, 1 / 3.2e7, 0.07067, 40.0).bound, 0.011832),
        ("lorenz96 D=4 certified", certified_bound(0.144864, 1 / 2.4e6, 0.7081).bound, 0.4963),
        ("fhn N=2 certified", certified_bound(0.0105652, 1 / 2.4e6, 0.5197).bound, 0.0220),
        ("fhn N=2 rough", rough_bound(0.0105652, 1 / 2.4e6, 0.50741, 3.0).bound, 0.01351),
        ("fhn N=40 rough", rough_bound(0.0443737, 1 / 2.4e6, 0.31612, 3.0).bound, 0.07243),
    ]
    bad = [f"{name} {got:.6g} vs {want}" for name, got, want in rows if not sig4(got, want)]
    literal = rough_bound(0.167345, 1 / 4e7, 0.09078, 50.0).bound
    report(1, not bad, f"{len(rows) - len(bad)}/{len(rows)} assemblies within 4 s.f. "
                       f"(double-well rough from gamma=0.09078, T=50 literally: {literal:.5f}) {bad}")


def test_criterion_2_gpd_endpoint():
    fit = GpdFit(threshold=1.48, scale=0.0326, shape=-0.1822, n_exceedances=0, log_likelihood=0.0)
    alpha = 1 - 1 / gpd_upper_endpoint(fit)
    report(2, abs(alpha - 0.3972) <= 1e-4, f"alpha = {alpha:.5f} (target 0.3972 +- 0.0001)")


@pytest.mark.slow
def test_criterion_3_ring_desk_end_to_end(tmp_path):
    cfg = preset("ring", "desk")
    try:
        s = run("certify", cfg, out=str(tmp_path))
        failure = None
    except EstimatorFailure as err:
        s, failure = err.summary, str(err)
    E = s["finite_error"]["E"]
    alpha = s.get("contraction", {}).get("alpha")
    bound = s.get("bound")
    gamma = s.get("tail", {}).get("gamma")
    checks = {
        "E": abs(E - 0.00142) <= 0.3 * 0.00142,
        "alpha": alpha is not None and abs(alpha - 0.3972) <= 0.10,
        "bound": bound is not None and 0.0015 <= bound <= 0.004,
        "gamma": gamma is not None and abs(gamma - 0.1378) <= 0.15 * 0.1378,
    }
    c = s.get("contraction", {})
    detail = (f"E={E:.5g} alpha={alpha} bound={bound} gamma={gamma} "
              f"[{', '.join(k + (' ok' if v else ' FAIL') for k, v in checks.items())}] "
              f"max_r={c.get('max_r')} V={c.get('V')} xi={c.get('xi')}"
              + (f" estimator: {failure}" if failure else ""))
    report(3, all(checks.values()), detail)


def test_criterion_4_gpd_fit_recovery():
    xi_err, zeta_err = [], []
    for seed in range(20):
        x = stats.genpareto.rvs(-0.18, scale=0.033, size=5000, random_state=seed)
        fit = fit_gpd(x)
        xi_err.append(abs(fit.shape + 0.18))
        zeta_err.append(abs(fit.scale / 0.033 - 1))
    a, b = float(np.median(xi_err)), float(np.median(zeta_err))
    report(4, a <= 0.05 and b <= 0.15, f"median |xi error| = {a:.4f} (<= 0.05), "
                                       f"median zeta rel. error = {b:.4f} (<= 0.15)")


def test_criterion_5_tail_rate_recovery():
    g = NoiseStream(5, 0, 99).generator()
    taus = g.exponential(1 / 0.1378, 100_000)
    taus[taus > 40.0] = np.inf
    gamma = survival_and_tail_rate(taus, horizon=40.0).gamma
    report(5, abs(gamma / 0.1378 - 1) <= 0.05, f"gamma_hat = {gamma:.5f} (0.1378 +- 5%)")


def _gauss_tv(delta, sd):
    f = lambda z: abs(stats.norm.pdf(z, 0, sd) - stats.norm.pdf(z, delta, sd))
    val, _ = integrate.quad(f, -12 * sd, delta + 12 * sd, points=[delta / 2], limit=200)
    return 0.5 * val


def test_criterion_6_coupling_inequality():
    h = 0.01
    sd = math.sqrt(h)
    n = 100_000
    m = free_model(1)
    ct = coupling_times(m, CouplingPolicy("maximal"), np.zeros((n, 1)), np.full((n, 1), sd), h, h,
                        NoiseStream(6, 0, 99))
    p = float(ct.coupled.mean())
    se = math.sqrt(p * (1 - p) / n)
    tv = _gauss_tv(sd, sd)
    ineq = p <= 1 - tv + 3 * se

    # reflection coupling: each marginal must be a plain EM step
    mr = ring(0.5)
    x1, x2 = np.array([0.7, -0.4]), np.array([-0.1, 0.9])
    g = NoiseStream(6, 1, 99).generator()
    k = 20_000
    b1, b2 = np.empty((k, 2)), np.empty((k, 2))
    for i in range(k):
        out = reflection_pair_step(mr, CoupledState(x1, x2), h, sd * g.standard_normal(2))
        b1[i], b2[i] = out.x1, out.x2
    pvals = []
    for start, got in ((x1, b1), (x2, b2)):
        fresh = start + mr.drift(start) * h + 0.5 * sd * g.standard_normal((k, 2))
        pvals += [stats.ks_2samp(got[:, j], fresh[:, j]).pvalue for j in range(2)]
    marg = min(pvals) > 0.01
    report(6, ineq and marg, f"P[couple] = {p:.4f} <= 1 - TV + 3se = {1 - tv + 3 * se:.4f}; "
                             f"reflection marginal KS p-values min {min(pvals):.3f} (> 0.01)")


def test_criterion_7_extrapolation_identities():
    fine, coarse = paired_fine_coarse(free_model(3, 0.7), np.ones((16, 3)), 0.01, 1.0,
                                      NoiseStream(7, 0, 99))
    drift_free = float(np.abs(fine - coarse).max())
    det = SdeModel("ou0", 1, 1, lambda x: -x, sigma=[[0.0]])
    f, c = paired_fine_coarse(det, [1.0], 0.1, 1.0, NoiseStream(7, 1, 99))
    closed = 0.9**10 - 0.8**5
    gap = abs(abs(f[0] - c[0]) - closed)
    ok = drift_free <= 1e-12 and gap <= 1e-12 and round(closed, 5) == 0.02100
    report(7, ok, f"drift-free max |fine - coarse| = {drift_free:.2e}; "
                  f"OU difference {abs(f[0] - c[0]):.10f} vs 0.9^10 - 0.8^5 (gap {gap:.1e})")


@pytest.mark.slow
def test_criterion_8_double_well_validation(tmp_path):
    cfg = preset("double-well", "desk")
    s = run("validate", cfg, out=str(tmp_path))["validate"]
    tv, left, left_exact = s["tv"], s["mass_below_split"], s["analytic_mass_below_split"]
    ok = left < left_exact and 0.059 / 2 <= tv <= 0.059 * 2
    report(8, ok, f"TV = {tv:.4f} (in [0.0295, 0.118]); left-well mass {left:.4f} vs analytic "
                  f"{left_exact:.4f}; extrapolated TV {s.get('tv_extrapolated', float('nan')):.4f}")


def test_criterion_9_full_scale_configs():
    missing = [n for n in ("ring", "double-well", "langevin", "lorenz96-4", "lorenz96-5", "fhn2", "fhn40")
               if n not in PRESETS]
    cfgs = {n: preset(n, "paper") for n in PRESETS}
    sizes_ok = (cfgs["ring"].n_segments * cfgs["ring"].T == 1e7
                and cfgs["lorenz96-5"].mode == "rough" and cfgs["fhn40"].mode == "rough"
                and cfgs["fhn40"].params["n_neurons"] == 40 and cfgs["lorenz96-5"].params["dim"] == 5)
    readme = (ROOT / "README.md").read_text() if (ROOT / "README.md").exists() else ""
    documented = "--scale paper" in readme and "multi-hour" in readme
    report(9, not missing and sizes_ok and documented,
           f"full-scale presets {sorted(cfgs)}; sizes ok={sizes_ok}; README documents full scale={documented}")
