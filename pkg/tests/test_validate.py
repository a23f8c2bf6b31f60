import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from conftest import ou_model
from sdecert.estimators import OmegaBox
from sdecert.models import double_well, ring
from sdecert.validate import (DensityGrid, analytic_cell_masses, empirical_density_grid,
                              infinite_sample_extrapolation, sample_invariant_density,
                              tv_distance, tv_from_masses, write_grid_csv)


def test_single_point_fills_one_cell():
    box = OmegaBox([0.0, 0.0], [1.0, 1.0])
    g = empirical_density_grid([[0.31, 0.72]], box, 10)
    assert g.masses[3, 7] == 1.0
    assert g.masses.sum() == 1.0


def test_upper_face_lands_in_last_cell_and_outside_is_tracked():
    box = OmegaBox([0.0], [1.0])
    g = empirical_density_grid(np.array([1.0, 0.0, 2.0, -0.1]), box, 4)
    assert g.counts[-1] == 1 and g.counts[0] == 1
    assert g.outside_mass == 0.5
    assert g.masses.sum() + g.outside_mass == pytest.approx(1.0, abs=1e-12)


def test_uniform_samples_binomial_cells():
    box = OmegaBox([0.0, 0.0], [1.0, 1.0])
    n = 200_000
    g = empirical_density_grid(np.random.default_rng(0).random((n, 2)), box, 8)
    p = 1 / 64
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(g.masses - p) < 4.5 * se)


def test_axes_projection():
    box = OmegaBox([-1.0], [1.0])
    s = np.column_stack([np.full(10, 0.5), np.full(10, -0.5)])
    g = empirical_density_grid(s, box, 2, axes=[1])
    np.testing.assert_array_equal(g.counts, [10, 0])


def test_grid_merge_adds_counts():
    box = OmegaBox([0.0], [1.0])
    a = empirical_density_grid(np.array([0.1, 0.2]), box, 2)
    b = empirical_density_grid(np.array([0.9, 5.0]), box, 2)
    c = a.copy().merge(b)
    np.testing.assert_array_equal(c.counts, [2, 1])
    assert c.outside == 1
    np.testing.assert_array_equal(a.counts, [2, 0])


def test_tv_examples():
    assert tv_from_masses([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert tv_from_masses([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert tv_from_masses([0.6, 0.4], [0.4, 0.6]) == pytest.approx(0.2)
    assert tv_from_masses([0.5, 0.0], [0.5, 0.0], 0.5, 0.5) == 0.0
    assert tv_from_masses([0.5, 0.5], [0.5, 0.0], 0.0, 0.5) == pytest.approx(0.5)


_masses = st.lists(st.floats(0, 1), min_size=5, max_size=5).filter(lambda v: sum(v) > 1e-3)


@settings(max_examples=80, deadline=None)
@given(_masses, _masses, _masses)
def test_tv_is_a_metric(a, b, c):
    p, q, r = (np.array(v) / sum(v) for v in (a, b, c))
    assert tv_from_masses(p, q) == pytest.approx(tv_from_masses(q, p))
    assert 0 <= tv_from_masses(p, q) <= 1 + 1e-12
    assert tv_from_masses(p, r) <= tv_from_masses(p, q) + tv_from_masses(q, r) + 1e-12


def test_tv_grid_against_grid_and_density():
    box = OmegaBox([-3.0], [3.0])
    x = np.random.default_rng(1).standard_normal(400_000)
    g = empirical_density_grid(x, box, 60)
    tv = tv_distance(g, lambda z: stats.norm.pdf(z[..., 0]), normalizer=1.0, refine=4)
    # 60 cells, 4e5 samples: sampling TV ~ sum sqrt(p(1-p)/n) * sqrt(2/pi) / 2
    assert tv < 0.02
    assert tv_distance(g, g.copy()) == 0.0


def test_analytic_masses_quadrature_normalizer():
    box = OmegaBox([-1.0, -1.0], [1.0, 1.0])
    g = DensityGrid.empty(box, 16)
    q = analytic_cell_masses(g, lambda z: np.ones(z.shape[:-1]))
    assert q.sum() == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(q, 1 / 256)


def test_extrapolation_exact_line():
    n = np.array([1e4, 4e4, 1.6e5, 6.4e5])
    tv = 0.001 + 3.0 / np.sqrt(n)
    assert infinite_sample_extrapolation(np.column_stack([n, tv])) == pytest.approx(0.001, abs=1e-12)


def test_extrapolation_needs_two_sizes():
    with pytest.raises(ValueError):
        infinite_sample_extrapolation([[100.0, 0.1]])
    with pytest.raises(ValueError):
        infinite_sample_extrapolation([[100.0, 0.1], [100.0, 0.2]])


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 0.1), st.floats(0.01, 10), st.lists(st.floats(-1e-3, 1e-3), min_size=4, max_size=4))
def test_extrapolation_is_linear_in_tv(a, b, noise):
    n = np.array([1e3, 1e4, 1e5, 1e6])
    tv = a + b / np.sqrt(n) + np.array(noise)
    est = infinite_sample_extrapolation(np.column_stack([n, tv]))
    # intercept of a least-squares fit moves by at most a bounded multiple of the noise
    assert est == pytest.approx(a, abs=4e-3)


def test_em_ou_density_matches_discrete_stationary_law():
    h = 0.05
    box = OmegaBox([-2.5], [2.5])
    g = sample_invariant_density(ou_model(), h, box, 50, n_chains=400, n_steps=4000, burn_in=200,
                                 thin=5, seed=3)
    var = 1 / (2 - h)   # stationary variance of x -> (1 - h) x + sqrt(h) z
    tv = tv_distance(g, lambda z: stats.norm.pdf(z[..., 0], 0, np.sqrt(var)), normalizer=1.0, refine=4)
    tv_cont = tv_distance(g, lambda z: stats.norm.pdf(z[..., 0], 0, np.sqrt(0.5)), normalizer=1.0,
                          refine=4)
    assert tv < 0.01
    assert tv < tv_cont


def test_ring_density_correlates_with_annulus():
    m = ring(0.5)
    box = OmegaBox([-2.0, -2.0], [2.0, 2.0])
    g = sample_invariant_density(m, 0.01, box, 32, n_chains=500, n_steps=3000, burn_in=500,
                                 thin=5, seed=1)
    q = analytic_cell_masses(g, m.density, refine=2)
    assert np.corrcoef(g.masses.ravel(), q.ravel())[0, 1] > 0.99
    assert tv_distance(g, m.density, refine=2) < 0.1


def test_sampling_worker_invariant_and_chunked():
    m = double_well()
    box = OmegaBox([-2.0], [4.0])
    kw = dict(n_chains=40, n_steps=300, burn_in=50, thin=2, seed=9, chains_per_chunk=10)
    a = sample_invariant_density(m, 0.0025, box, 64, workers=1, **kw)
    b = sample_invariant_density(m, 0.0025, box, 64, workers=2, **kw)
    np.testing.assert_array_equal(a.counts, b.counts)
    chunks = sample_invariant_density(m, 0.0025, box, 64, return_chunks=True, **kw)
    assert len(chunks) == 4
    np.testing.assert_array_equal(sum(c.counts for c in chunks), a.counts)


def test_grid_csv(tmp_path):
    box = OmegaBox([0.0, 0.0], [1.0, 1.0])
    g = empirical_density_grid(np.random.default_rng(0).random((100, 2)), box, 4)
    q = np.full((4, 4), 1 / 16)
    path = tmp_path / "grid.csv"
    write_grid_csv(path, g, q)
    rows = path.read_text().splitlines()
    assert rows[0] == "x_center,y_center,mass,analytic_mass,difference"
    assert len(rows) == 17
