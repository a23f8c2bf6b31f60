"""Grid densities, total variation against a known density, and N^(-1/2) extrapolation."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .estimators import OmegaBox
from .integrate import PURPOSE, NoiseStream, em_step
from .models import SdeModel, density_normalizer
from .parallel import map_chunks


@dataclass
class DensityGrid:
    """Histogram counts on a regular grid over ``box``; mass outside is tracked separately."""
    box: OmegaBox
    resolution: tuple
    counts: np.ndarray
    outside: float = 0.0

    @classmethod
    def empty(cls, box: OmegaBox, resolution):
        res = tuple(int(r) for r in np.broadcast_to(resolution, (box.dim,)))
        return cls(box, res, np.zeros(res), 0.0)

    @property
    def total(self) -> float:
        return float(self.counts.sum() + self.outside)

    @property
    def masses(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def outside_mass(self) -> float:
        return self.outside / self.total

    @property
    def edges(self):
        return [np.linspace(lo, hi, r + 1)
                for lo, hi, r in zip(self.box.lower, self.box.upper, self.resolution)]

    @property
    def centers(self):
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges]

    @property
    def cell_volume(self) -> float:
        return float(np.prod((self.box.upper - self.box.lower) / np.array(self.resolution)))

    def add(self, samples):
        s = np.asarray(samples, dtype=float).reshape(-1, self.box.dim)
        res = np.array(self.resolution)
        rel = (s - self.box.lower) / (self.box.upper - self.box.lower)
        idx = np.floor(rel * res).astype(np.int64)
        # samples exactly on the upper face fall in the last cell
        idx = np.where(rel == 1.0, res - 1, idx)
        inside = np.all((idx >= 0) & (idx < res), axis=1)
        flat = np.ravel_multi_index(tuple(idx[inside].T), self.resolution)
        self.counts += np.bincount(flat, minlength=self.counts.size).reshape(self.resolution)
        self.outside += float(np.count_nonzero(~inside))
        return self

    def copy(self) -> "DensityGrid":
        return DensityGrid(self.box, self.resolution, self.counts.copy(), self.outside)

    def merge(self, other: "DensityGrid"):
        self.counts += other.counts
        self.outside += other.outside
        return self


def empirical_density_grid(samples, box: OmegaBox, resolution, axes: Optional[Sequence[int]] = None):
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise ValueError("no samples")
    if s.ndim == 1:
        s = s[:, None]
    if axes is not None:
        s = s[:, list(axes)]
    return DensityGrid.empty(box, resolution).add(s)


def analytic_cell_masses(grid: DensityGrid, density: Callable, normalizer: Optional[float] = None,
                         refine: int = 1) -> np.ndarray:
    """Per-cell integrals of ``density`` by the (composite) midpoint rule, divided by the normalizer.

    Without a normalizer, adaptive quadrature over the box is used in 1D/2D.
    """
    sub = [np.linspace(lo, hi, r * refine + 1)
           for lo, hi, r in zip(grid.box.lower, grid.box.upper, grid.resolution)]
    mids = [0.5 * (e[1:] + e[:-1]) for e in sub]
    mesh = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)
    vals = density(mesh) * grid.cell_volume / refine**grid.box.dim
    shape = []
    for r in grid.resolution:
        shape += [r, refine]
    cells = vals.reshape(shape).sum(axis=tuple(range(1, 2 * grid.box.dim, 2)))
    if normalizer is None:
        if grid.box.dim <= 2:
            normalizer = density_normalizer(density, grid.box.lower, grid.box.upper)
        else:
            normalizer = cells.sum()
    return cells / normalizer


def tv_from_masses(p, q, p_out: float = 0.0, q_out: float = 0.0) -> float:
    """Binned TV, 1/2 sum |p - q|, with the region outside the grid acting as one extra cell."""
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum() + 0.5 * abs(p_out - q_out))


def tv_distance(grid: DensityGrid, analytic, normalizer: Optional[float] = None,
                refine: int = 1) -> float:
    """TV between an empirical grid and a density function (or a second grid)."""
    if isinstance(analytic, DensityGrid):
        return tv_from_masses(grid.masses, analytic.masses, grid.outside_mass, analytic.outside_mass)
    q = analytic_cell_masses(grid, analytic, normalizer, refine)
    q_out = max(0.0, 1.0 - float(q.sum()))
    return min(1.0, tv_from_masses(grid.masses, q, grid.outside_mass, q_out))


def infinite_sample_extrapolation(points) -> float:
    """Intercept a of the least-squares line tv = a + b n^(-1/2)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (sample_size, tv) points")
    n, tv = pts[:, 0], pts[:, 1]
    if np.unique(n).size < 2:
        raise ValueError("singular fit: sample sizes must differ")
    a = np.column_stack([np.ones_like(n), n ** -0.5])
    coef, *_ = np.linalg.lstsq(a, tv, rcond=None)
    return float(coef[0])


# ---------------------------------------------------------------- EM chain histograms

def _density_chunk(task):
    model, h, x0, n_steps, burn_in, thin, box, resolution, axes, stream = task
    rng = stream.generator()
    grid = DensityGrid.empty(box, resolution)
    x = np.array(x0, dtype=float)
    sh = np.sqrt(h)
    shape = (x.shape[0], model.noise_dim)
    for k in range(burn_in + n_steps):
        x = em_step(model, x, h, sh * rng.standard_normal(shape))
        if k >= burn_in and (k - burn_in) % thin == 0:
            grid.add(x[:, axes] if axes is not None else x)
    return grid


def sample_invariant_density(model: SdeModel, h: float, box: OmegaBox, resolution, n_chains: int,
                             n_steps: int, burn_in: int, thin: int = 1, seed: int = 0, x0=None,
                             axes=None, chains_per_chunk: int = 1000, workers: Optional[int] = 1,
                             return_chunks: bool = False):
    """Histogram of EM chains after burn-in, every ``thin`` steps.

    With ``return_chunks`` the per-chunk grids are returned (in chunk order) instead of their sum.
    """
    base = NoiseStream(seed, 0, PURPOSE["validate"])
    if x0 is None:
        full = OmegaBox(*_model_box(box, model, axes))
        x0 = full.sample(base.derive(2**31).generator(), n_chains)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n_chains, model.dim))
    tasks = [(model, h, x0[a:a + chains_per_chunk], n_steps, burn_in, thin, box, resolution,
              None if axes is None else list(axes), base.derive(i))
             for i, a in enumerate(range(0, n_chains, chains_per_chunk))]
    grids = map_chunks(_density_chunk, tasks, workers)
    if return_chunks:
        return grids
    out = grids[0].copy()
    for g in grids[1:]:
        out.merge(g)
    return out


def _model_box(box, model, axes):
    if axes is None:
        return box.lower, box.upper
    lo = np.full(model.dim, -1.0)
    hi = np.full(model.dim, 1.0)
    lo[list(axes)] = box.lower
    hi[list(axes)] = box.upper
    return lo, hi


def write_grid_csv(path, grid: DensityGrid, analytic_masses=None):
    """Rows of cell centers and mass; with analytic masses also the difference column."""
    names = ["x_center", "y_center", "z_center"][:grid.box.dim] if grid.box.dim <= 3 else \
        [f"c{i}_center" for i in range(grid.box.dim)]
    header = names + ["mass"]
    if analytic_masses is not None:
        header += ["analytic_mass", "difference"]
    m = grid.masses
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for idx in itertools.product(*(range(r) for r in grid.resolution)):
            row = [f"{grid.centers[d][i]:.10g}" for d, i in enumerate(idx)] + [f"{m[idx]:.10g}"]
            if analytic_masses is not None:
                row += [f"{analytic_masses[idx]:.10g}", f"{m[idx] - analytic_masses[idx]:.10g}"]
            w.writerow(row)
