"""Weighted multivariate histogram and linear blend frequency polygon.

The LBFP interpolates the bin-midpoint heights of a histogram
multilinearly, which makes it a proper density: with one zero-height
guard layer on every face, the blended surface integrates to exactly the
histogram mass.  Densities built here are immutable; evaluation and
sampling are pure and vectorized over batches.

Sampling inverts the blend's conditional CDFs dimension by dimension
inside a mass-selected cell.  Every conditional is linear in the
coordinate, so its CDF segment is quadratic and inverts in closed form;
the sampler therefore consumes exactly dim+1 uniforms per draw, which
keeps it well defined under quasi-random input.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

__all__ = ["Grid", "LbfpDensity", "build_weighted_histogram"]


@dataclass(frozen=True, eq=False)
class Grid:
    """Regular bin grid: per-dimension lower edge and bin count, common width.

    Data bins tile [lower, lower + n_bins*h] per dimension; midpoints sit
    at lower + (k + 0.5) h.  One guard layer of zero-height midpoints is
    implied on every face, so the blend is defined (and tapers to zero)
    over an extra half-bin fringe around the data box.
    """

    dim: int
    bin_width: float
    lower: np.ndarray
    n_bins: np.ndarray

    def __post_init__(self):
        if not 1 <= self.dim <= 3:
            raise ValueError("grid dimension must be 1, 2, or 3")
        if self.bin_width <= 0:
            raise ValueError("bin width must be positive")
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.dim,)).copy()
        n_bins = np.broadcast_to(np.asarray(self.n_bins, dtype=int), (self.dim,)).copy()
        if np.any(n_bins < 1):
            raise ValueError("need at least one bin per dimension")
        lower.setflags(write=False)
        n_bins.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "n_bins", n_bins)

    @classmethod
    def symmetric(cls, dim: int, half_width: float, bin_width: float) -> "Grid":
        """Grid whose data box covers [-half_width, half_width]^dim."""
        if half_width <= 0:
            raise ValueError("half width must be positive")
        n = int(np.ceil(2.0 * half_width / bin_width - 1e-12))
        lower = np.full(dim, -0.5 * n * bin_width)
        return cls(dim=dim, bin_width=bin_width, lower=lower, n_bins=np.full(dim, n))

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.n_bins * self.bin_width

    @property
    def support_lower(self) -> np.ndarray:
        return self.lower - 0.5 * self.bin_width

    @property
    def support_upper(self) -> np.ndarray:
        return self.upper + 0.5 * self.bin_width

    @property
    def support_volume(self) -> float:
        return float(np.prod(self.support_upper - self.support_lower))

    def midpoints(self, axis: int) -> np.ndarray:
        """Midpoint coordinates along ``axis`` including the guard layer."""
        k = np.arange(-1, self.n_bins[axis] + 1)
        return self.lower[axis] + (k + 0.5) * self.bin_width


def build_weighted_histogram(points: np.ndarray, weights: np.ndarray, grid: Grid) -> "LbfpDensity":
    """LBFP density from weighted points binned on ``grid``.

    Bin heights are sum-of-weights / (M h^dim); the density is then
    self-normalized by the mean weight so it integrates to one.  Raises
    ``ValueError`` when every weight is zero (no estimate exists) or a
    point falls outside the grid's data box.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float).ravel()
    if points.shape[0] != weights.size:
        raise ValueError("points and weights must have matching length")
    if points.shape[1] != grid.dim:
        raise ValueError(f"expected {grid.dim}-dimensional points")
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    if not np.any(weights > 0):
        raise ValueError("all weights are zero: empty estimate")
    h = grid.bin_width
    rel = (points - grid.lower) / h
    eps = 1e-9
    if np.any(rel < -eps) or np.any(rel > grid.n_bins + eps):
        raise ValueError("point outside the grid box")
    idx = np.minimum(rel.astype(int), grid.n_bins - 1)
    idx = np.maximum(idx, 0)

    m = points.shape[0]
    shape = tuple(int(n) + 2 for n in grid.n_bins)
    heights = np.zeros(shape)
    flat = np.ravel_multi_index(tuple(idx[:, j] + 1 for j in range(grid.dim)), shape)
    np.add.at(heights.reshape(-1), flat, weights)
    heights /= m * h**grid.dim
    return LbfpDensity(grid=grid, heights=heights, normalizer=float(weights.mean()))


class LbfpDensity:
    """Normalized linear blend frequency polygon over a :class:`Grid`."""

    def __init__(self, grid: Grid, heights: np.ndarray, normalizer: float):
        shape = tuple(int(n) + 2 for n in grid.n_bins)
        heights = np.asarray(heights, dtype=float)
        if heights.shape != shape:
            raise ValueError(f"heights must have shape {shape} (guard layer included)")
        if np.any(heights < 0):
            raise ValueError("heights must be non-negative")
        if normalizer <= 0:
            raise ValueError("normalizer must be positive")
        heights = heights.copy()
        heights.setflags(write=False)
        self.grid = grid
        self.heights = heights
        self.normalizer = float(normalizer)
        self._masses = None
        self._cum = None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Density value per row of ``x``; zero outside the support box."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.grid.dim:
            raise ValueError(f"expected {self.grid.dim}-dimensional points")
        m = self.grid.dim
        s = (x - self.grid.lower) / self.grid.bin_width + 0.5
        cells = np.floor(s).astype(int)
        inside = np.all((s >= 0.0) & (cells <= self.grid.n_bins), axis=1)
        out = np.zeros(x.shape[0])
        if not inside.any():
            return out
        c = cells[inside]
        theta = s[inside] - c
        acc = np.zeros(c.shape[0])
        for offsets in product((0, 1), repeat=m):
            w = np.ones(c.shape[0])
            for j, o in enumerate(offsets):
                w *= theta[:, j] if o else 1.0 - theta[:, j]
            acc += w * self.heights[tuple(c[:, j] + offsets[j] for j in range(m))]
        out[inside] = acc / self.normalizer
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)

    def cell_masses(self) -> np.ndarray:
        """Exact probability mass of every inter-midpoint cell.

        Cell (c_1..c_m), c_j in 0..n_bins_j, spans midpoints c_j-1..c_j;
        its mass is h^dim times the average of its 2^dim corner heights,
        over the normalizer.  The masses sum to one.
        """
        if self._masses is None:
            m = self.grid.dim
            nc = tuple(int(n) + 1 for n in self.grid.n_bins)
            acc = np.zeros(nc)
            for offsets in product((0, 1), repeat=m):
                acc += self.heights[tuple(slice(o, o + nc[j]) for j, o in enumerate(offsets))]
            acc *= self.grid.bin_width**m / (2**m * self.normalizer)
            acc.setflags(write=False)
            self._masses = acc
        return self._masses

    def cell_mass(self, cell) -> float:
        """Mass of one cell given its multi-index."""
        return float(self.cell_masses()[tuple(np.atleast_1d(cell))])

    def _cumulative(self) -> np.ndarray:
        if self._cum is None:
            cum = np.cumsum(self.cell_masses().reshape(-1))
            cum /= cum[-1]
            cum.setflags(write=False)
            self._cum = cum
        return self._cum

    def sample(self, uniforms: np.ndarray) -> np.ndarray:
        """Draw one point per row of ``uniforms`` (shape (n, dim+1)).

        Column 0 selects a cell by cumulative mass; column j inverts the
        blend's j-th conditional CDF inside that cell.  The output is
        exactly distributed according to the density and always lies in
        the support box.
        """
        uniforms = np.atleast_2d(np.asarray(uniforms, dtype=float))
        m = self.grid.dim
        if uniforms.shape[1] != m + 1:
            raise ValueError(f"sampler consumes {m + 1} uniforms per draw")
        n = uniforms.shape[0]
        cum = self._cumulative()
        flat = np.searchsorted(cum, uniforms[:, 0], side="right")
        flat = np.minimum(flat, cum.size - 1)
        nc = tuple(int(nb) + 1 for nb in self.grid.n_bins)
        cells = np.unravel_index(flat, nc)

        corners = np.empty((n,) + (2,) * m)
        for offsets in product((0, 1), repeat=m):
            sel = (slice(None),) + offsets
            corners[sel] = self.heights[tuple(cells[j] + offsets[j] for j in range(m))]

        out = np.empty((n, m))
        block = corners
        for j in range(m):
            low, high = block[:, 0, ...], block[:, 1, ...]
            if low.ndim > 1:
                axes = tuple(range(1, low.ndim))
                a, b = low.mean(axis=axes), high.mean(axis=axes)
            else:
                a, b = low, high
            theta = _invert_linear_cdf(a, b, uniforms[:, j + 1])
            out[:, j] = self.grid.lower[j] + (cells[j] - 0.5 + theta) * self.grid.bin_width
            shape = (n,) + (1,) * (low.ndim - 1)
            t = theta.reshape(shape)
            block = low * (1.0 - t) + high * t
        return out

    def dump(self, path) -> None:
        """Write 'midpoint coordinates  height' lines for plotting."""
        axes = [self.grid.midpoints(j) for j in range(self.grid.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([g.reshape(-1) for g in mesh], axis=1)
        vals = (self.heights / self.normalizer).reshape(-1)
        with open(path, "w") as fh:
            for row, v in zip(coords, vals):
                fh.write(" ".join(f"{c:.10g}" for c in row) + f" {v:.10g}\n")


def _invert_linear_cdf(a: np.ndarray, b: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Solve for theta in [0,1): CDF of density (1-t) a + t b equals u.

    The quadratic is solved in the root form that avoids cancellation
    when a and b are close; degenerate all-zero segments fall back to the
    uniform answer.
    """
    total = a + b
    disc = np.sqrt(a * a + (b - a) * total * u)
    den = a + disc
    with np.errstate(invalid="ignore", divide="ignore"):
        # den == 0 only when u == 0 or the segment carries no mass; both
        # cases resolve to theta = u
        theta = np.where(den > 0.0, u * total / den, u)
    return np.clip(theta, 0.0, np.nextafter(1.0, 0.0))
