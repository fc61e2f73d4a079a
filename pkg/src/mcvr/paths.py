"""Discretized Brownian-motion paths and the PCA machinery behind them.

The random-walk construction accumulates sqrt(dt)-scaled innovations; the
PCA construction maps a standard-normal vector through V L^{1/2} where
V L V^T is the eigendecomposition of the path (or asset-correlation)
covariance.  Both produce the same distribution, but PCA concentrates the
variance in the leading coordinates, which is what makes low-dimensional
importance sampling work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeGrid",
    "PcaBasis",
    "Construction",
    "bm_covariance",
    "eigendecompose",
    "kl_eigenvalue",
    "correlation_pca",
    "build_bm_path",
]


@dataclass(frozen=True)
class TimeGrid:
    """Equally spaced monitoring grid t_k = k*T/steps for k = 1..steps."""

    steps: int
    horizon: float = 1.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("time grid needs at least one step")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.steps + 1) * self.dt


def bm_covariance(grid: TimeGrid) -> np.ndarray:
    """Covariance of (W(t_1), ..., W(t_d)): entries min(t_i, t_j)."""
    t = grid.times
    return np.minimum(t[:, None], t[None, :])


def kl_eigenvalue(i: int) -> float:
    """Karhunen-Loeve eigenvalue ((i - 0.5) * pi)^-2 of BM on [0, 1]."""
    if i < 1:
        raise ValueError("index must be >= 1")
    return ((i - 0.5) * math.pi) ** -2


@dataclass(frozen=True, eq=False)
class PcaBasis:
    """Orthonormal eigenvectors (columns) and descending eigenvalues."""

    vectors: np.ndarray
    values: np.ndarray
    explained: np.ndarray = field(init=False)

    def __post_init__(self):
        fractions = np.cumsum(self.values) / self.values.sum()
        object.__setattr__(self, "explained", fractions)
        self.vectors.setflags(write=False)
        self.values.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def transform(self) -> np.ndarray:
        """V L^{1/2}: maps N(0, I) vectors to N(0, Sigma)."""
        return self.vectors * np.sqrt(self.values)


def eigendecompose(sigma: np.ndarray) -> PcaBasis:
    """Spectral decomposition of a symmetric positive-definite matrix.

    Eigenvalues are sorted descending and each eigenvector's
    largest-magnitude entry is made positive, so the basis is
    deterministic across platforms.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
        raise ValueError("covariance must be symmetric")
    try:
        values, vectors = np.linalg.eigh(sigma)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defective input
        raise ValueError("eigendecomposition did not converge") from exc
    if values[0] <= 0.0:
        raise ValueError("covariance must be positive-definite")
    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = vectors[:, order]
    anchor = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[anchor, np.arange(vectors.shape[1])])
    vectors = vectors * signs
    return PcaBasis(vectors=vectors, values=values)


def correlation_pca(n_assets: int, rho: float) -> PcaBasis:
    """Basis of the equicorrelation matrix (1 on the diagonal, rho off it)."""
    if n_assets < 1:
        raise ValueError("need at least one asset")
    if n_assets > 1 and not (-1.0 / (n_assets - 1) < rho < 1.0):
        raise ValueError("equicorrelation matrix is not positive-definite")
    corr = np.full((n_assets, n_assets), rho)
    np.fill_diagonal(corr, 1.0)
    return eigendecompose(corr)


@dataclass(frozen=True, eq=False)
class Construction:
    """How standard-normal vectors become correlated Gaussian drivers.

    kind 'random-walk' needs a grid and accumulates sqrt(dt) * z; kind
    'pca' applies a dense basis transform (BM covariance for paths,
    asset correlation for terminal baskets).
    """

    kind: str
    grid: TimeGrid | None = None
    basis: PcaBasis | None = None

    def __post_init__(self):
        if self.kind not in ("random-walk", "pca"):
            raise ValueError(f"unknown construction kind {self.kind!r}")
        if self.kind == "random-walk" and self.grid is None:
            raise ValueError("random-walk construction requires a time grid")
        if self.kind == "pca" and self.basis is None:
            raise ValueError("pca construction requires a basis")

    @property
    def dim(self) -> int:
        return self.grid.steps if self.kind == "random-walk" else self.basis.dim

    def build(self, z: np.ndarray) -> np.ndarray:
        """Map (n, d) standard normals to (n, d) correlated drivers."""
        z = np.atleast_2d(z)
        if z.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {z.shape[1]}")
        if self.kind == "random-walk":
            return np.cumsum(z, axis=1) * math.sqrt(self.grid.dt)
        return z @ self.basis.transform.T


def build_bm_path(z: np.ndarray, construction: Construction) -> np.ndarray:
    """Brownian values W(t_1..t_d) for innovation vector(s) ``z``."""
    return construction.build(z)
