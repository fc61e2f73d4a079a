"""Market models and payouts composing the discounted integrand.

A Scenario ties together a model, a payout, and a path construction so
that every estimator sees one thing: a non-negative function of a
standard-normal vector, evaluated in batches.  Black-Scholes values use
the exact lognormal map of the Brownian path (no discretization bias);
the CIR short rate uses a full-truncation Euler scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .paths import Construction, TimeGrid

__all__ = [
    "BsModel",
    "CirModel",
    "Payout",
    "Scenario",
    "bs_path",
    "cir_path",
    "evaluate_payout",
]

PAYOUT_KINDS = (
    "straddle",
    "asian-call",
    "asian-knockout",
    "asian-straddle",
    "basket-average",
    "basket-max",
    "cir-cap",
)

_BASKET_KINDS = ("basket-average", "basket-max")


@dataclass(frozen=True)
class BsModel:
    """Black-Scholes dynamics S(t) = S0 exp[(r - 0.5 s^2) t + s W(t)]."""

    spot: float = 100.0
    vol: float = 0.3
    rate: float = 0.05
    horizon: float = 1.0

    def __post_init__(self):
        if self.spot <= 0 or self.vol < 0 or self.horizon <= 0:
            raise ValueError("BsModel requires spot > 0, vol >= 0, horizon > 0")


@dataclass(frozen=True)
class CirModel:
    """Square-root diffusion dr = kappa (theta - r) dt + sigma sqrt(r) dW."""

    r0: float = 0.07
    kappa: float = 0.2
    theta: float = 0.075
    vol: float = 0.02
    grid: TimeGrid = TimeGrid(16, 1.0)

    def __post_init__(self):
        if self.r0 <= 0 or self.kappa < 0 or self.theta <= 0 or self.vol < 0:
            raise ValueError("CirModel parameter out of range")


@dataclass(frozen=True)
class Payout:
    """Payout kind plus strike (and knock-out level where applicable)."""

    kind: str
    strike: float
    knockout: float | None = None

    def __post_init__(self):
        if self.kind not in PAYOUT_KINDS:
            raise ValueError(f"unknown payout kind {self.kind!r}")
        if self.strike <= 0:
            raise ValueError("strike must be positive")
        if self.kind == "asian-knockout":
            if self.knockout is None or self.knockout <= self.strike:
                raise ValueError("knock-out level must exceed the strike")
        elif self.knockout is not None:
            raise ValueError("knock-out level only applies to asian-knockout")


def bs_path(model: BsModel, w: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Asset values S(t_k) on the grid from BM values ``w`` (n, d)."""
    w = np.atleast_2d(w)
    drift = (model.rate - 0.5 * model.vol**2) * times
    return model.spot * np.exp(drift + model.vol * w)


def cir_path(model: CirModel, z: np.ndarray) -> np.ndarray:
    """Euler rate path r_{t_0}..r_{t_{d-1}} from innovations ``z`` (n, d).

    Full truncation: the diffusion reads sqrt(max(r, 0)), so a rate that
    dips negative cannot produce a NaN.  The final innovation never
    enters (rates beyond t_{d-1} are not paid on).
    """
    z = np.atleast_2d(z)
    d = model.grid.steps
    if z.shape[1] != d:
        raise ValueError(f"expected innovation dimension {d}, got {z.shape[1]}")
    dt = model.grid.dt
    sqdt = math.sqrt(dt)
    rates = np.empty_like(z)
    rates[:, 0] = model.r0
    for k in range(d - 1):
        rk = rates[:, k]
        rates[:, k + 1] = (
            rk
            + model.kappa * (model.theta - rk) * dt
            + model.vol * np.sqrt(np.maximum(rk, 0.0)) * sqdt * z[:, k]
        )
    return rates


def cir_cap_value(rates: np.ndarray, strike: float, dt: float) -> np.ndarray:
    """Discounted cap cashflows: sum_i exp[-dt sum_{j<=i} r_j] (r_i - K)+."""
    rates = np.atleast_2d(rates)
    discounts = np.exp(-dt * np.cumsum(rates, axis=1))
    return np.sum(discounts * np.maximum(rates - strike, 0.0), axis=1)


def evaluate_payout(payout: Payout, values: np.ndarray, grid: TimeGrid | None = None) -> np.ndarray:
    """Cashflow per row of ``values``.

    ``values`` holds asset paths for the path payouts and terminal
    prices per asset for the basket payouts; those cashflows are not
    discounted.  For cir-cap, ``values`` is the rate path, ``grid`` is
    required, and the result is already discounted along the realized
    path.
    """
    values = np.atleast_2d(values)
    kind = payout.kind
    if kind == "straddle":
        return np.abs(values[:, -1] - payout.strike)
    if kind == "asian-call":
        return np.maximum(values.mean(axis=1) - payout.strike, 0.0)
    if kind == "asian-knockout":
        avg = values.mean(axis=1)
        return np.maximum(avg - payout.strike, 0.0) * (avg < payout.knockout)
    if kind == "asian-straddle":
        return np.abs(values.mean(axis=1) - payout.strike)
    if kind == "basket-average":
        return np.maximum(values.mean(axis=1) - payout.strike, 0.0)
    if kind == "basket-max":
        return np.maximum(values.max(axis=1) - payout.strike, 0.0)
    if kind == "cir-cap":
        if grid is None:
            raise ValueError("cir-cap payout needs the time grid for discounting")
        return cir_cap_value(values, payout.strike, grid.dt)
    raise ValueError(f"unknown payout kind {kind!r}")  # pragma: no cover


@dataclass(frozen=True)
class Scenario:
    """A pricing problem as a non-negative integrand on R^d.

    ``evaluate`` composes construction -> model -> payout -> discount for
    a batch of standard-normal rows.  Immutable, so one scenario can be
    shared across replicated runs.
    """

    name: str
    model: BsModel | CirModel
    payout: Payout
    construction: Construction
    u_size: int = 1
    qnpis_h_mult: float = 3.0

    def __post_init__(self):
        if not 1 <= self.u_size <= min(3, self.dim):
            raise ValueError("u_size must be in 1..min(3, dim)")

    @property
    def dim(self) -> int:
        return self.construction.dim

    @property
    def is_basket(self) -> bool:
        return self.payout.kind in _BASKET_KINDS

    @property
    def grid(self) -> TimeGrid | None:
        if isinstance(self.model, CirModel):
            return self.model.grid
        if self.construction.grid is not None:
            return self.construction.grid
        return None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Discounted payout phi(x) >= 0 for each row of ``x`` (n, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {x.shape[1]}")
        if isinstance(self.model, CirModel):
            # discounting happens along the realized rate path
            if self.construction.kind == "random-walk":
                innovations = x
            else:
                w = self.construction.build(x)
                innovations = np.diff(w, axis=1, prepend=0.0) / math.sqrt(self.grid.dt)
            rates = cir_path(self.model, innovations)
            return cir_cap_value(rates, self.payout.strike, self.grid.dt)
        if self.is_basket:
            z = self.construction.build(x)
            t = self.model.horizon
            spots = self.model.spot * np.exp(
                (self.model.rate - 0.5 * self.model.vol**2) * t
                + self.model.vol * math.sqrt(t) * z
            )
            cash = evaluate_payout(self.payout, spots)
        else:
            w = self.construction.build(x)
            s = bs_path(self.model, w, self.grid.times)
            cash = evaluate_payout(self.payout, s)
        return math.exp(-self.model.rate * self.model.horizon) * cash
