"""Two-stage nonparametric partial importance sampling.

Stage 1 draws trial points whose u-coordinates are uniform on a box wide
enough that M standard normals would escape it only with probability
eps, weights them by payout times density ratio, and bins the weighted
u-coordinates into an LBFP estimate of the marginalized optimal
proposal.  Stage 2 samples the u-coordinates from that estimate (optionally
defended with a uniform mixture component), the remaining coordinates
from the standard normal, and averages the reweighted payouts.

The bin width follows the Gaussian reference rule: plug weighted sample
moments into the optimal-width formula and scale by a configurable
multiplier (quasi-random stage 2 wants a coarser grid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lbfp import Grid, LbfpDensity, build_weighted_histogram
from .rng import PointStream, derive_seed, inv_normal

__all__ = [
    "TrialFailure",
    "NpisConfig",
    "TrialDistribution",
    "ProposalEstimate",
    "EstimateResult",
    "rho_m",
    "select_bin_width",
    "stage_one",
    "stage_two",
    "npis_estimate",
    "qnpis_estimate",
]

_BLOCK = 1 << 15
_MIN_TOTAL_BINS = 4
_MAX_TOTAL_BINS = 1 << 18


class TrialFailure(RuntimeError):
    """No trial sample produced a positive payout; the proposal is undefined."""


def rho_m(m_count: int, eps: float) -> float:
    """Half-width of the trial box: the (1 + (1-eps)^{1/M})/2 normal quantile.

    With this choice, P(max_i |Z_i| > rho) = eps over M standard normals.
    """
    if m_count < 1:
        raise ValueError("sample count must be >= 1")
    if not 0.0 < eps < 1.0:
        raise ValueError("tail mass must lie in (0, 1)")
    level = 0.5 * (1.0 + (1.0 - eps) ** (1.0 / m_count))
    return inv_normal(level)


def _std_normal_pdf_product(x: np.ndarray) -> np.ndarray:
    """Product of standard-normal densities across columns."""
    x = np.atleast_2d(x)
    k = x.shape[1]
    return (2.0 * math.pi) ** (-0.5 * k) * np.exp(-0.5 * np.sum(x * x, axis=1))


@dataclass(frozen=True)
class TrialDistribution:
    """Uniform box on the u-coordinates times standard normal elsewhere."""

    u_size: int
    dim: int
    half_width: float

    def __post_init__(self):
        if not 1 <= self.u_size <= min(3, self.dim):
            raise ValueError("u_size must be in 1..min(3, dim)")
        if self.half_width <= 0:
            raise ValueError("box half-width must be positive")

    def sample(self, stream: PointStream, n: int) -> np.ndarray:
        if stream.dim != self.dim:
            raise ValueError("stream dimension does not match trial distribution")
        u = stream.take(n)
        x = np.empty_like(u)
        m = self.u_size
        x[:, :m] = (2.0 * u[:, :m] - 1.0) * self.half_width
        if m < self.dim:
            x[:, m:] = inv_normal(u[:, m:])
        return x

    def density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        m = self.u_size
        in_box = np.all(np.abs(x[:, :m]) <= self.half_width, axis=1)
        box = (2.0 * self.half_width) ** -m
        return in_box * box * _std_normal_pdf_product(x[:, m:])


def select_bin_width(
    points: np.ndarray,
    weights: np.ndarray,
    u_size: int,
    half_width: float,
    h_mult: float = 1.0,
) -> float:
    """Gaussian reference bin width for the weighted trial sample.

    H1 = (98/2880) sum_i sigma_i^-4 over the u-coordinates' weighted
    variances, H2 = rho^{|u|} exp[sum mu_i^2] over the weighted means of
    the remaining coordinates, and

        h = m_h (|u| H2 2^{|u|} / (4 H1 3^{|u|}))^{1/(4+|u|)} M^{-1/(4+|u|)},

    clamped so the grid ends up with between 4 and 2^18 bins in total.
    """
    points = np.atleast_2d(points)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        raise ValueError("weights must have positive sum")
    m = u_size
    wn = weights / total
    xu = points[:, :m]
    mu_u = wn @ xu
    var_u = wn @ (xu - mu_u) ** 2
    if np.any(var_u <= 0):
        raise ValueError("degenerate proposal: zero weighted variance on u")
    h1 = (98.0 / 2880.0) * np.sum(var_u**-2)
    mu_rest = wn @ points[:, m:] if m < points.shape[1] else np.empty(0)
    h2 = half_width**m * math.exp(float(np.sum(mu_rest**2)))
    m_count = len(weights)
    h = h_mult * (m * h2 * 2**m / (4.0 * h1 * 3**m)) ** (1.0 / (4 + m))
    h *= m_count ** (-1.0 / (4 + m))

    per_dim = int(np.ceil(2.0 * half_width / h - 1e-12))
    low = int(np.ceil(_MIN_TOTAL_BINS ** (1.0 / m) - 1e-12))
    high = int(2.0 ** (18.0 / m))
    if per_dim < low:
        h = 2.0 * half_width / low
    elif per_dim > high:
        h = 2.0 * half_width / high
    return float(h)


@dataclass(frozen=True, eq=False)
class ProposalEstimate:
    """Stage-1 output: the LBFP proposal plus everything stage 2 needs.

    ``normalizer`` is the mean trial weight (1/M) sum omega, itself an
    unbiased estimate of the target integral.  The defensive mixture
    spreads ``beta`` of the sampling mass uniformly over the LBFP support
    box, which bounds the realizable importance weights while keeping
    the estimator unbiased; beta = 0 reproduces the bare algorithm.
    """

    density: LbfpDensity
    normalizer: float
    u_size: int
    beta: float
    half_width: float

    def mixture_density(self, xu: np.ndarray) -> np.ndarray:
        xu = np.atleast_2d(xu)
        vals = self.density.evaluate(xu)
        if self.beta == 0.0:
            return vals
        grid = self.density.grid
        inside = np.all((xu >= grid.support_lower) & (xu < grid.support_upper), axis=1)
        return (1.0 - self.beta) * vals + self.beta * inside / grid.support_volume

    def sample_xu(self, uniforms: np.ndarray) -> np.ndarray:
        """Draw u-coordinates from the mixture; consumes u_size+1 uniforms."""
        uniforms = np.atleast_2d(uniforms)
        if self.beta == 0.0:
            return self.density.sample(uniforms)
        grid = self.density.grid
        pick = uniforms[:, 0]
        from_box = pick < self.beta
        rescaled = uniforms.copy()
        rescaled[:, 0] = np.where(from_box, 0.0, (pick - self.beta) / (1.0 - self.beta))
        out = self.density.sample(rescaled)
        span = grid.support_upper - grid.support_lower
        box_pts = grid.support_lower + uniforms[:, 1:] * span
        out[from_box] = box_pts[from_box]
        return out


@dataclass
class NpisConfig:
    """Knobs of the two-stage estimator.

    ``m`` defaults to max(256, 0.25 N) (1024 for the quasi-random
    variant); ``h_mult`` of None picks the method default: 1 for plain
    NPIS, the scenario's quasi-random multiplier (3, or 2 for bimodal
    payouts) for QNPIS.
    """

    n: int
    m: int | None = None
    eps: float = 1e-4
    beta: float = 0.05
    h_mult: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("stage-2 sample count must be positive")
        if self.m is not None and self.m < 2:
            raise ValueError("stage-1 sample count must be at least 2")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("defensive mixture weight must lie in [0, 1)")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("tail mass must lie in (0, 1)")

    def resolved_m(self, quasi: bool = False) -> int:
        if self.m is not None:
            return self.m
        if quasi:
            return 1024
        return max(256, math.ceil(0.25 * self.n))


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Estimate plus the per-sample terms it averaged."""

    estimate: float
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def std_error(self) -> float:
        if self.values.size < 2:
            return 0.0
        return float(self.values.std(ddof=1) / math.sqrt(self.values.size))


def stage_one(
    scenario,
    u_size: int,
    m_count: int,
    stream: PointStream,
    *,
    eps: float = 1e-4,
    h_mult: float = 1.0,
    beta: float = 0.0,
) -> ProposalEstimate:
    """Estimate the marginalized optimal proposal from weighted trial draws."""
    half = rho_m(m_count, eps)
    trial = TrialDistribution(u_size=u_size, dim=scenario.dim, half_width=half)
    x = trial.sample(stream, m_count)
    phi = scenario.evaluate(x)
    if not np.any(phi > 0):
        raise TrialFailure(
            f"none of the {m_count} trial samples produced a positive payout"
        )
    # omega = phi * p / q0; the off-u normal factors cancel exactly
    weights = phi * _std_normal_pdf_product(x[:, :u_size]) * (2.0 * half) ** u_size
    h = select_bin_width(x, weights, u_size, half, h_mult)
    grid = Grid.symmetric(u_size, half, h)
    density = build_weighted_histogram(x[:, :u_size], weights, grid)
    return ProposalEstimate(
        density=density,
        normalizer=float(weights.mean()),
        u_size=u_size,
        beta=beta,
        half_width=half,
    )


def stage_two(scenario, proposal: ProposalEstimate, n: int, stream: PointStream) -> EstimateResult:
    """Partial importance sampling with the stage-1 proposal.

    The stream must provide u_size+1 coordinates for the proposal sampler
    followed by dim-u_size coordinates for the standard-normal remainder,
    hence dimension dim+1.  Evaluation is chunked so large N stays within
    a bounded memory footprint.
    """
    m = proposal.u_size
    d = scenario.dim
    if stream.dim != d + 1:
        raise ValueError(f"stage-2 stream must have dimension {d + 1}")
    values = np.empty(n)
    done = 0
    x = np.empty((min(_BLOCK, n), d))
    while done < n:
        k = min(_BLOCK, n - done)
        u = stream.take(k)
        xu = proposal.sample_xu(u[:, : m + 1])
        x[:k, :m] = xu
        if m < d:
            x[:k, m:] = inv_normal(u[:, m + 1 :])
        phi = scenario.evaluate(x[:k])
        weights = _std_normal_pdf_product(xu) / proposal.mixture_density(xu)
        values[done : done + k] = phi * weights
        done += k
    return EstimateResult(estimate=float(values.mean()), values=values)


def npis_estimate(scenario, config: NpisConfig, seed: int, u_size: int | None = None) -> EstimateResult:
    """Full NPIS run: pseudo-random trial stage, pseudo-random stage 2."""
    u = scenario.u_size if u_size is None else u_size
    h_mult = 1.0 if config.h_mult is None else config.h_mult
    trial_stream = PointStream("pseudo", scenario.dim, derive_seed(seed, 1))
    proposal = stage_one(
        scenario, u, config.resolved_m(), trial_stream,
        eps=config.eps, h_mult=h_mult, beta=config.beta,
    )
    main_stream = PointStream("pseudo", scenario.dim + 1, derive_seed(seed, 2))
    return stage_two(scenario, proposal, config.n, main_stream)


def qnpis_estimate(scenario, config: NpisConfig, seed: int, u_size: int | None = None) -> EstimateResult:
    """NPIS with a randomly shifted Sobol stage 2 (trial stage stays pseudo).

    Sobol coordinate 0 drives the proposal's cell selection and
    coordinates 1..|u| its conditional inversions, so the most accurate
    coordinates land on the subspace that matters most.
    """
    u = scenario.u_size if u_size is None else u_size
    h_mult = config.h_mult
    if h_mult is None:
        h_mult = getattr(scenario, "qnpis_h_mult", 3.0)
    trial_stream = PointStream("pseudo", scenario.dim, derive_seed(seed, 1))
    proposal = stage_one(
        scenario, u, config.resolved_m(quasi=True), trial_stream,
        eps=config.eps, h_mult=h_mult, beta=config.beta,
    )
    main_stream = PointStream("sobol", scenario.dim + 1, derive_seed(seed, 2))
    return stage_two(scenario, proposal, config.n, main_stream)
