"""LBFP density tests: normalization, blend formula, exact sampling."""

import math
from itertools import product

import numpy as np
import pytest
from scipy import stats

from mcvr.lbfp import Grid, LbfpDensity, build_weighted_histogram
from mcvr.rng import PointStream


def brute_force_blend(density, x):
    """Direct expansion of the multilinear interpolation, coded independently.

    For x in the cell spanning midpoints (t_k, t_k + h) per dimension,
    sum over the 2^m corners of prod_i ((x_i-t_i)/h)^{j_i}
    (1-(x_i-t_i)/h)^{1-j_i} times the corner height.
    """
    g = density.grid
    m = g.dim
    total = 0.0
    mids = [g.midpoints(j) for j in range(m)]
    for j_vec in product((0, 1), repeat=m):
        term = 1.0
        corner = []
        ok = True
        for i in range(m):
            k = int(math.floor((x[i] - mids[i][0]) / g.bin_width))
            if not 0 <= k < len(mids[i]) - 1:
                ok = False
                break
            t_k = mids[i][k]
            frac = (x[i] - t_k) / g.bin_width
            term *= frac ** j_vec[i] * (1.0 - frac) ** (1 - j_vec[i])
            corner.append(k + j_vec[i])
        if ok:
            total += term * density.heights[tuple(corner)]
    return total / density.normalizer


def gaussian_cloud(n, dim, seed, scale=1.0):
    return scale * PointStream("pseudo", dim, seed=seed).normals(n)


def build_gaussian_density(n=20_000, dim=1, seed=3, half=4.0, h=0.25):
    pts = np.clip(gaussian_cloud(n, dim, seed), -half, half)
    w = np.ones(n)
    return build_weighted_histogram(pts, w, Grid.symmetric(dim, half, h))


def test_single_point_gives_unit_mass_tent():
    grid = Grid.symmetric(1, 2.0, 0.5)
    dens = build_weighted_histogram(np.array([[0.3]]), np.array([1.0]), grid)
    masses = dens.cell_masses()
    assert masses.sum() == pytest.approx(1.0, abs=1e-12)
    # mass concentrated in the two cells around the occupied bin
    assert np.sort(masses)[-2:].sum() == pytest.approx(1.0, abs=1e-12)
    # peak height at the bin midpoint equals 1/h
    k = int((0.3 - grid.lower[0]) / grid.bin_width)
    mid = grid.lower[0] + (k + 0.5) * grid.bin_width
    assert dens.evaluate([[mid]])[0] == pytest.approx(1.0 / grid.bin_width, rel=1e-12)


def test_equal_fill_gives_flat_interior():
    grid = Grid.symmetric(2, 1.0, 0.5)
    mids = [grid.midpoints(j)[1:-1] for j in range(2)]
    pts = np.array([[a, b] for a in mids[0] for b in mids[1]])
    dens = build_weighted_histogram(pts, np.ones(len(pts)), grid)
    box_volume = float(np.prod(grid.upper - grid.lower))
    interior = np.array([[0.1, -0.2], [0.4, 0.4], [0.0, 0.0]])
    assert np.allclose(dens.evaluate(interior), 1.0 / box_volume, rtol=1e-12)
    assert dens.cell_masses().sum() == pytest.approx(1.0, abs=1e-12)


def test_build_rejects_degenerate_input():
    grid = Grid.symmetric(1, 1.0, 0.5)
    with pytest.raises(ValueError):
        build_weighted_histogram(np.array([[0.0]]), np.array([0.0]), grid)
    with pytest.raises(ValueError):
        build_weighted_histogram(np.array([[5.0]]), np.array([1.0]), grid)
    with pytest.raises(ValueError):
        build_weighted_histogram(np.array([[0.0]]), np.array([-1.0]), grid)


def test_lbfp_beats_raw_histogram_on_ise():
    dens = build_gaussian_density(n=10_000, h=0.3)
    grid = dens.grid
    xs = np.linspace(-4.5, 4.5, 20_001)
    truth = np.exp(-0.5 * xs**2) / math.sqrt(2 * math.pi)
    est = dens.evaluate(xs[:, None])
    # histogram estimate: piecewise-constant over the data bins
    idx = np.floor((xs - grid.lower[0]) / grid.bin_width).astype(int)
    ok = (idx >= 0) & (idx < grid.n_bins[0])
    hist = np.zeros_like(xs)
    hist[ok] = dens.heights[idx[ok] + 1] / dens.normalizer
    dx = xs[1] - xs[0]
    ise_lbfp = np.sum((est - truth) ** 2) * dx
    ise_hist = np.sum((hist - truth) ** 2) * dx
    assert ise_lbfp < ise_hist


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_eval_matches_brute_force_expansion(dim):
    rs = np.random.RandomState(100 + dim)
    pts = np.clip(rs.standard_normal((4000, dim)), -3, 3)
    dens = build_weighted_histogram(pts, rs.rand(4000), Grid.symmetric(dim, 3.0, 0.61))
    lo, hi = dens.grid.support_lower, dens.grid.support_upper
    xs = lo + (hi - lo) * rs.rand(1000 // dim, dim)
    fast = dens.evaluate(xs)
    slow = np.array([brute_force_blend(dens, x) for x in xs])
    assert np.max(np.abs(fast - slow)) < 1e-12


def test_eval_midpoint_and_linear_interpolation():
    grid = Grid.symmetric(1, 2.0, 1.0)
    heights = np.zeros(6)
    heights[2], heights[3] = 0.3, 0.5
    dens = LbfpDensity(grid, heights, normalizer=0.8)
    mids = grid.midpoints(0)
    assert dens.evaluate([[mids[2]]])[0] == pytest.approx(0.3 / 0.8, rel=1e-12)
    between = 0.5 * (mids[2] + mids[3])
    assert dens.evaluate([[between]])[0] == pytest.approx(0.5 * (0.3 + 0.5) / 0.8, rel=1e-12)
    assert dens.evaluate([[mids[0] - 0.6]])[0] == 0.0


def test_cell_mass_formulas():
    grid = Grid.symmetric(1, 2.0, 1.0)
    heights = np.zeros(6)
    heights[1:5] = [0.0, 2.0, 2.0, 0.4]
    dens = LbfpDensity(grid, heights, normalizer=2.2)
    # all corners equal c: mass = c h / norm
    assert dens.cell_mass([2]) == pytest.approx(2.0 * 1.0 / 2.2, rel=1e-12)
    # corners (0, b): triangle, b h / 2 / norm
    assert dens.cell_mass([1]) == pytest.approx(2.0 * 1.0 / 2.0 / 2.2, rel=1e-12)
    assert dens.cell_masses().sum() == pytest.approx(heights.sum() / 2.2, abs=1e-12)


def test_normalization_exact_for_many_random_builds():
    rs = np.random.RandomState(7)
    for trial in range(25):
        dim = rs.randint(1, 4)
        pts = np.clip(rs.standard_normal((500, dim)), -2.5, 2.5)
        w = rs.exponential(size=500) * (rs.rand(500) < 0.8)
        if not np.any(w > 0):
            continue
        dens = build_weighted_histogram(pts, w, Grid.symmetric(dim, 2.5, 0.41))
        assert abs(dens.cell_masses().sum() - 1.0) < 1e-10


def test_sampler_uniform_between_equal_corners():
    # cell with equal corner heights -> draws landing there are uniform
    grid = Grid.symmetric(1, 1.0, 1.0)
    heights = np.array([0.0, 1.0, 1.0, 0.0])
    dens = LbfpDensity(grid, heights, normalizer=1.0)
    u = PointStream("pseudo", 2, seed=8).take(100_000)
    draws = dens.sample(u).ravel()
    middle = draws[np.abs(draws) <= 0.5]
    assert len(middle) > 30_000
    res = stats.kstest(middle + 0.5, "uniform")
    assert res.pvalue > 0.001


def test_sampler_matches_analytic_tent_cdf():
    # two-bin tent: single occupied bin, peak 1/h at its midpoint
    grid = Grid.symmetric(1, 1.0, 1.0)
    dens = build_weighted_histogram(np.array([[0.2]]), np.array([1.0]), grid)
    mids = grid.midpoints(0)
    peak = mids[np.argmax(dens.heights)]
    u = PointStream("pseudo", 2, seed=10).take(100_000)
    draws = dens.sample(u).ravel()

    def tent_cdf(x):
        t = (x - (peak - 1.0)) / 1.0
        out = np.where(x < peak, 0.5 * np.clip(t, 0, 1) ** 2, 1 - 0.5 * np.clip(2 - t, 0, 1) ** 2)
        return np.where(x < peak - 1, 0.0, np.where(x > peak + 1, 1.0, out))

    xs = np.sort(draws)
    ecdf = np.arange(1, len(xs) + 1) / len(xs)
    assert np.max(np.abs(tent_cdf(xs) - ecdf)) < 0.01


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_sampler_chi_square_against_cell_masses(dim):
    rs = np.random.RandomState(40 + dim)
    pts = np.clip(rs.standard_normal((3000, dim)), -2, 2)
    dens = build_weighted_histogram(pts, rs.rand(3000), Grid.symmetric(dim, 2.0, 0.8))
    u = PointStream("pseudo", dim + 1, seed=50 + dim).take(100_000)
    draws = dens.sample(u)
    # assign each draw to its cell and compare counts with masses
    s = (draws - dens.grid.lower) / dens.grid.bin_width + 0.5
    cells = np.floor(s).astype(int)
    nc = tuple(int(n) + 1 for n in dens.grid.n_bins)
    flat = np.ravel_multi_index(tuple(cells[:, j] for j in range(dim)), nc)
    counts = np.bincount(flat, minlength=int(np.prod(nc))).astype(float)
    expected = dens.cell_masses().reshape(-1) * len(draws)
    # merge cells into <= 50 groups with expected count >= 5
    order = np.argsort(-expected)
    groups_obs, groups_exp = [], []
    acc_o = acc_e = 0.0
    for idx in order:
        acc_o += counts[idx]
        acc_e += expected[idx]
        if acc_e >= max(5.0, len(draws) / 50):
            groups_obs.append(acc_o)
            groups_exp.append(acc_e)
            acc_o = acc_e = 0.0
    groups_obs.append(acc_o)
    groups_exp.append(acc_e)
    obs = np.array(groups_obs)
    exp = np.array(groups_exp)
    keep = exp > 0
    chi2 = np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep])
    crit = stats.chi2.ppf(0.999, keep.sum() - 1)
    assert chi2 < crit


def test_sampler_outputs_stay_in_support():
    dens = build_gaussian_density(dim=2, n=5000, seed=77, half=3.0, h=0.5)
    u = PointStream("pseudo", 3, seed=78).take(50_000)
    draws = dens.sample(u)
    assert np.all(draws >= dens.grid.support_lower)
    assert np.all(draws < dens.grid.support_upper)


def test_sampling_ks_flat_2d_cell():
    # 2D flat cell: both in-cell coordinates must be independently uniform
    grid = Grid.symmetric(2, 1.0, 1.0)
    heights = np.zeros((4, 4))
    heights[1:3, 1:3] = 1.0
    dens = LbfpDensity(grid, heights, normalizer=1.0)
    u = PointStream("pseudo", 3, seed=13).take(100_000)
    draws = dens.sample(u)
    inside = np.all(np.abs(draws) <= 0.5, axis=1)
    cell_draws = draws[inside]
    assert len(cell_draws) > 20_000
    for j in range(2):
        res = stats.kstest(cell_draws[:, j] + 0.5, "uniform")
        assert res.pvalue > 0.001


def test_eval_continuity_across_cell_boundaries():
    rs = np.random.RandomState(3)
    dens = build_gaussian_density(dim=2, n=8000, seed=31, half=3.0, h=0.37)
    delta = 1e-10
    mids_x = dens.grid.midpoints(0)[1:-1]
    for _ in range(100):
        xb = mids_x[rs.randint(len(mids_x))]
        y = rs.uniform(-2.5, 2.5)
        lefts = dens.evaluate([[xb - delta, y]])[0]
        rights = dens.evaluate([[xb + delta, y]])[0]
        assert abs(lefts - rights) < 1e-8


def test_ise_decreases_when_bins_double():
    xs = np.linspace(-4.5, 4.5, 20_001)
    truth = np.exp(-0.5 * xs**2) / math.sqrt(2 * math.pi)
    dx = xs[1] - xs[0]
    ises = []
    for h in (1.6, 0.8):
        pts = np.clip(gaussian_cloud(500_000, 1, 19), -4, 4)
        dens = build_weighted_histogram(pts, np.ones(len(pts)), Grid.symmetric(1, 4.0, h))
        est = dens.evaluate(xs[:, None])
        ises.append(np.sum((est - truth) ** 2) * dx)
    assert ises[1] < ises[0]


def test_dump_writes_grid_file(tmp_path):
    dens = build_gaussian_density(n=2000, seed=55, half=2.0, h=0.5)
    out = tmp_path / "density.txt"
    dens.dump(out)
    rows = [line.split() for line in out.read_text().splitlines()]
    assert len(rows) == dens.heights.size
    mids = dens.grid.midpoints(0)
    assert float(rows[0][0]) == pytest.approx(mids[0])
    assert float(rows[0][1]) == pytest.approx(dens.heights[0] / dens.normalizer)
