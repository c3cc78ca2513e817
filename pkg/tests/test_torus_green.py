import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from liouville_bubbles.exceptions import CentersTooClose, DomainError, SingularPoint
from liouville_bubbles.torus_green import (
    GreenEvaluator,
    TorusDomain,
    g_tilde,
    g_tilde_gradient,
    green_eval,
    green_gradient,
    green_regular_part,
    voronoi_partition,
)

coord = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)
point = st.tuples(coord, coord).map(np.array)


def dual_sum_half_diagonal(K):
    """Square partial sum of ``sum_{k != 0} cos(k.d)/|k|^2`` at ``d = (1/2, 1/2)``."""
    m = np.arange(-K, K + 1)
    mm, nn = np.meshgrid(m, m, indexing="ij")
    k2 = 4 * np.pi**2 * (mm**2 + nn**2)
    safe = np.where(k2 > 0, k2, 1.0)
    return float(np.sum(np.where(k2 > 0, np.cos(np.pi * (mm + nn)) / safe, 0.0)))


def smooth_bump(r, R):
    """Equal to 1 for ``r < R/2``, 0 for ``r > R``, infinitely differentiable."""
    s = np.clip((np.asarray(r) - R / 2) / (R / 2), 0.0, 1.0)

    def f(u):
        return np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)

    return f(1 - s) / (f(1 - s) + f(s))


def green_mean(green, p, M=128, R=0.4):
    """Cell average of ``G(., p)`` by subtracting a cut-off logarithm handled radially."""
    dom = green.domain
    x = dom.grid_points(M).reshape(-1, 2) + 0.5 / M
    r = dom.distance(x, p)
    smooth = green.gamma(x, p) - (1 - smooth_bump(r, R)) * np.log(r) / (2 * np.pi)
    radial = quad(lambda s: smooth_bump(s, R) * np.log(s) * s, 0, R, points=[R / 2], limit=200, epsabs=1e-14)[0]
    return float(smooth.mean() - radial)


def fd_laplacian(green, x, p, h):
    e = np.eye(2) * h
    c = green.G(x, p)
    return float((green.G(x + e[0], p) + green.G(x - e[0], p) + green.G(x + e[1], p) + green.G(x - e[1], p) - 4 * c)
                 / h**2)


class TestDomain:
    def test_area_must_be_one(self):
        with pytest.raises(DomainError, match="area"):
            TorusDomain((2.0, 0.0), (0.0, 1.0))

    def test_dependent_generators(self):
        with pytest.raises(DomainError):
            TorusDomain((1.0, 0.0), (2.0, 0.0))

    @given(point)
    def test_canonical_is_in_cell(self, x):
        dom = TorusDomain((1.0, 0.0), (0.3, 1.0))
        f = dom.to_frac(dom.canonical(x))
        assert np.all(f >= -1e-12) and np.all(f < 1 + 1e-12)
        assert dom.distance(dom.canonical(x), x) < 1e-12

    @given(point, point)
    def test_wrap_is_shortest_image(self, x, y):
        dom = TorusDomain((1.0, 0.0), (0.3, 1.0))
        d = dom.distance(x, y)
        L = dom.lattice_vectors(8.0)
        brute = np.min(np.linalg.norm(x - y + L, axis=1))
        assert d == pytest.approx(brute, abs=1e-12)


class TestGreen:
    @settings(max_examples=25, deadline=None)
    @given(point, point)
    def test_periodicity(self, x, p):
        g = GreenEvaluator(TorusDomain())
        if g.domain.distance(x, p) < 1e-3:
            return
        assert abs(g.G(x + np.array([1.0, 0.0]), p) - g.G(x, p)) < 1e-10
        assert abs(g.G(x, p + np.array([0.0, 1.0])) - g.G(x, p)) < 1e-10
        assert abs(g.gamma(x + np.array([0.0, 1.0]), p) - g.gamma(x, p)) < 1e-10

    @settings(max_examples=25, deadline=None)
    @given(point, point)
    def test_symmetry(self, x, p):
        g = GreenEvaluator(TorusDomain((1.0, 0.0), (0.3, 1.0)))
        if g.domain.distance(x, p) < 1e-3:
            return
        assert abs(g.G(x, p) - g.G(p, x)) < 1e-10
        assert abs(g.gamma(x, p) - g.gamma(p, x)) < 1e-10

    def test_mean_zero(self, green):
        assert abs(green_mean(green, np.array([0.3, 0.7]))) < 1e-8

    def test_half_diagonal_matches_dual_lattice_sum(self, green):
        # partial sums converge like 1/K^2, so one Richardson step removes the leading error
        s2, s3 = dual_sum_half_diagonal(512), dual_sum_half_diagonal(1024)
        oracle = (4 * s3 - s2) / 3
        assert green_eval(green, [0.5, 0.5], [0.0, 0.0]) == pytest.approx(oracle, abs=1e-9)

    def test_laplacian_away_from_pole(self, green):
        x, p = np.array([0.31, 0.62]), np.array([0.0, 0.0])
        errs = [abs(fd_laplacian(green, x, p, h) - 1.0) for h in (0.04, 0.02, 0.01)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(np.abs(orders - 2.0) < 0.1)

    def test_robin_constant_limit_sequence(self, green):
        p = np.array([0.2, 0.4])
        vals = [green.gamma(p + np.array([r, 0.0]), p) for r in (1e-2, 1e-3, 1e-4)]
        assert abs(vals[-1] - green.robin_constant) < 1e-6
        assert abs(vals[-2] - vals[-1]) < 1e-5

    def test_robin_constant_is_translation_invariant(self, green):
        a = green.gamma(np.array([0.1, 0.1]), np.array([0.1, 0.1]))
        b = green.gamma(np.array([0.7, 0.3]), np.array([0.7, 0.3]))
        assert abs(a - b) < 1e-12

    def test_gradient_matches_finite_differences(self, green):
        x, p = np.array([0.5, 0.5]), np.array([0.05, 0.1])
        h = 1e-5
        fd = np.array([(green.G(x + e, p) - green.G(x - e, p)) / (2 * h) for e in np.eye(2) * h])
        an = green_gradient(green, x, p)
        assert np.max(np.abs(an - fd)) / np.max(np.abs(an)) < 1e-6
        assert np.allclose(green_gradient(green, x, p, which="p"), -an)

    def test_regular_part_gradient_vanishes_at_symmetry_point(self, green):
        p = np.array([0.5, 0.5])
        assert np.max(np.abs(green.grad_gamma(p, p))) < 1e-12

    def test_gradient_periodicity(self, green):
        x, p = np.array([0.21, 0.33]), np.array([0.7, 0.1])
        assert np.max(np.abs(green.grad_G(x + np.array([1.0, 0.0]), p) - green.grad_G(x, p))) < 1e-10

    def test_hessian_trace_is_one(self, green):
        H = green.hess_G(np.array([0.21, 0.33]), np.array([0.7, 0.1]))
        assert abs(np.trace(H) - 1.0) < 1e-9

    def test_singular_point(self, green):
        with pytest.raises(SingularPoint):
            green.G(np.array([0.2, 0.2]), np.array([1.2, 0.2]))

    def test_grid_green_matches_pointwise(self, green):
        p = np.array([0.013, 0.027])
        G, gam = green.grid_green(16, p)
        pts = green.domain.grid_points(16).reshape(-1, 2)
        assert np.max(np.abs(G.ravel() - green.G(pts, p))) < 1e-10
        assert np.max(np.abs(gam.ravel() - green.gamma(pts, p))) < 1e-10


class TestGTilde:
    def test_single_center_is_regular_part(self, green):
        x, p = np.array([0.3, 0.1]), np.array([[0.6, 0.6]])
        assert g_tilde(green, 0, x, p) == green_regular_part(green, x, p[0])

    def test_two_centers_at_first_center(self, green):
        p = np.array([[0.2, 0.3], [0.7, 0.6]])
        val = g_tilde(green, 0, p[0], p)
        assert val == pytest.approx(green.robin_constant + green_eval(green, p[0], p[1]), abs=1e-14)

    def test_quarter_points_against_dual_sum(self, green):
        p = np.array([[0.25, 0.25], [0.75, 0.75]])
        x = np.array([0.25, 0.75])
        # x - p_2 = (-1/2, 0); summing the dual series over one index in closed form,
        # sum_n (-1)^n / (m^2 + n^2) = pi / (m sinh(pi m)), leaves a fast series
        m = np.arange(1, 40)
        oracle_G = (-np.pi**2 / 6 + 2 * np.sum(np.pi / (m * np.sinh(np.pi * m)))) / (4 * np.pi**2)
        expected = green.gamma(x, p[0]) + oracle_G
        assert g_tilde(green, 0, x, p) == pytest.approx(expected, abs=1e-11)

    def test_gradient(self, green):
        p = np.array([[0.2, 0.3], [0.7, 0.6]])
        x = np.array([0.4, 0.9])
        h = 1e-5
        fd = np.array([(g_tilde(green, 1, x + e, p) - g_tilde(green, 1, x - e, p)) / (2 * h) for e in np.eye(2) * h])
        assert np.allclose(g_tilde_gradient(green, 1, x, p), fd, atol=1e-7)


class TestPartition:
    def test_single_cell_is_whole_torus(self, square):
        part = voronoi_partition(square, [[0.3, 0.4]])
        assert part.cell_areas()[0] == pytest.approx(1.0, abs=1e-12)
        assert np.all(part.labels(np.random.default_rng(0).random((50, 2))) == 0)

    def test_antipodal_split_and_tie_break(self, square):
        part = voronoi_partition(square, [[0.25, 0.25], [0.75, 0.75]])
        assert np.allclose(part.cell_areas(), 0.5, atol=1e-12)
        mid = np.array([[0.5, 0.5]])
        assert part.labels(mid)[0] == 0

    def test_areas_against_monte_carlo(self, square):
        rng = np.random.default_rng(7)
        centers = np.array([[0.1, 0.2], [0.55, 0.35], [0.4, 0.8]])
        part = voronoi_partition(square, centers)
        areas = part.cell_areas()
        assert abs(areas.sum() - 1.0) < 1e-10
        x = rng.random((200_000, 2))
        frac = np.bincount(part.labels(x), minlength=3) / x.shape[0]
        assert np.max(np.abs(frac - areas)) < 5e-3

    def test_balls_must_fit(self, square):
        with pytest.raises(CentersTooClose):
            voronoi_partition(square, [[0.1, 0.1], [0.2, 0.1]], deltas=0.05)
