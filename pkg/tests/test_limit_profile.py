import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from liouville_bubbles.exceptions import InvalidCouplingMatrix, MassInfeasible
from liouville_bubbles.limit_profile import (
    CouplingMatrix,
    LimitProfileSolver,
    check_masses,
    extract_asymptotics,
    integrate_profile,
    kernel_modes,
    lambda_IN,
    lambda_IN_gradient,
    lambda_subset,
    masses_for_initial_values,
    sigma_on_ray,
    solve_radial,
)

LN8 = np.log(8.0)


def planar_bubble(r):
    return np.log(8.0 / (1.0 + r**2) ** 2)


@pytest.fixture(scope="module")
def bubble():
    return solve_radial([[1.0]], [4.0], gauge=LN8)


class TestCoupling:
    def test_all_ones_is_rejected(self):
        with pytest.raises(InvalidCouplingMatrix):
            CouplingMatrix([[1.0, 1.0], [1.0, 1.0]])

    @pytest.mark.parametrize("A", [[[1.0, -0.1], [-0.1, 1.0]], [[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.2], [0.3, 1.0]]])
    def test_structural_conditions(self, A):
        with pytest.raises(InvalidCouplingMatrix):
            CouplingMatrix(A)


class TestHypersurface:
    def test_single_equation_root(self):
        for N in (1, 2, 3):
            assert abs(lambda_IN([[1.0]], [8 * np.pi * N], N)) < 1e-12

    @pytest.mark.parametrize("b", [0.2, 0.5, 2.0])
    def test_symmetric_pair(self, b):
        A = [[1.0, b], [b, 1.0]]
        N = 2
        s = 4.0 / (1.0 + b)
        assert abs(lambda_IN(A, [2 * np.pi * N * s] * 2, N)) < 1e-12
        assert np.allclose(np.array(A) @ [s, s], 4.0, atol=1e-12)
        assert np.allclose(sigma_on_ray(A, [1.0, 1.0]), s, atol=1e-12)

    def test_directional_derivative(self, asym_profile):
        A, sigma, N = asym_profile.A, asym_profile.sigma, 2
        rho = 2 * np.pi * N * sigma
        d = np.array([1.0, 1.0])
        h = 1e-6
        fd = (lambda_IN(A, rho + h * d, N) - lambda_IN(A, rho - h * d, N)) / (2 * h)
        exact = float(np.sum((4.0 - 2.0 * A @ sigma) * d) / (2 * np.pi * N))
        assert abs(fd - exact) < 1e-8
        assert abs(lambda_IN_gradient(A, rho, N) @ d - fd) < 1e-8
        # the quadratic form contributes twice its cross term, so the slope is
        # twice sum_i (2 - m_i) d_i / (2 pi N)
        half = float(np.sum((2.0 - A @ sigma) * d) / (2 * np.pi * N))
        assert fd / half == pytest.approx(2.0, abs=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.1, 10.0), st.floats(0.1, 10.0), st.floats(0.05, 3.0))
    def test_ray_point_is_on_hypersurface(self, d1, d2, b):
        assume(abs(b - 1.0) > 1e-3)
        A = np.array([[1.0, b], [b, 1.0]])
        sigma = sigma_on_ray(A, [d1, d2])
        assert abs(lambda_subset(A, sigma, [0, 1])) < 1e-9 * (1 + sigma.sum())

    def test_masses_off_hypersurface(self):
        with pytest.raises(MassInfeasible):
            check_masses([[1.0]], [3.9])

    def test_proper_subset_condition(self):
        # Lambda_{1}(sigma) = 4 s_1 - s_1^2 <= 0 once s_1 >= 4
        A = np.array([[1.0, 0.1], [0.1, 1.0]])
        sigma = sigma_on_ray(A, [1.0, 0.01])
        assert sigma[0] > 4.0
        with pytest.raises(MassInfeasible):
            check_masses(A, sigma)


class TestProfile:
    def test_explicit_bubble(self, bubble):
        r = np.concatenate([[0.0], np.geomspace(1e-6, 100.0, 400)])
        assert np.max(np.abs(bubble.evaluate(r)[0] - planar_bubble(r))) < 1e-7

    def test_bubble_asymptotics(self, bubble):
        m, I = extract_asymptotics(bubble)
        assert m[0] == pytest.approx(4.0, abs=1e-10)
        assert abs(I[0] - LN8) < 1e-4
        assert abs(bubble.slope_fit[0] - 4.0) < 1e-4

    def test_laplacian_is_minus_source(self, bubble):
        r = np.geomspace(1e-2, 1e2, 50)
        v, dv = bubble.evaluate(r, derivative=True)
        lap = bubble.second_derivative(r) + dv / r
        assert np.allclose(lap, bubble.laplacian(r), atol=1e-7)

    def test_asymmetric_masses_reintegrate(self, asym_profile):
        m = asym_profile.m_star
        assert abs(m[0] - m[1]) > 0.5
        again = masses_for_initial_values(asym_profile.A, asym_profile.initial_values)
        assert np.max(np.abs(again - asym_profile.sigma)) < 1e-6
        assert np.allclose(asym_profile.mass_integral(), 2 * np.pi * asym_profile.sigma, rtol=1e-6)

    def test_algebraic_exponents(self, asym_profile):
        assert np.array_equal(asym_profile.m_star, asym_profile.A @ asym_profile.sigma)
        assert np.max(np.abs(asym_profile.slope_fit - asym_profile.m_star)) < 1e-4

    def test_two_term_expansion_at_far_radius(self, asym_profile):
        A, m, I = asym_profile.A, asym_profile.m_star, asym_profile.I
        R = asym_profile.r_max
        expansion = I - m * np.log(R) - A @ (np.exp(I) / (m - 2.0) ** 2 * R ** (2.0 - m))
        assert np.max(np.abs(asym_profile.evaluate(np.array([R]))[:, 0] - expansion)) < 1e-6

    @pytest.mark.parametrize("lam", [0.5, 2.0])
    def test_dilation_covariance(self, bubble, lam):
        # v(lam r) + 2 ln lam solves the same system; intercepts shift by (2 - m) ln lam
        scaled = integrate_profile(bubble.A, bubble.initial_values + 2 * np.log(lam))
        r = np.geomspace(1e-2, 1e3, 30)
        assert np.allclose(scaled.evaluate(r), bubble.evaluate(lam * r) + 2 * np.log(lam), atol=1e-8)
        assert abs(scaled.I[0] - (bubble.I[0] + (2.0 - 4.0) * np.log(lam))) < 1e-6

    def test_default_gauge(self, bubble_profile):
        assert abs(np.max(bubble_profile.initial_values)) < 1e-12


class TestKernelModes:
    def test_dilation_at_origin(self, asym_profile):
        assert np.allclose(kernel_modes(asym_profile).dilation(np.array([0.0])), 2.0)

    def test_dilation_at_infinity(self, asym_profile):
        far = kernel_modes(asym_profile).dilation(np.array([1e5]))[:, 0]
        assert np.max(np.abs(far - (2.0 - asym_profile.m_star))) < 1e-4

    def test_dilation_closed_form(self, bubble):
        r = np.geomspace(1e-3, 1e3, 60)
        assert np.max(np.abs(kernel_modes(bubble).dilation(r)[0] - 2 * (1 - r**2) / (1 + r**2))) < 1e-8

    def test_translation_mode(self, bubble):
        y = np.array([[0.3, -0.4], [1.0, 2.0]])
        h = 1e-6
        Z = kernel_modes(bubble).translation(y)
        for a in range(2):
            e = np.zeros(2)
            e[a] = h
            fd = (planar_bubble(np.linalg.norm(y + e, axis=1)) - planar_bubble(np.linalg.norm(y - e, axis=1))) / (2 * h)
            assert np.allclose(Z[a, 0], fd, atol=1e-7)


class TestEstimator:
    def test_fit_predict(self):
        est = LimitProfileSolver().fit([[2.0, 1.0], [1.0, 2.0]])
        assert np.allclose(est.m_star_, 4.0, atol=1e-12)
        assert est.predict([0.0, 1.0]).shape == (2, 2)
        assert est.get_params()["gauge"] == 0.0
