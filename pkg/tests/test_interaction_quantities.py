import numpy as np
import pytest

from conftest import ASYM_A, ASYM_SIGMA, TRIG_TERMS
from liouville_bubbles.coefficients import CoefficientFunction, TrigPolynomial
from liouville_bubbles.exceptions import CaseMismatch, Inconclusive, QuadratureDiverging
from liouville_bubbles.interaction_quantities import (
    CASE_CRITICAL_L,
    CASE_CRITICAL_ZERO_L,
    CASE_SUBCRITICAL,
    QuantityReport,
    bracket,
    classify_case,
    compute_D,
    compute_L,
    dilation_leading_term,
    lambda_target,
    ring_average,
)
from liouville_bubbles.reduced_energy import ReducedEnergyModel, certify, find_critical_point
from liouville_bubbles.torus_green import voronoi_partition


def shifted(poly, s, domain):
    """Coefficients of ``P(x - s)``."""
    terms = []
    for m, n, a, b in poly.terms:
        k = 2 * np.pi * np.array([m, n], dtype=float) @ domain.dual
        c, si = np.cos(k @ s), np.sin(k @ s)
        terms.append((m, n, a * c - b * si, a * si + b * c))
    return TrigPolynomial(tuple(terms), poly.constant)


def brute_force_D(model, crit, profile, i=0, nth=720):
    """Polar quadrature over the square cell of a single bubble plus the closed-form outer part."""
    dom, g = model.domain, model.green
    p = crit.centers[0]
    m = profile.m_hat
    th = (np.arange(nth) + 0.5) * 2 * np.pi / nth
    u = np.stack([np.cos(th), np.sin(th)], axis=1)
    R = 0.5 / np.maximum(np.abs(u[:, 0]), np.abs(u[:, 1]))

    def ln_ratio(x):
        return (model.h[i].log(dom, x) - model.h[i].log(dom, p[None])) \
            + 2 * np.pi * m * (g.gamma(x, p) - g.robin_constant)

    def ring(r):
        # the angular sum cancels the odd O(r) part before the r^{1-m} weight is applied
        return np.sum(np.expm1(ln_ratio(p + r * u))) * (2 * np.pi / nth) * r ** (1 - m)

    r0 = float(R.min())
    # dyadic shells toward the centre; below r_min the integrand is c r^{3-m} and is integrated in
    # closed form, since going further in only amplifies rounding in gamma by r^{1-m}
    xs, ws = np.polynomial.legendre.leggauss(12)
    inside = 0.0
    shells = 14
    for k in range(shells):
        a, b = r0 * 2.0 ** -(k + 1), r0 * 2.0 ** -k
        inside += (b - a) / 2 * sum(w * ring(r) for w, r in zip(ws, a + (b - a) * (xs + 1) / 2))
    r_min = r0 * 2.0 ** -shells
    inside += ring(r_min) * r_min / (4 - m)
    # corners of the cell: plain Gauss-Legendre along each ray, no singularity there
    xg, wg = np.polynomial.legendre.leggauss(40)
    for k in range(nth):
        if R[k] <= r0:
            continue
        rr = r0 + (R[k] - r0) * (xg + 1) / 2
        vals = np.expm1(ln_ratio(p + rr[:, None] * u[k])) * rr ** (1 - m)
        inside += np.sum(wg * vals) * (R[k] - r0) / 2 * (2 * np.pi / nth)
    outside = np.sum(R ** (2 - m) / (m - 2)) * (2 * np.pi / nth)
    return (inside - outside) * np.exp(profile.I[i])


def fd_L(model, crit, profile, h=1e-4):
    """L from finite-difference derivatives of ln h, h and G~ (no analytic gradients)."""
    dom, g = model.domain, model.green
    centers = crit.centers
    N = centers.shape[0]
    out = np.zeros((model.n, N))
    E = np.eye(2) * h
    for t in range(N):
        p = centers[t]

        def gt(x):
            return g.gamma(x, p) + sum(g.G(x, q) for s, q in enumerate(centers) if s != t)

        dgt = np.array([(gt(p + e) - gt(p - e)) / (2 * h) for e in E])
        for i, c in enumerate(model.h):
            dlnh = np.array([(c.log(dom, p + e) - c.log(dom, p - e)) / (2 * h) for e in E])
            lap = (sum(c.value(dom, p + e) + c.value(dom, p - e) for e in E) - 4 * c.value(dom, p)) / h**2
            v = dlnh + 8 * np.pi * dgt
            out[i, t] = v @ v + lap / c.value(dom, p) + 8 * N * np.pi
    return out * np.exp(profile.I)[:, None]


@pytest.fixture(scope="module")
def asym_pair(green, asym_profile):
    model = ReducedEnergyModel(ASYM_A, green, [CoefficientFunction.constant(1.0)] * 2, 4 * np.pi * ASYM_SIGMA, 2)
    crit = certify(model, [[0.25, 0.25], [0.75, 0.75]])
    return model, crit


class TestD:
    def test_matches_brute_force(self, trig_single, asym_profile):
        model, crit, rep = trig_single
        oracle = brute_force_D(model, crit, asym_profile)
        assert rep.D[0, 0] == pytest.approx(oracle, rel=1e-3)

    def test_stable_under_refinement(self, trig_single, asym_profile):
        model, crit, _ = trig_single
        res = compute_D(model, crit, None, asym_profile)
        assert abs(res.finest[0, 0] - res.D[0, 0]) < 5e-4 * abs(res.D[0, 0])
        assert np.isnan(res.D[1, 0])

    def test_translation_covariance(self, trig_single, asym_profile, green):
        model, crit, rep = trig_single
        s = np.array([0.31, -0.17])
        h = [CoefficientFunction(shifted(c.poly, s, green.domain), c.form) for c in model.h]
        moved = ReducedEnergyModel(model.A, green, h, model.rho_star, 1)
        crit2 = find_critical_point(moved, crit.centers + s)
        assert green.domain.distance(crit2.centers[0], crit.centers[0] + s) < 1e-8
        res = compute_D(moved, crit2, None, asym_profile)
        assert res.D[0, 0] == pytest.approx(rep.D[0, 0], rel=1e-6)

    def test_ring_average_slope(self, trig_single, asym_profile):
        model, crit, _ = trig_single
        m = asym_profile.m_hat
        a = ring_average(model, crit, 0, 1e-3, m)[0]
        b = ring_average(model, crit, 0, 1e-4, m)[0]
        assert abs(np.log(abs(a / b)) / np.log(10.0) - (2.0 - m)) < 0.05

    def test_partition_independent_weighted_sum(self, asym_pair, asym_profile, green):
        model, crit = asym_pair
        plain = compute_D(model, crit, None, asym_profile)
        assert plain.D[0, 0] == pytest.approx(plain.D[0, 1], rel=1e-9)
        power = compute_D(model, crit, voronoi_partition(green.domain, crit.centers, weights=[0.02, -0.02]),
                          asym_profile)
        assert abs(power.D[0, 0] - power.D[0, 1]) > 10.0
        assert power.D[0].sum() == pytest.approx(plain.D[0].sum(), rel=1e-8)

    def test_critical_exponent_needs_vanishing_log_term(self, bubble_single, bubble_profile):
        model, crit, _ = bubble_single
        with pytest.raises(QuadratureDiverging):
            compute_D(model, crit, None, bubble_profile)


class TestL:
    def test_single_bubble_symmetric_point(self, bubble_single, bubble_profile):
        model, crit, rep = bubble_single
        assert rep.L[0, 0] == pytest.approx(8 * np.pi * np.exp(bubble_profile.I[0]), rel=1e-8)

    def test_antipodal_pair(self, antipodal_pair, bubble_profile):
        model, crit = antipodal_pair
        L = compute_L(model, crit, bubble_profile)
        assert np.allclose(L, 16 * np.pi * np.exp(bubble_profile.I[0]), rtol=1e-8)

    def test_trig_against_finite_differences(self, green, bubble_profile):
        model = ReducedEnergyModel([[1.0]], green, [CoefficientFunction(TrigPolynomial(TRIG_TERMS))], [16 * np.pi], 2)
        crit = certify(model, [[0.13, 0.21], [0.58, 0.74]], raise_degenerate=False)
        L = compute_L(model, crit, bubble_profile)
        assert np.allclose(L, fd_L(model, crit, bubble_profile), rtol=1e-6)


class TestCases:
    def test_bubble_is_critical_L(self, bubble_single):
        _, _, rep = bubble_single
        assert rep.case == CASE_CRITICAL_L
        assert rep.L_sum > 0

    def test_asymmetric_is_subcritical(self, trig_single):
        _, _, rep = trig_single
        assert rep.case == CASE_SUBCRITICAL
        assert abs(rep.D_sum) > rep.D_sum_error

    def test_inconclusive(self):
        rep = QuantityReport(m_hat=3.0, I_hat=[0], H=np.zeros((1, 1)), h_at_centers=np.ones((1, 1)),
                             D=np.array([[1e-9]]), D_error=np.array([[1e-6]]), D_sum=1e-9, D_sum_error=1e-6)
        with pytest.raises(Inconclusive):
            classify_case(rep)

    def test_zero_L_falls_back_to_D(self):
        rep = QuantityReport(m_hat=4.0, I_hat=[0], H=np.zeros((1, 1)), h_at_centers=np.ones((1, 1)),
                             L=np.array([[0.0]]), L_sum=0.0, L_sum_error=1e-12,
                             D=np.array([[2.0]]), D_error=np.array([[1e-6]]), D_sum=2.0, D_sum_error=1e-6)
        assert classify_case(rep) == CASE_CRITICAL_ZERO_L

    def test_bracket_and_target(self, trig_single):
        _, _, rep = trig_single
        eps = 1e-3
        lead = dilation_leading_term(rep, 0, eps)
        assert lead == pytest.approx((rep.m_hat - 2) * bracket(rep, 0) * eps ** (rep.m_hat - 1))
        assert lambda_target(rep, eps) == pytest.approx(-lead / (np.pi * eps))

    def test_case_mismatch(self, trig_single):
        _, _, rep = trig_single
        with pytest.raises(CaseMismatch):
            bracket(rep, 0, CASE_CRITICAL_L)

    def test_report_serialisation(self, trig_single):
        _, _, rep = trig_single
        text = rep.to_csv()
        assert text.splitlines()[0] == "i,t,H,h,D,D_error,L"
        assert "\r" not in text
        assert '"case": "subcritical-D"' in rep.to_json()
