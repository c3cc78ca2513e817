import numpy as np
import pytest

from liouville_bubbles.coefficients import CoefficientFunction, TrigPolynomial
from liouville_bubbles.interaction_quantities import compute_quantities
from liouville_bubbles.limit_profile import solve_radial
from liouville_bubbles.reduced_energy import ReducedEnergyModel, certify, find_critical_point
from liouville_bubbles.torus_green import GreenEvaluator, TorusDomain

TRIG_TERMS = ((1, 0, 0.3, 0.1), (0, 1, 0.1, 0.2), (1, 1, 0.05, 0.0))
ASYM_A = np.array([[2.0, 1.0], [1.0, 2.0]])
ASYM_SIGMA = np.array([6.0 / 7.0, 12.0 / 7.0])


@pytest.fixture(scope="session")
def square():
    return TorusDomain()


@pytest.fixture(scope="session")
def green(square):
    return GreenEvaluator(square)


@pytest.fixture(scope="session")
def bubble_profile():
    """Single equation with ``a = 1`` and mass 4: the explicit planar bubble."""
    return solve_radial(np.array([[1.0]]), np.array([4.0]))


@pytest.fixture(scope="session")
def asym_profile():
    return solve_radial(ASYM_A, ASYM_SIGMA)


def neutral_constants(green, m_star):
    """Constant coefficients whose heights vanish at a single center."""
    return [CoefficientFunction.constant(float(np.exp(-2 * np.pi * m * green.robin_constant))) for m in m_star]


@pytest.fixture(scope="session")
def bubble_single(green, bubble_profile):
    """n = 1, N = 1, constant coefficient, center at the cell middle."""
    model = ReducedEnergyModel([[1.0]], green, neutral_constants(green, [4.0]), [8 * np.pi], 1)
    crit = certify(model, [[0.5, 0.5]], raise_degenerate=False)
    return model, crit, compute_quantities(model, crit, bubble_profile)


@pytest.fixture(scope="session")
def trig_single(green, asym_profile):
    """Two components, one bubble, trigonometric coefficients shifted so the heights vanish."""
    m = ASYM_A @ ASYM_SIGMA
    rho = 2 * np.pi * ASYM_SIGMA

    def build(shift):
        h = [CoefficientFunction(TrigPolynomial(TRIG_TERMS, -s)) for s in shift]
        return ReducedEnergyModel(ASYM_A, green, h, rho, 1)

    first = find_critical_point(build([0.0, 0.0]), [[0.1, 0.1]])
    model = build(first.H[:, 0] * (m - 2.0))
    crit = certify(model, first.centers)
    return model, crit, compute_quantities(model, crit, asym_profile)


@pytest.fixture(scope="session")
def antipodal_pair(green):
    """n = 1, N = 2, constant coefficient, antipodal centers on the square torus."""
    model = ReducedEnergyModel([[1.0]], green, [CoefficientFunction.constant(1.0)], [16 * np.pi], 2)
    crit = find_critical_point(model, [[0.25, 0.25], [0.75, 0.75]])
    return model, crit


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
