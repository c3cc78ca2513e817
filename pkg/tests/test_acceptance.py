"""Acceptance suite: one PASS/FAIL line per criterion, each at its stated tolerance."""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, TRIG_TERMS
from test_torus_green import fd_laplacian, green_mean
from test_interaction_quantities import fd_L
from test_reduced_energy import fd_gradient, trig_model
from liouville_bubbles import cli
from liouville_bubbles.bubble_assembly import assemble, make_configuration, seam_gap
from liouville_bubbles.coefficients import CoefficientFunction, TrigPolynomial
from liouville_bubbles.config import parse_config
from liouville_bubbles.interaction_quantities import compute_D, compute_L
from liouville_bubbles.limit_profile import (
    extract_asymptotics,
    lambda_IN,
    lambda_IN_gradient,
    sigma_on_ray,
    solve_radial,
)
from liouville_bubbles.reduced_energy import (
    ReducedEnergyModel,
    certify,
    reduced_energy,
    reduced_energy_gradient,
)
from liouville_bubbles.spectral_verifier import build_reduction_matrix, newton_correct
from liouville_bubbles.torus_green import GreenEvaluator, TorusDomain
from liouville_bubbles.workflow import SEAM_TOL, Workflow, expected_seam_exponent, fit_slope

N1_REFERENCE = """[problem]
coupling = 1
masses = 4
N = 1
[sweep]
eps = 0.01, 0.005, 0.0025, 0.00125
grid = 2048
"""

TRIG_REFERENCE = """[problem]
coupling = 2, 1; 1, 2
mass_ray = 1, 2
N = 1
[coefficients]
h0 = exp; 0; 1 0 0.3 0.1 | 0 1 0.1 0.2 | 1 1 0.05 0.0
h1 = exp; 0; 1 0 0.3 0.1 | 0 1 0.1 0.2 | 1 1 0.05 0.0
normalize = true
[centers]
initial = 0.1, 0.1
[sweep]
eps = 0.01, 0.005, 0.0025, 0.00125
grid = 2048
"""

NEWTON_REFERENCE = """[problem]
coupling = 1
masses = 4
N = 1
[newton]
enabled = true
grid = 1024
eps = 0.01, 0.005, 0.0025
"""

SMALL = """[problem]
coupling = 1
masses = 4
N = 1
[green]
grid = 16
[sweep]
eps = 0.03, 0.02, 0.015, 0.01
grid = 256
[newton]
enabled = true
grid = 128
eps = 0.03, 0.02
"""

TEST_MATRICES = [
    (np.array([[1.0]]), np.array([4.0])),
    (np.array([[2.0, 1.0], [1.0, 2.0]]), None),
    (np.array([[1.0, 0.5], [0.5, 1.0]]), None),
    (np.array([[1.0, 2.0], [2.0, 1.0]]), None),
]


def emit(capsys, k, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {k}: {detail}"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


def profile_for(A, sigma):
    if sigma is None:
        sigma = sigma_on_ray(A, np.array([1.0, 2.0]))
    return solve_radial(A, sigma)


@pytest.fixture(scope="module")
def n1_run(tmp_path_factory):
    wf = Workflow(parse_config(N1_REFERENCE), out_dir=tmp_path_factory.mktemp("n1"))
    t0 = time.perf_counter()
    wf.run_pipeline()
    return wf, time.perf_counter() - t0


@pytest.fixture(scope="module")
def trig_run(tmp_path_factory):
    wf = Workflow(parse_config(TRIG_REFERENCE), out_dir=tmp_path_factory.mktemp("trig"))
    t0 = time.perf_counter()
    wf.run_pipeline()
    return wf, time.perf_counter() - t0


def test_criterion_1_green_function(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_per, worst_sym = 0.0, 0.0
    for dom in (TorusDomain(), TorusDomain((1.0, 0.0), (0.3, 1.0))):
        g = GreenEvaluator(dom)
        for _ in range(20):
            x, p = rng.random(2), rng.random(2)
            if dom.distance(x, p) < 1e-2:
                continue
            for e in (dom.e1, dom.e2):
                worst_per = max(worst_per, abs(g.G(x + e, p) - g.G(x, p)), abs(g.G(x, p - e) - g.G(x, p)))
            worst_sym = max(worst_sym, abs(g.G(x, p) - g.G(p, x)))
    green = GreenEvaluator(TorusDomain())
    mean = max(abs(green_mean(green, p)) for p in (np.array([0.3, 0.7]), np.array([0.0, 0.0])))
    x, p = np.array([0.31, 0.62]), np.array([0.0, 0.0])
    errs = np.array([abs(fd_laplacian(green, x, p, h) - 1.0) for h in (0.04, 0.02, 0.01)])
    orders = np.log2(errs[:-1] / errs[1:])
    elapsed = time.perf_counter() - t0
    ok = (worst_per < 1e-10 and worst_sym < 1e-10 and mean < 1e-8 and np.all(np.abs(orders - 2) < 0.1)
          and errs[-1] < 1e-3 and elapsed < 10)
    emit(capsys, 1, ok, f"periodicity {worst_per:.1e}, symmetry {worst_sym:.1e}, mean {mean:.1e}, "
         f"-Lap G + 1 errors {errs[-1]:.1e} with orders {np.round(orders, 3).tolist()}, {elapsed:.1f} s")


def test_criterion_2_limit_profile(capsys):
    t0 = time.perf_counter()
    bubble = solve_radial([[1.0]], [4.0], gauge=np.log(8.0))
    r = np.concatenate([[0.0], np.linspace(0.0, 100.0, 2001)[1:], np.geomspace(1e-6, 100.0, 500)])
    pointwise = float(np.max(np.abs(bubble.evaluate(r)[0] - np.log(8.0 / (1 + r**2) ** 2))))
    _, I = extract_asymptotics(bubble)
    intercept = abs(I[0] - np.log(8.0))
    slope_gap = 0.0
    for A, sigma in TEST_MATRICES:
        prof = profile_for(A, sigma)
        slope_gap = max(slope_gap, float(np.max(np.abs(prof.slope_fit - prof.m_star))))
    elapsed = time.perf_counter() - t0
    ok = pointwise < 1e-7 and intercept < 1e-4 and slope_gap < 1e-4 and elapsed < 30
    emit(capsys, 2, ok, f"pointwise {pointwise:.1e}, |I - ln 8| {intercept:.1e}, "
         f"slope fit gap {slope_gap:.1e} over {len(TEST_MATRICES)} matrices, {elapsed:.1f} s")


def test_criterion_3_hypersurface(capsys):
    root = max(abs(lambda_IN([[1.0]], [8 * np.pi * N], N)) for N in (1, 2, 3, 4))
    sym = 0.0
    for b in (0.2, 0.5, 2.0, 3.0):
        A = np.array([[1.0, b], [b, 1.0]])
        sym = max(sym, float(np.max(np.abs(sigma_on_ray(A, [1.0, 1.0]) - 4 / (1 + b)))),
                  abs(lambda_IN(A, [4 * np.pi * 4 / (1 + b)] * 2, 2)))
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    sigma = sigma_on_ray(A, [1.0, 2.0])
    N, h = 2, 1e-6
    rho = 2 * np.pi * N * sigma
    deriv = 0.0
    for d in (np.array([1.0, 1.0]), np.array([1.0, -0.5]), np.array([0.2, 0.7])):
        fd = (lambda_IN(A, rho + h * d, N) - lambda_IN(A, rho - h * d, N)) / (2 * h)
        linear = float(np.sum((4.0 - 2.0 * A @ sigma) * d) / (2 * np.pi * N))
        deriv = max(deriv, abs(fd - linear), abs(lambda_IN_gradient(A, rho, N) @ d - fd))
    ok = root < 1e-12 and sym < 1e-12 and deriv < 1e-8
    emit(capsys, 3, ok, f"root residual {root:.1e}, symmetric masses {sym:.1e}, "
         f"directional derivative gap {deriv:.1e}")


def test_criterion_4_critical_points(capsys, green):
    model = ReducedEnergyModel([[1.0]], green, [CoefficientFunction.constant(1.0)], [16 * np.pi], 2)
    crit = certify(model, [[0.25, 0.25], [0.75, 0.75]])
    ev = crit.certified_eigenvalues
    signed = bool(np.all(ev > 0) or np.all(ev < 0)) and float(np.min(np.abs(ev))) > 1e-8
    rng = np.random.default_rng(4)
    tm = trig_model(green, 2)
    worst, count = 0.0, 0
    while count < 20:
        x = rng.random((2, 2))
        if green.domain.distance(x[0], x[1]) < 0.1:
            continue
        an = reduced_energy_gradient(tm, x)
        fd = fd_gradient(lambda y: reduced_energy(tm, y), x)
        worst = max(worst, float(np.max(np.abs(an - fd)) / np.max(np.abs(an))))
        count += 1
    ok = crit.gradient_norm < 1e-10 and signed and worst < 1e-6
    emit(capsys, 4, ok, f"antipodal gradient {crit.gradient_norm:.1e}, Hessian eigenvalues "
         f"{np.round(ev, 4).tolist()}, worst relative gradient gap {worst:.1e} over 20 configurations")


def test_criterion_5_quantities(capsys, green, bubble_profile, asym_profile, trig_single, antipodal_pair):
    I = bubble_profile.I[0]
    one = ReducedEnergyModel([[1.0]], green, [CoefficientFunction.constant(1.0)], [8 * np.pi], 1)
    crit1 = certify(one, [[0.3, 0.6]], raise_degenerate=False)
    model2, crit2 = antipodal_pair
    sym = max(abs(compute_L(one, crit1, bubble_profile)[0, 0] / (8 * np.pi * np.exp(I)) - 1),
              float(np.max(np.abs(compute_L(model2, crit2, bubble_profile) / (16 * np.pi * np.exp(I)) - 1))))
    model, crit, _ = trig_single
    res = compute_D(model, crit, None, asym_profile)
    drift = abs(res.finest[0, 0] - res.D[0, 0]) / abs(res.D[0, 0])
    digits = float(f"{res.D[0, 0]:.3g}") == float(f"{res.finest[0, 0]:.3g}")
    tm = ReducedEnergyModel([[1.0]], green, [CoefficientFunction(TrigPolynomial(TRIG_TERMS))], [16 * np.pi], 2)
    tc = certify(tm, [[0.13, 0.21], [0.58, 0.74]], raise_degenerate=False)
    L = compute_L(tm, tc, bubble_profile)
    fd_gap = float(np.max(np.abs(L / fd_L(tm, tc, bubble_profile) - 1)))
    ok = sym < 1e-8 and digits and fd_gap < 1e-6
    emit(capsys, 5, ok, f"symmetric L gap {sym:.1e}, D = {res.D[0, 0]:.6g} vs refined {res.finest[0, 0]:.6g} "
         f"(relative {drift:.1e}), L vs finite differences {fd_gap:.1e}")


def test_criterion_6_seam_and_mass(capsys, n1_run, trig_run):
    lines, ok = [], True
    for label, (wf, elapsed) in (("n=1", n1_run), ("trig n=2", trig_run)):
        asm = wf.run_assemble()
        m = wf.profile.m_star
        m_hat = wf.profile.m_hat
        A = wf.model.A.A
        for i in range(len(m)):
            if expected_seam_exponent(A, m, i) != m[i] - 2.0:
                continue  # reported separately below
            s = fit_slope(asm["eps_t"][:, 0], asm["seam"][:, i, 0])
            ok &= abs(s - (m[i] - 2.0)) <= SEAM_TOL
            lines.append(f"{label} seam i={i + 1} {s:.3f} (m-2 = {m[i] - 2:.3f})")
        for i in range(len(m)):
            s = fit_slope(asm["eps_t"][:, 0], asm["mass_dev"][:, i], log_corrected=abs(m[i] - 4.0) < 1e-8)
            ok &= s >= m_hat - 2.0 - 0.2
            lines.append(f"{label} mass i={i + 1} {s:.3f} (>= {m_hat - 2.2:.3f})")
        ok &= elapsed < 300
        lines.append(f"{label} pipeline {elapsed:.0f} s")
    emit(capsys, 6, ok, ", ".join(lines))


def test_criterion_6_uncoupled_seam_component(capsys, trig_run):
    # the larger-exponent component inherits the smaller exponent through the coupling
    wf, _ = trig_run
    prof, model = wf.profile, wf.model
    m = prof.m_star
    A = model.A.A
    i = int(np.argmax(m))
    target = expected_seam_exponent(A, m, i)
    asm = wf.run_assemble()
    sweep = fit_slope(asm["eps_t"][:, 0], asm["seam"][:, i, 0])
    eps = np.array([1e-4, 1e-5, 1e-6])
    gaps = [seam_gap(prof, make_configuration(model, wf.critical, e), i, 0) for e in eps]
    deep = fit_slope(eps, gaps)
    line = (f"INFO criterion 6 seam i={i + 1}: sweep fit {sweep:.3f}, eps 1e-4..1e-6 fit {deep:.3f}, "
            f"coupled exponent {target:.3f}, literal m_i - 2 = {m[i] - 2:.3f}")
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert abs(deep - target) <= SEAM_TOL


def test_criterion_7_scaling(capsys, trig_run, n1_run):
    wf, _ = trig_run
    proj = wf.run_verify()["projections"]
    m_hat = wf.profile.m_hat
    j = 1 if np.max(np.abs(proj.column("numeric", 0, 1))) >= np.max(np.abs(proj.column("numeric", 0, 2))) else 2
    slope = proj.slope(0, j)
    asm = wf.run_assemble()
    lam1 = fit_slope(asm["eps_t"][:, 0], asm["Lambda"])
    wf1, _ = n1_run
    asm1 = wf1.run_assemble()
    lam2 = fit_slope(asm1["eps_t"][:, 0], asm1["Lambda"], log_corrected=True)
    ok = abs(slope - (m_hat - 1)) <= 0.25 and abs(lam1 - (m_hat - 2)) <= 0.2 and abs(lam2 - 2.0) <= 0.2
    emit(capsys, 7, ok, f"translation slope {slope:.3f} (m-1 = {m_hat - 1:.3f}), Lambda slope {wf.report.case} "
         f"{lam1:.3f} (m-2 = {m_hat - 2:.3f}), Lambda / ln(1/eps) slope {wf1.report.case} {lam2:.3f} (2)")


def test_criterion_8_reduction(capsys, n1_run, trig_run):
    worst_ratio, mass = np.inf, 0.0
    for A, sigma in TEST_MATRICES:
        prof = profile_for(A, sigma)
        mass = max(mass, float(np.max(np.abs(prof.mass_integral() / (2 * np.pi * prof.sigma) - 1))))
        for N in (1, 2, 3):
            red = build_reduction_matrix(prof, N)
            worst_ratio = min(worst_ratio, red.block_ratio, red.schur_ratio)
    pairing = 0.0
    for wf, _ in (n1_run, trig_run):
        g, r = wf.run_verify()["z3_pairing"]
        pairing = max(pairing, float(np.max(np.abs(g - r) / np.abs(r))))
    ok = worst_ratio > 1e-10 and mass < 1e-4 and pairing < 1e-4
    emit(capsys, 8, ok, f"smallest singular value ratio {worst_ratio:.3e}, mass identity {mass:.1e}, "
         f"dilation pairing {pairing:.1e}")


def test_criterion_9_newton(capsys, tmp_path):
    wf = Workflow(parse_config(NEWTON_REFERENCE), out_dir=tmp_path)
    t0 = time.perf_counter()
    rows = []
    for conf in wf.configurations(wf.cfg.newton_eps):
        fld = assemble(wf.profile, conf, wf.cfg.newton_grid)
        _, rep = newton_correct(fld, conf, wf.model, profile=wf.profile)
        rows.append((conf.eps, rep.w_inf, rep.reduction))
    elapsed = time.perf_counter() - t0
    eps, w, red = map(np.array, zip(*rows))
    m_hat = wf.profile.m_hat
    slope = fit_slope(eps, w)
    floor = m_hat - 2.5 if m_hat <= 3 else 0.7
    ok = red[-1] >= 1e4 and slope >= floor and elapsed < 600
    emit(capsys, 9, ok, f"reduction at eps=2.5e-3 {red[-1]:.2e}, |w| exponent {slope:.3f} (>= {floor:.3f}), "
         f"{elapsed:.0f} s")


def test_criterion_10_determinism(capsys, tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli.main(["pipeline", "--config", str(cfg), "--out", str(out)]) == 0
    capsys.readouterr()
    names = sorted(p.name for p in outs[0].iterdir())
    same = names == sorted(p.name for p in outs[1].iterdir()) and all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    emit(capsys, 10, same, f"{len(names)} output files byte-identical across two runs")
