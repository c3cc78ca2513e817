"""End-to-end experiment stages shared by the command line front end.

Each stage computes from an :class:`ExperimentConfig`, writes deterministic
text artifacts into an output directory and returns plain data.  Stages are
cached on a :class:`Workflow` so ``pipeline`` runs every computation once.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from .bubble_assembly import (
    TorusGrid,
    assemble,
    evaluate_points,
    make_configuration,
    mass_expansion,
    mass_integral,
    residual,
    rho_sweep,
    seam_gap,
)
from .coefficients import CoefficientFunction, TrigPolynomial
from .config import ExperimentConfig
from .exceptions import (
    CentersTooClose,
    CollisionDuringIteration,
    Degenerate,
    LiouvilleError,
    NotConverged,
)
from .interaction_quantities import CASE_CRITICAL_L, CASE_SUBCRITICAL, compute_quantities, ring_average
from .limit_profile import extract_asymptotics, integrate_profile, lambda_IN, solve_radial
from .reduced_energy import (
    ReducedEnergyModel,
    certify,
    find_critical_point,
    reduced_energy,
    reduced_energy_gradient,
)
from .spectral_verifier import (
    ProjectionReport,
    build_reduction_matrix,
    corrected_centers,
    dilation_projection_prediction,
    discrete_kernel_modes,
    newton_correct,
    project_residual,
    se3_residual,
    translation_projection_prediction,
    z3_pairing,
    z3_pairing_radial,
)
from .torus_green import GreenEvaluator

log = logging.getLogger("liouville_bubbles")

PROFILE_RADII = np.geomspace(1e-3, 1e4, 141)

# tolerances of the built-in scaling checks
SEAM_TOL = 0.15
MASS_TOL = 0.2
TRANSLATION_TOL = 0.25
LAMBDA_TOL = 0.2
NEWTON_REDUCTION = 1e4
SE3_TOL = 1e-2


def fmt(x) -> str:
    """Shortest round-trip text for a float."""
    return repr(float(x))


def fit_slope(x, y, log_corrected: bool = False) -> float:
    """Least-squares slope of ``ln|y|`` against ``ln x``; with ``log_corrected`` of ``ln|y / ln(1/x)|``."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if log_corrected:
        y = y / np.log(1.0 / x)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def expected_seam_exponent(A, m_star, i: int) -> float:
    """Decay exponent of the seam gap of component ``i``: ``min(m_i, m_j : a_ij > 0) - 2``."""
    coupled = [m_star[j] for j in range(len(m_star)) if A[i, j] > 0]
    return float(min([m_star[i]] + coupled) - 2.0)


@dataclass
class Check:
    name: str
    passed: bool
    value: str
    target: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value} (target {self.target})"


@contextlib.contextmanager
def stage(name: str):
    """Log entry into a stage and prefix library errors with the stage name."""
    log.info("stage %s", name)
    try:
        yield
    except LiouvilleError as exc:
        msg = str(exc)
        if not msg.startswith("["):
            exc.args = (f"[{name}] {type(exc).__name__}: {msg}",) + tuple(exc.args[1:])
        raise


def _write(out_dir, name: str, text: str):
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_bytes(out_dir, name: str, data: bytes):
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "wb") as fh:
        fh.write(data)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _rescale(c: CoefficientFunction, log_shift: float) -> CoefficientFunction:
    """``h * exp(-log_shift)``."""
    if c.form == "exp":
        return CoefficientFunction(TrigPolynomial(c.poly.terms, c.poly.constant - log_shift), "exp")
    k = float(np.exp(-log_shift))
    terms = tuple((m, n, a * k, b * k) for m, n, a, b in c.poly.terms)
    return CoefficientFunction(TrigPolynomial(terms, c.poly.constant * k), "linear")


class Workflow:
    """Cached experiment stages.

    Parameters
    ----------
    cfg : ExperimentConfig
    out_dir : str or None
        Artifacts are written here; ``None`` computes without writing.
    oracle : bool
        Also run the brute-force cross-checks.
    """

    def __init__(self, cfg: ExperimentConfig, out_dir=None, oracle: bool = False):
        self.cfg = cfg
        self.out_dir = out_dir
        self.oracle = oracle
        self.rng = np.random.default_rng(cfg.seed)
        self._cache = {}
        self.checks: list[Check] = []

    def _once(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # -- basic objects ---------------------------------------------------
    @property
    def domain(self):
        return self._once("domain", self.cfg.domain)

    @property
    def green(self) -> GreenEvaluator:
        return self._once("green_eval", lambda: GreenEvaluator(self.domain))

    # -- green ------------------------------------------------------------
    def run_green(self) -> dict:
        def go():
            with stage("green"):
                M = self.cfg.green_grid
                src = self.cfg.green_source
                # cell-centred grid so the source at a lattice point is never sampled
                f = (np.arange(M) + 0.5) / M
                fa, fb = np.meshgrid(f, f, indexing="ij")
                pts = (fa[..., None] * self.domain.e1 + fb[..., None] * self.domain.e2).reshape(-1, 2)
                log.info("torus_green.GreenEvaluator.G / gamma on %d points", pts.shape[0])
                G = self.green.G(pts, src)
                gam = self.green.gamma(pts, src)
                rows = [(pts[k, 0], pts[k, 1], G[k], gam[k]) for k in range(pts.shape[0])]
                _write(self.out_dir, "green.csv", _csv(["x", "y", "G", "gamma"], rows))
                out = {"points": pts, "G": G, "gamma": gam, "robin_constant": self.green.robin_constant}
                if self.oracle:
                    from .torus_green import TorusDomain
                    dom2 = TorusDomain(self.domain.e1, self.domain.e2, dual_cutoff=2 * self.domain.dual_cutoff)
                    g2 = GreenEvaluator(dom2)
                    drift = float(max(np.max(np.abs(g2.G(pts, src) - G)), np.max(np.abs(g2.gamma(pts, src) - gam))))
                    g3 = GreenEvaluator(self.domain, tol=1e-15)
                    tight = float(np.max(np.abs(g3.G(pts, src) - G)))
                    log.info("oracle: doubled dual_cutoff drift %.3e, tighter tolerance drift %.3e", drift, tight)
                    _write(self.out_dir, "green_oracle.txt", f"max_drift_doubled_dual_cutoff {fmt(drift)}\n"
                           f"max_drift_tolerance_1e-15 {fmt(tight)}\n")
                    out["oracle_drift"] = drift
                    out["oracle_tolerance_drift"] = tight
                return out
        return self._once("green", go)

    # -- profile ----------------------------------------------------------
    @property
    def profile(self):
        def go():
            with stage("profile"):
                log.info("limit_profile.solve_radial")
                prof = solve_radial(self.cfg.A, self.cfg.sigma)
                extract_asymptotics(prof)
                return prof
        return self._once("profile", go)

    def run_profile(self) -> dict:
        def go():
            prof = self.profile
            with stage("profile"):
                v, dv = prof.evaluate(PROFILE_RADII, derivative=True)
                n = prof.n
                header = ["r"] + [f"v_{i + 1}" for i in range(n)] + [f"dv_{i + 1}" for i in range(n)]
                rows = [[PROFILE_RADII[k]] + list(v[:, k]) + list(dv[:, k]) for k in range(PROFILE_RADII.size)]
                _write(self.out_dir, "profile.csv", _csv(header, rows))
                info = {"sigma": prof.sigma.tolist(), "m_star": prof.m_star.tolist(), "I": prof.I.tolist(),
                        "slope_fit": None if prof.slope_fit is None else prof.slope_fit.tolist(), "initial_values": prof.initial_values.tolist(),
                        "masses": prof.mass_integral().tolist()}
                if self.oracle:
                    again = integrate_profile(prof.A, prof.initial_values, r_max=1e7)
                    info["oracle_mass_drift"] = float(np.max(np.abs(again.sigma - prof.sigma)))
                    log.info("oracle: re-integration mass drift %.3e", info["oracle_mass_drift"])
                _write(self.out_dir, "profile.json", _json(info))
                return info
        return self._once("run_profile", go)

    # -- reduced problem ----------------------------------------------------
    def _model(self, h) -> ReducedEnergyModel:
        return ReducedEnergyModel(self.cfg.A, self.green, h, self.cfg.rho_star, self.cfg.N)

    def _search(self, model: ReducedEnergyModel):
        cfg = self.cfg
        if model.translation_invariant and cfg.N == 1:
            start = cfg.initial_centers if cfg.initial_centers is not None else np.array([[0.5, 0.5]])
            log.info("reduced_energy.certify (translation invariant, single bubble)")
            return certify(model, start, raise_degenerate=False)
        starts = [] if cfg.initial_centers is None else [cfg.initial_centers]
        if cfg.initial_centers is not None:
            x = cfg.initial_centers
            for a in range(cfg.N):
                for b in range(a + 1, cfg.N):
                    d = float(self.domain.distance(x[a], x[b]))
                    if d < cfg.collision_distance:
                        raise CentersTooClose(f"initial centers {a} and {b} are {d:.3g} apart, below the "
                                              f"collision distance {cfg.collision_distance}")
        for _ in range(cfg.restarts):
            frac = self.rng.random((cfg.N, 2))
            starts.append(frac @ self.domain.basis)
        last = None
        for k, s in enumerate(starts):
            try:
                log.info("reduced_energy.find_critical_point start %d", k)
                return find_critical_point(model, s, collision_distance=cfg.collision_distance)
            except (NotConverged, CollisionDuringIteration, Degenerate) as exc:
                last = exc
        raise last

    def _critical(self):
        def go():
            with stage("reduce"):
                h = self.cfg.coefficient_functions(self.green)
                model = self._model(h)
                crit = self._search(model)
                if self.cfg.normalize and np.max(np.abs(crit.H)) > 0:
                    m = model.m_star
                    shift = crit.H[:, 0] * (m - 2.0)
                    model = self._model([_rescale(c, s) for c, s in zip(h, shift)])
                    crit = certify(model, crit.centers, iterations=crit.iterations,
                                   raise_degenerate=not model.translation_invariant or self.cfg.N > 1)
                    log.info("heights normalised by constant rescaling of h")
                return model, crit
        return self._once("critical", go)

    @property
    def model(self) -> ReducedEnergyModel:
        return self._critical()[0]

    @property
    def critical(self):
        return self._critical()[1]

    def run_reduce(self) -> dict:
        def go():
            model, crit = self._critical()
            info = crit.to_dict()
            info["coefficients"] = [c.to_dict() for c in model.h]
            if self.oracle:
                with stage("reduce"):
                    x = crit.centers
                    step = 1e-6
                    fd = np.zeros_like(x)
                    for t in range(x.shape[0]):
                        for a in range(2):
                            e = np.zeros_like(x)
                            e[t, a] = step
                            fd[t, a] = (reduced_energy(model, x + e) - reduced_energy(model, x - e)) / (2 * step)
                    an = reduced_energy_gradient(model, x)
                    info["oracle_gradient_gap"] = float(np.max(np.abs(fd - an)))
                    log.info("oracle: finite-difference gradient gap %.3e", info["oracle_gradient_gap"])
            _write(self.out_dir, "critical.json", _json(info))
            return info
        return self._once("run_reduce", go)

    # -- quantities -------------------------------------------------------
    @property
    def report(self):
        def go():
            model, crit = self._critical()
            prof = self.profile
            with stage("quantities"):
                log.info("interaction_quantities.compute_quantities")
                return compute_quantities(model, crit, prof)
        return self._once("report", go)

    def run_quantities(self) -> dict:
        def go():
            rep = self.report
            info = rep.to_dict()
            if self.oracle and not rep.critical:
                with stage("quantities"):
                    m = rep.m_hat
                    a = ring_average(self.model, self.critical, 0, 1e-3, m)
                    b = ring_average(self.model, self.critical, 0, 1e-4, m)
                    info["oracle_ring_slope"] = (np.log(np.abs(a / b)) / np.log(10.0)).tolist()
                    info["oracle_ring_slope_target"] = 2.0 - m
            _write(self.out_dir, "quantities.json", _json(info))
            _write(self.out_dir, "quantities.csv", rep.to_csv())
            return info
        return self._once("run_quantities", go)

    # -- configurations and assembly -----------------------------------
    def configurations(self, eps_list):
        key = ("configs", tuple(eps_list))

        def go():
            model, crit = self._critical()
            with stage("assemble"):
                if self.cfg.rho_mode == "sweep" and self.report.case is not None:
                    log.info("bubble_assembly.rho_sweep")
                    return rho_sweep(model, crit, self.report, eps_list, delta=self.cfg.delta)
                log.info("bubble_assembly.make_configuration")
                return [make_configuration(model, crit, e, delta=self.cfg.delta) for e in eps_list]
        return self._once(key, go)

    def fields(self):
        def go():
            prof = self.profile
            out = []
            for conf in self.configurations(self.cfg.eps):
                with stage("assemble"):
                    log.info("bubble_assembly.assemble eps=%s M=%d", fmt(conf.eps), self.cfg.grid)
                    out.append(assemble(prof, conf, self.cfg.grid, with_laplacian=self.cfg.residual == "analytic"))
            return out
        return self._once("fields", go)

    def run_assemble(self, write_fields: bool = False) -> dict:
        def go():
            model, prof = self.model, self.profile
            confs = self.configurations(self.cfg.eps)
            fields = self.fields()
            n, N = model.n, model.N
            rows, mass_dev, seams, lams = [], [], [], []
            with stage("assemble"):
                for k, (conf, fld) in enumerate(zip(confs, fields)):
                    ratio = mass_integral(fld, model) / mass_expansion(model, conf, prof) - 1.0
                    gaps = np.array([[seam_gap(prof, conf, i, t) for t in range(N)] for i in range(n)])
                    lam = conf.lambda_value()
                    mass_dev.append(ratio)
                    seams.append(gaps)
                    lams.append(lam)
                    rows.append([conf.eps] + list(conf.eps_t) + list(conf.rho) + [lam] + list(ratio)
                                + list(gaps.ravel()))
                    if write_fields:
                        _write_bytes(self.out_dir, f"field_{k}.bin", fld.to_bytes())
                header = (["eps"] + [f"eps_t{t}" for t in range(N)] + [f"rho_{i + 1}" for i in range(n)]
                          + ["Lambda"] + [f"mass_ratio_dev_{i + 1}" for i in range(n)]
                          + [f"seam_gap_{i + 1}_{t}" for i in range(n) for t in range(N)])
                _write(self.out_dir, "assembly.csv", _csv(header, rows))
                info = {"eps": [c.eps for c in confs], "eps_t": np.array([c.eps_t for c in confs]),
                        "mass_dev": np.array(mass_dev), "seam": np.array(seams), "Lambda": np.array(lams)}
                if self.oracle:
                    fld, conf = fields[-1], confs[-1]
                    M = fld.grid.M
                    idx = self.rng.integers(0, M, size=(16, 2))
                    pts = fld.grid.points()[idx[:, 0], idx[:, 1]]
                    direct = evaluate_points(prof, conf, pts)
                    gap = float(np.max(np.abs(direct - fld.values[:, idx[:, 0], idx[:, 1]])))
                    info["oracle_pointwise_gap"] = gap
                    log.info("oracle: pointwise evaluation gap %.3e", gap)
                    _write(self.out_dir, "assembly_oracle.txt", f"max_pointwise_gap {fmt(gap)}\n")
                return info
        return self._once("run_assemble", go)

    # -- verification -----------------------------------------------------
    def run_verify(self) -> dict:
        def go():
            model, prof, rep = self.model, self.profile, self.report
            confs = self.configurations(self.cfg.eps)
            fields = self.fields()
            proj = ProjectionReport()
            info = {}
            with stage("verify"):
                spectral_gap = 0.0
                for conf, fld in zip(confs, fields):
                    log.info("spectral_verifier.project_residual eps=%s", fmt(conf.eps))
                    S = residual(fld, conf, model, method=self.cfg.residual)
                    modes = discrete_kernel_modes(prof, conf, fld.grid)
                    trans = translation_projection_prediction(model, conf)
                    dil = (dilation_projection_prediction(model, conf, rep) if rep.case is not None
                           else np.full(conf.N, np.nan))
                    for t in range(conf.N):
                        for j in (1, 2, 3):
                            pred = trans[t, j - 1] if j < 3 else dil[t]
                            proj.add(conf.eps, t, j, project_residual(S, modes, j, t), pred)
                    if self.oracle and self.cfg.residual == "analytic":
                        Ss = residual(fld, conf, model, method="spectral")
                        for t in range(conf.N):
                            for j in (1, 2, 3):
                                spectral_gap = max(spectral_gap, abs(project_residual(Ss, modes, j, t)
                                                                     - project_residual(S, modes, j, t)))
                _write(self.out_dir, "projections.csv", proj.to_csv())
                info["projections"] = proj
                if self.oracle:
                    info["oracle_spectral_projection_gap"] = spectral_gap

                log.info("spectral_verifier.build_reduction_matrix")
                red = build_reduction_matrix(prof, model.N)
                info["reduction"] = red
                conf, fld = confs[-1], fields[-1]
                modes = discrete_kernel_modes(prof, conf, fld.grid)
                grid_pair = z3_pairing(prof, conf, modes)
                radial_pair = z3_pairing_radial(prof, conf)
                info["z3_pairing"] = (grid_pair, radial_pair)
                info["corrected_centers"] = corrected_centers(fld, conf)
                info["se3"] = se3_residual(model, info["corrected_centers"]) if model.N > 1 else 0.0
                _write(self.out_dir, "reduction.json", _json({
                    "G1": red.G1.tolist(), "G2": red.G2.tolist(), "G3": red.G3.tolist(),
                    "block_singular_values": red.singular_values.tolist(),
                    "schur_singular_values": red.schur_singular_values.tolist(),
                    "z3_pairing_grid": grid_pair.tolist(), "z3_pairing_radial": radial_pair.tolist(),
                    "corrected_centers": info["corrected_centers"].tolist(), "se3_residual": info["se3"]}))

                if self.cfg.newton:
                    rows = []
                    for conf in self.configurations(self.cfg.newton_eps):
                        log.info("spectral_verifier.newton_correct eps=%s M=%d", fmt(conf.eps), self.cfg.newton_grid)
                        fld = assemble(prof, conf, self.cfg.newton_grid)
                        _, nr = newton_correct(fld, conf, model, profile=prof)
                        rows.append([conf.eps, nr.w_inf, nr.residual_initial, nr.residual_final, nr.reduction,
                                     nr.iterations])
                    _write(self.out_dir, "newton.csv", _csv(
                        ["eps", "w_inf", "residual_initial", "residual_final", "reduction", "iterations"], rows))
                    info["newton"] = np.array(rows, dtype=float)
            return info
        return self._once("run_verify", go)

    # -- checks -------------------------------------------------------------
    def evaluate_checks(self) -> list:
        """Scaling and consistency checks over the configured sweep."""
        model, prof, rep = self.model, self.profile, self.report
        asm = self.run_assemble()
        ver = self.run_verify()
        checks = []
        eps_t = asm["eps_t"][:, 0]
        m = prof.m_star
        m_hat = prof.m_hat
        if len(eps_t) >= 2:
            for i in range(model.n):
                for t in range(model.N):
                    s = fit_slope(asm["eps_t"][:, t], asm["seam"][:, i, t])
                    target = expected_seam_exponent(model.A.A, m, i)
                    checks.append(Check(f"seam exponent i={i + 1} t={t}", abs(s - target) <= SEAM_TOL,
                                        f"{s:.4f}", f"{target:.4f} +- {SEAM_TOL}"))
            for i in range(model.n):
                s = fit_slope(eps_t, asm["mass_dev"][:, i], log_corrected=abs(m[i] - 4.0) < 1e-8)
                target = m_hat - 2.0 - MASS_TOL
                checks.append(Check(f"mass deviation exponent i={i + 1}", s >= target, f"{s:.4f}",
                                    f">= {target:.4f}"))
            proj = ver["projections"]
            dil_scale = float(np.max(np.abs(proj.column("numeric", None, 3))))
            for t in range(model.N):
                vals = np.concatenate([proj.column("numeric", t, 1), proj.column("numeric", t, 2)])
                if np.max(np.abs(vals)) <= 1e-9 * max(dil_scale, 1e-300):
                    checks.append(Check(f"translation projections t={t}", True, "vanish by symmetry", "0"))
                    continue
                j = 1 if np.max(np.abs(proj.column("numeric", t, 1))) >= np.max(np.abs(proj.column("numeric", t, 2))) else 2
                s = proj.slope(t, j)
                checks.append(Check(f"translation projection slope t={t} j={j}", abs(s - (m_hat - 1.0)) <= TRANSLATION_TOL,
                                    f"{s:.4f}", f"{m_hat - 1.0:.4f} +- {TRANSLATION_TOL}"))
            if self.cfg.rho_mode == "sweep" and rep.case is not None:
                s = fit_slope(eps_t, asm["Lambda"], log_corrected=rep.case == CASE_CRITICAL_L)
                target = m_hat - 2.0
                checks.append(Check(f"Lambda slope ({rep.case})", abs(s - target) <= LAMBDA_TOL, f"{s:.4f}",
                                    f"{target:.4f} +- {LAMBDA_TOL}"))
        red = ver["reduction"]
        checks.append(Check("reduction block matrix", red.block_ratio > 1e-10, f"{red.block_ratio:.3e}", "> 1e-10"))
        checks.append(Check("reduction Schur complement", red.schur_ratio > 1e-10, f"{red.schur_ratio:.3e}", "> 1e-10"))
        mass_gap = float(np.max(np.abs(prof.mass_integral() / (2 * np.pi * prof.sigma) - 1.0)))
        checks.append(Check("profile mass identity", mass_gap < 1e-4, f"{mass_gap:.3e}", "< 1e-4"))
        g, r = ver["z3_pairing"]
        gap = float(np.max(np.abs(g - r) / np.maximum(np.abs(r), 1e-300)))
        checks.append(Check("dilation pairing (grid vs radial)", gap < 1e-4, f"{gap:.3e}", "< 1e-4"))
        if model.N > 1:
            checks.append(Check("SE3 at corrected centers", ver["se3"] < SE3_TOL, f"{ver['se3']:.3e}", f"< {SE3_TOL}"))
        if "newton" in ver:
            nw = ver["newton"]
            red_ok = bool(np.all(nw[:, 4] >= NEWTON_REDUCTION))
            checks.append(Check("Newton residual reduction", red_ok, f"{np.min(nw[:, 4]):.3e}", f">= {NEWTON_REDUCTION:.0e}"))
            if nw.shape[0] >= 2:
                s = fit_slope(nw[:, 0], nw[:, 1])
                target = m_hat - 2.0 - 0.5 if m_hat <= 3.0 else 0.7
                checks.append(Check("Newton correction exponent", s >= target, f"{s:.4f}", f">= {target:.4f}"))
        self.checks = checks
        return checks

    def summary(self) -> str:
        rep = self.report
        crit = self.critical
        lines = ["liouville-bubbles pipeline summary", ""]
        lines.append(f"seed: {self.cfg.seed}")
        lines.append(f"components n = {self.model.n}, bubbles N = {self.model.N}")
        lines.append(f"m_star = {[round(float(x), 12) for x in self.profile.m_star]}, m_hat = {rep.m_hat:.12g}")
        lines.append(f"centers = {np.round(crit.centers, 12).tolist()}")
        lines.append(f"gradient norm = {crit.gradient_norm:.3e}")
        lines.append(f"case: {rep.case if rep.case is not None else 'unclassified'}")
        if rep.case == CASE_SUBCRITICAL:
            lines.append(f"D weighted sum = {rep.D_sum:.10g} +- {rep.D_sum_error:.3e}")
        elif rep.L is not None:
            lines.append(f"L weighted sum = {rep.L_sum:.10g}")
        for note in rep.notes:
            lines.append(f"note: {note}")
        lines.append("")
        for c in self.checks:
            lines.append(c.line())
        passed = sum(c.passed for c in self.checks)
        lines.append("")
        lines.append(f"{passed} of {len(self.checks)} checks passed")
        return "\n".join(lines) + "\n"

    def run_pipeline(self) -> str:
        self.run_green()
        self.run_profile()
        self.run_reduce()
        self.run_quantities()
        self.run_assemble()
        self.run_verify()
        with stage("verify"):
            self.evaluate_checks()
        text = self.summary()
        _write(self.out_dir, "summary.txt", text)
        return text


def lambda_values(confs) -> np.ndarray:
    """``Lambda_{I,N}(rho_eps)`` for a list of configurations."""
    return np.array([lambda_IN(c.A, c.rho, c.N) for c in confs])


def grid_for(domain, M: int) -> TorusGrid:
    return TorusGrid(domain, M)
