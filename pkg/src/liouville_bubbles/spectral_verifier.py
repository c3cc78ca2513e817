"""Kernel-mode projections of the residual, the reduction matrices and a Newton corrector.

Mode fields per bubble ``t`` and component ``i`` (``y = (x - p_t)/eps_t``):

* translation ``Z_{j,t,i} = chi_t (d v_i / d y_j)(y)`` for ``j = 1, 2``;
* dilation ``Z_{3,t,i} = eps_t [chi_t (|y| v_i'(|y|) + 2) + (1 - chi_t)(2 - m_i)]``.

The Newton corrector solves the discrete system for ``U + w`` up to
multiples of ``Z_{j,t,i} K_i`` and ``K_i e_i``, where
``K_i = sum_s chi_s e^{v_i} / eps_s^2``, with ``w`` orthogonal to those
functions; this is the discrete form of the projected problem.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator

from .bubble_assembly import (
    BubbleConfiguration,
    TorusField,
    TorusGrid,
    check_resolution,
    coefficient_values,
    cutoff_profile,
)
from .exceptions import CaseMismatch, LinearSolveFailed, NewtonStalled, SingularMatrix, ValidationError
from .interaction_quantities import (
    CASE_SUBCRITICAL,
    LAMBDA_PROJECTION_COEFF,
    QuantityReport,
    dilation_leading_term,
)
from .limit_profile import RadialProfile, lambda_IN
from .reduced_energy import ReducedEnergyModel, compat_residual, h_table, se1_residual

DENSE_LIMIT = 4096
INEXACT_ACCEPT = 1e-6


# ---------------------------------------------------------------------------
# modes and projections


@dataclass
class ModeFields:
    """Sampled kernel modes.

    Attributes
    ----------
    Z : ndarray (3, N, n, M, M)
        Translation (``j = 0, 1``) and dilation (``j = 2``) modes.
    weight : ndarray (n, M, M)
        ``K_i = sum_s chi_s e^{v_i((x - p_s)/eps_s)} / eps_s^2``.
    grid : TorusGrid
    """

    Z: np.ndarray
    weight: np.ndarray
    grid: TorusGrid

    @property
    def N(self) -> int:
        return self.Z.shape[1]


def discrete_kernel_modes(profile: RadialProfile, config: BubbleConfiguration, grid: TorusGrid,
                          min_points: float | None = None) -> ModeFields:
    """Sample the translation and dilation modes of every bubble on ``grid``."""
    if min_points is None:
        check_resolution(config, grid)
    else:
        check_resolution(config, grid, min_points)
    n, N, M = config.n, config.N, grid.M
    pts = grid.points()
    Z = np.zeros((3, N, n, M, M))
    K = np.zeros((n, M, M))
    m = config.m_star
    for t in range(N):
        eps, dlt = config.eps_t[t], config.delta_t[t]
        d = config.domain.wrap(pts - config.centers[t])
        r = np.linalg.norm(d, axis=-1)
        inside = r < dlt
        Z[2, t] = ((2.0 - m) * eps)[:, None, None]
        ri = r[inside]
        v, dv = profile.evaluate(ri / eps, derivative=True)
        chi = cutoff_profile(ri, dlt)[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            ux = np.where(ri > 0, d[inside][:, 0] / ri, 0.0)
            uy = np.where(ri > 0, d[inside][:, 1] / ri, 0.0)
        for i in range(n):
            Z[0, t, i][inside] = chi * dv[i] * ux
            Z[1, t, i][inside] = chi * dv[i] * uy
            Z[2, t, i][inside] = eps * (chi * (ri / eps * dv[i] + 2.0) + (1.0 - chi) * (2.0 - m[i]))
            K[i][inside] += chi * np.exp(v[i]) / eps**2
    return ModeFields(Z=Z, weight=K, grid=grid)


def project_residual(field: TorusField, modes: ModeFields, j: int, t: int) -> float:
    """``sum_i int S_i Z_{j,t,i}`` for ``j in {1, 2, 3}``."""
    if j not in (1, 2, 3):
        raise ValidationError("mode index j must be 1, 2 or 3")
    if field.grid.M != modes.grid.M:
        raise ValidationError("field and modes live on different grids")
    return float(np.sum(field.grid.integrate(field.values * modes.Z[j - 1, t])))


def translation_projection_prediction(model: ReducedEnergyModel, config: BubbleConfiguration) -> np.ndarray:
    """``(eps_t / N) sum_i [grad ln h_i + 2 pi m_i grad G~_t] rho*_i`` per bubble; shape (N, 2)."""
    return se1_residual(model, config.centers) * (config.eps_t / config.N)[:, None]


def dilation_projection_prediction(model: ReducedEnergyModel, config: BubbleConfiguration,
                                   report: QuantityReport, rho=None) -> np.ndarray:
    """Predicted dilation projection per bubble: interaction term plus ``pi Lambda(rho) eps_t``.

    Raises
    ------
    CaseMismatch
        If the report carries no case or its case does not fit ``m_hat``.
    """
    if report.case is None:
        raise CaseMismatch("quantity report has no case label")
    if (report.case == CASE_SUBCRITICAL) == report.critical:
        raise CaseMismatch(f"case {report.case} does not match m_hat = {report.m_hat}")
    rho = config.rho if rho is None else np.asarray(rho, dtype=float)
    lam = lambda_IN(config.A, rho, config.N)
    out = np.zeros(config.N)
    for t in range(config.N):
        eps = float(config.eps_t[t])
        out[t] = dilation_leading_term(report, t, eps) + LAMBDA_PROJECTION_COEFF * lam * eps
    return out


@dataclass
class ProjectionReport:
    """Numeric projections against their predictions over an ``eps`` sweep."""

    rows: list = field(default_factory=list)

    def add(self, eps, t, j, numeric, predicted):
        gap = abs(numeric - predicted) / abs(predicted) if predicted != 0 else float("inf")
        prev = [r for r in self.rows if r["t"] == t and r["j"] == j]
        slope = float("nan")
        if prev and prev[-1]["numeric"] != 0 and numeric != 0 and prev[-1]["eps"] != eps:
            slope = float(np.log(abs(numeric) / abs(prev[-1]["numeric"])) / np.log(eps / prev[-1]["eps"]))
        self.rows.append({"eps": float(eps), "t": int(t), "j": int(j), "numeric": float(numeric),
                          "predicted": float(predicted), "gap": float(gap), "slope": slope})

    def column(self, key, t=None, j=None):
        return np.array([r[key] for r in self.rows
                         if (t is None or r["t"] == t) and (j is None or r["j"] == j)])

    def slope(self, t: int, j: int) -> float:
        """Least-squares log-log slope of ``|numeric|`` against ``eps``."""
        e = self.column("eps", t, j)
        v = np.abs(self.column("numeric", t, j))
        return float(np.polyfit(np.log(e), np.log(v), 1)[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "t", "j", "numeric", "predicted", "gap", "slope"])
        for r in self.rows:
            w.writerow([repr(r["eps"]), r["t"], r["j"], repr(r["numeric"]), repr(r["predicted"]),
                        repr(r["gap"]), repr(r["slope"])])
        return buf.getvalue()


def projection_sweep(profile: RadialProfile, model: ReducedEnergyModel, configs, M: int,
                     report: QuantityReport | None = None, method: str = "analytic") -> ProjectionReport:
    """Assemble, take the residual and project it on all ``3N`` modes for each configuration."""
    from .bubble_assembly import assemble, residual

    out = ProjectionReport()
    for conf in configs:
        fld = assemble(profile, conf, M, with_laplacian=(method == "analytic"))
        S = residual(fld, conf, model, method=method)
        modes = discrete_kernel_modes(profile, conf, fld.grid)
        trans = translation_projection_prediction(model, conf)
        dil = dilation_projection_prediction(model, conf, report) if report is not None else np.full(conf.N, np.nan)
        for t in range(conf.N):
            for j in (1, 2, 3):
                pred = trans[t, j - 1] if j < 3 else dil[t]
                out.add(conf.eps, t, j, project_residual(S, modes, j, t), pred)
    return out


def corrected_centers(field: TorusField, config: BubbleConfiguration, component: int = 0) -> np.ndarray:
    """Location of the maximum of ``field`` inside each cutoff ball, refined by a quadratic fit.

    Returns an (N, 2) array of torus points.
    """
    grid = field.grid
    vals = field.values[component]
    pts = grid.points()
    M = grid.M
    out = np.zeros((config.N, 2))
    for t in range(config.N):
        d = config.domain.wrap(pts - config.centers[t])
        masked = np.where(np.linalg.norm(d, axis=-1) < config.delta_t[t], vals, -np.inf)
        a, b = np.unravel_index(int(np.argmax(masked)), masked.shape)
        # separable parabola through the 3x3 neighbourhood, in grid index units
        f = np.array([[vals[(a + u) % M, (b + w) % M] for w in (-1, 0, 1)] for u in (-1, 0, 1)])
        shift = np.zeros(2)
        for axis, (lo, mid, hi) in enumerate(((f[0, 1], f[1, 1], f[2, 1]), (f[1, 0], f[1, 1], f[1, 2]))):
            curv = lo - 2 * mid + hi
            shift[axis] = 0.5 * (lo - hi) / curv if curv < 0 else 0.0
        frac = (np.array([a, b]) + shift) / M
        out[t] = config.domain.canonical(config.domain.from_frac(frac))
    return out


def se3_residual(model: ReducedEnergyModel, centers) -> float:
    """``max |(H_it - H_is) - (H_jt - H_js)|`` at the given centers."""
    return compat_residual(h_table(model, centers))


# ---------------------------------------------------------------------------
# dilation pairings


def z3_pairing(profile: RadialProfile, config: BubbleConfiguration, modes: ModeFields) -> np.ndarray:
    """Grid values of ``int sum_s chi_s e^{v_i} eps_s^{-2} Z_{3,t,i}``; shape (n, N)."""
    return np.stack([modes.grid.integrate(modes.weight * modes.Z[2, t]) for t in range(config.N)], axis=1)


def z3_pairing_radial(profile: RadialProfile, config: BubbleConfiguration, nodes: int = 4000) -> np.ndarray:
    """Same pairing by one-dimensional radial quadrature at the actual ``eps`` and ``delta``."""
    n, N = config.n, config.N
    m = config.m_star
    out = np.zeros((n, N))
    xg, wg = np.polynomial.legendre.leggauss(32)

    def radial(eps, dlt, fn):
        # geometric panels in r / eps out to delta
        edges = np.concatenate([[0.0], np.geomspace(1e-4 * eps, dlt, nodes // 32)])
        a, b = edges[:-1, None], edges[1:, None]
        r = (0.5 * (b - a) * xg + 0.5 * (a + b)).ravel()
        w = (0.5 * (b - a) * wg).ravel()
        v, dv = profile.evaluate(r / eps, derivative=True)
        chi = cutoff_profile(r, dlt)[0]
        return np.sum(fn(r, v, dv, chi) * w * 2 * np.pi * r, axis=-1)

    for t in range(N):
        eps, dlt = config.eps_t[t], config.delta_t[t]
        own = radial(eps, dlt, lambda r, v, dv, chi: chi * np.exp(v) / eps**2 * eps * (
            chi * (r / eps * dv + 2.0) + (1.0 - chi) * (2.0 - m)[:, None]))
        out[:, t] += own
        for s in range(N):
            if s == t:
                continue
            es, ds = config.eps_t[s], config.delta_t[s]
            mass = radial(es, ds, lambda r, v, dv, chi: chi * np.exp(v) / es**2)
            out[:, t] += (2.0 - m) * eps * mass
    return out


def z3_pairing_limit(profile: RadialProfile, config: BubbleConfiguration) -> np.ndarray:
    """``eps_t (N - 1)(2 - m_i) int e^{v_i}``, the small-``eps`` limit of the pairing."""
    E = 2 * np.pi * profile.sigma
    return np.outer((config.N - 1) * (2.0 - profile.m_star) * E, config.eps_t)


# ---------------------------------------------------------------------------
# reduction matrices


@dataclass
class ReductionMatrix:
    """Limit matrices of the linear system for the dilation and gauge multipliers.

    Attributes
    ----------
    G1 : ndarray (N, N)
    G2 : ndarray (n, n)
    G3 : ndarray (n, N)
    block : ndarray (N + n, N + n)
    schur : ndarray (N, N)
        ``G1 - G3^T G2^{-1} G3``.
    singular_values, schur_singular_values : ndarray
    """

    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    block: np.ndarray
    schur: np.ndarray
    singular_values: np.ndarray
    schur_singular_values: np.ndarray

    @property
    def block_ratio(self) -> float:
        return float(self.singular_values[-1] / self.singular_values[0])

    @property
    def schur_ratio(self) -> float:
        return float(self.schur_singular_values[-1] / self.schur_singular_values[0])


def build_reduction_matrix(profile: RadialProfile, N: int, rel_tol: float = 1e-10) -> ReductionMatrix:
    """Assemble ``G1``, ``G2``, ``G3``, the block matrix and its Schur complement.

    Raises
    ------
    SingularMatrix
        If the block matrix or the Schur complement has a relative singular
        value below ``rel_tol``.
    """
    if int(N) != N or N < 1:
        raise ValidationError("N must be a positive integer")
    N = int(N)
    m = profile.m_star
    E = profile.mass_integral()

    def dil_sq(r):
        _, dv = profile.evaluate(r, derivative=True)
        return (r * dv + 2.0) ** 2

    K = profile.mass_integral(dil_sq)
    mix = float(np.sum((m - 2.0) ** 2 * E))
    G1 = np.full((N, N), (N - 2) * mix)
    np.fill_diagonal(G1, (N - 1) * mix + float(np.sum(K)))
    G2 = np.diag(N * E)
    G3 = np.repeat(((N - 1) * (2.0 - m) * E)[:, None], N, axis=1)
    block = np.block([[G1, G3.T], [G3, G2]])
    schur = G1 - G3.T @ np.linalg.solve(G2, G3)
    sv = np.linalg.svd(block, compute_uv=False)
    ssv = np.linalg.svd(schur, compute_uv=False)
    out = ReductionMatrix(G1, G2, G3, block, schur, sv, ssv)
    if out.block_ratio <= rel_tol or out.schur_ratio <= rel_tol:
        raise SingularMatrix("reduction matrix is numerically singular")
    return out


# ---------------------------------------------------------------------------
# Newton corrector


@dataclass
class NewtonReport:
    """Outcome of :func:`newton_correct`.

    Attributes
    ----------
    w : ndarray (n, M, M)
    w_inf : float
    residual_initial, residual_final : float
        Max-norm of the residual before and of the projected residual after.
    iterations : int
    converged : bool
    mode_multipliers : ndarray (3, N)
    gauge_multipliers : ndarray (n,)
    history : list of float
    linear_iterations : list of int
    """

    w: np.ndarray
    w_inf: float
    residual_initial: float
    residual_final: float
    iterations: int
    converged: bool
    mode_multipliers: np.ndarray
    gauge_multipliers: np.ndarray
    history: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)

    @property
    def reduction(self) -> float:
        if self.residual_final == 0.0:
            return float("inf")
        return self.residual_initial / self.residual_final

    def to_dict(self) -> dict:
        return {"w_inf": self.w_inf, "residual_initial": self.residual_initial,
                "residual_final": self.residual_final, "reduction": self.reduction,
                "iterations": self.iterations, "converged": self.converged,
                "mode_multipliers": self.mode_multipliers.tolist(),
                "gauge_multipliers": self.gauge_multipliers.tolist(), "history": list(self.history),
                "linear_iterations": list(self.linear_iterations)}


class _System:
    """Discrete nonlinear operator with its Jacobian and bordering columns."""

    def __init__(self, grid: TorusGrid, A, rho, h, U, modes: ModeFields | None):
        self.grid = grid
        self.A_inv = np.linalg.inv(A)
        self.rho = np.asarray(rho, dtype=float)
        self.h = h
        self.U = U
        self.n = U.shape[0]
        self.k2 = grid.k_squared()
        cols = []
        if modes is not None:
            for t in range(modes.N):
                for j in range(3):
                    cols.append(modes.Z[j, t] * modes.weight)
        self.n_modes = len(cols)
        for i in range(self.n):
            e = np.zeros_like(U)
            e[i] = modes.weight[i] if modes is not None else 1.0
            cols.append(e)
        # each column is also the constraint functional; normalise both to unit grid norm
        self.Y = np.stack([c / np.sqrt(grid.integrate(np.sum(c * c, axis=0))) for c in cols])
        self.nb = self.Y.shape[0]
        shift = float(np.max(self.rho)) + 1.0
        P = self.k2[..., None, None] * self.A_inv[None, None] + shift * np.eye(self.n)[None, None]
        self.P_inv = np.linalg.inv(P)

    def density(self, w):
        V = self.U + w
        top = V.max(axis=(-2, -1), keepdims=True)
        e = self.h * np.exp(V - top)
        return e / self.grid.integrate(e)[:, None, None]

    def neg_lap(self, f):
        return np.real(np.fft.ifft2(np.fft.fft2(f, axes=(-2, -1)) * self.k2, axes=(-2, -1)))

    def residual(self, w):
        q = self.density(w)
        return np.einsum("ij,jab->iab", self.A_inv, self.neg_lap(self.U + w)) - self.rho[:, None, None] * (q - 1.0)

    def jac(self, q, dw):
        lin = np.einsum("ij,jab->iab", self.A_inv, self.neg_lap(dw))
        proj = self.grid.integrate(q * dw)
        return lin - self.rho[:, None, None] * (q * dw - q * proj[:, None, None])

    def bordered(self, q, x):
        nw = self.n * self.grid.M**2
        dw = x[:nw].reshape(self.U.shape)
        lam = x[nw:]
        top = self.jac(q, dw) + np.einsum("k,kiab->iab", lam, self.Y)
        bottom = self.grid.integrate(np.einsum("kiab,iab->kab", self.Y, dw))
        return np.concatenate([top.ravel(), bottom])

    def precondition(self, x):
        nw = self.n * self.grid.M**2
        f = x[:nw].reshape(self.U.shape)
        fh = np.fft.fft2(f, axes=(-2, -1))
        gh = np.einsum("abij,jab->iab", self.P_inv, fh)
        g = np.real(np.fft.ifft2(gh, axes=(-2, -1)))
        return np.concatenate([g.ravel(), x[nw:]])


def _merit(system: _System, F, w) -> float:
    cons = system.grid.integrate(np.einsum("kiab,iab->kab", system.Y, w))
    return float(np.sqrt(np.sum(system.grid.integrate(F * F)) + np.sum(cons * cons)))


def newton_correct(field: TorusField, config: BubbleConfiguration | None, model: ReducedEnergyModel,
                   rho=None, profile: RadialProfile | None = None, max_iter: int = 12, tol: float = 1e-10,
                   linear_tol: float = 1e-10, restart: int = 60, max_linear: int = 1200,
                   dense_limit: int = DENSE_LIMIT, min_points: float | None = None):
    """Newton iteration for ``U + w`` with kernel-mode and gauge bordering.

    Solves ``S(U + w) = sum_k lambda_k Y_k`` with ``<Y_k, w> = 0``, where
    ``Y_k`` are the weighted modes ``Z_{j,t,i} K_i`` and the gauge columns
    ``K_i e_i`` (plain constants when ``config`` is None).

    Parameters
    ----------
    field : TorusField
        Assembled approximate solution ``U``.
    config : BubbleConfiguration or None
        ``None`` selects the bubble-free variant with gauge constraints only.
    model : ReducedEnergyModel
        Supplies ``h``; ``A`` is taken from it.
    rho : array_like, optional
        Defaults to ``config.rho`` (or ``model.rho_star``).
    profile : RadialProfile
        Needed for the mode fields when ``config`` is given.
    tol : float
        Stop when the projected residual is below ``tol`` times the initial one.

    Returns
    -------
    corrected : TorusField
    report : NewtonReport

    Raises
    ------
    LinearSolveFailed, NewtonStalled
    """
    grid = field.grid
    U = field.values
    n = U.shape[0]
    if rho is None:
        rho = config.rho if config is not None else model.rho_star
    modes = None
    if config is not None:
        if profile is None:
            raise ValidationError("profile is required to build the mode fields")
        modes = discrete_kernel_modes(profile, config, grid, min_points)
    h = coefficient_values(model, grid)
    system = _System(grid, model.A.A, rho, h, U, modes)
    nw = n * grid.M**2
    size = nw + system.nb
    w = np.zeros_like(U)
    lam = np.zeros(system.nb)

    def projected(wv, lv):
        return system.residual(wv) - np.einsum("k,kiab->iab", lv, system.Y)

    F = projected(w, lam)
    r0 = float(np.max(np.abs(system.residual(w))))
    rnorm = float(np.max(np.abs(F)))
    history = [rnorm]
    lin_its = []
    it = 0
    scale = max(r0, 1e-300)
    # rounding floor of the spectral Laplacian on this grid
    floor = np.finfo(float).eps * float(system.k2.max()) * float(np.max(np.abs(U)) + 1.0)
    stop = max(tol * scale, floor)
    converged = rnorm <= stop
    while not converged:
        if it >= max_iter:
            raise NewtonStalled(f"projected residual {rnorm:.3e} after {max_iter} Newton steps")
        it += 1
        q = system.density(w)
        rhs = np.concatenate([-F.ravel(), -grid.integrate(np.einsum("kiab,iab->kab", system.Y, w))])
        if size <= dense_limit:
            J = np.empty((size, size))
            basis = np.zeros(size)
            for c in range(size):
                basis[c] = 1.0
                J[:, c] = system.bordered(q, basis)
                basis[c] = 0.0
            try:
                lu = scipy.linalg.lu_factor(J, check_finite=True)
                cond = np.linalg.cond(J)
                if not np.isfinite(cond) or cond > 1e14:
                    raise LinearSolveFailed("bordered Jacobian is singular", condition_estimate=float(cond))
                step = scipy.linalg.lu_solve(lu, rhs)
            except (scipy.linalg.LinAlgError, ValueError) as exc:
                raise LinearSolveFailed(f"dense solve failed: {exc}", condition_estimate=float("inf")) from exc
            lin_its.append(1)
        else:
            op = spla.LinearOperator((size, size), matvec=lambda x: system.bordered(q, x), dtype=float)
            pre = spla.LinearOperator((size, size), matvec=system.precondition, dtype=float)
            count = [0]

            def cb(_):
                count[0] += 1

            step, info = spla.gmres(op, rhs, M=pre, rtol=linear_tol, atol=0.0, restart=restart,
                                    maxiter=max(1, max_linear // restart), callback=cb, callback_type="pr_norm")
            lin_its.append(count[0])
            if info != 0:
                # an inexact step is still a descent direction; only reject a poor one
                achieved = np.linalg.norm(op.matvec(step) - rhs) / np.linalg.norm(rhs)
                if not achieved < INEXACT_ACCEPT:
                    raise LinearSolveFailed(
                        f"GMRES stopped at relative residual {achieved:.2e} (info={info})", condition_estimate=None)
        dw = step[:nw].reshape(U.shape)
        # the bordered matrix carries +Y, the residual subtracts the multiplier terms
        dl = -step[nw:]
        # backtracking on the grid L2 norm of the bordered residual, for which the step is a descent direction
        merit = _merit(system, F, w)
        t = 1.0
        for _ in range(30):
            w_try = w + t * dw
            l_try = lam + t * dl
            F_try = projected(w_try, l_try)
            m_try = _merit(system, F_try, w_try)
            if np.isfinite(m_try) and m_try <= (1.0 - 1e-4 * t) * merit:
                break
            t *= 0.5
        else:
            raise NewtonStalled(f"no decrease of the projected residual from {rnorm:.3e}")
        w, lam, F = w_try, l_try, F_try
        rnorm = float(np.max(np.abs(F)))
        history.append(rnorm)
        converged = rnorm <= stop
    Nm = system.n_modes
    report = NewtonReport(
        w=w, w_inf=float(np.max(np.abs(w))), residual_initial=r0, residual_final=rnorm, iterations=it,
        converged=True, mode_multipliers=lam[:Nm].reshape(-1, 3).T if Nm else np.zeros((3, 0)),
        gauge_multipliers=lam[Nm:], history=history, linear_iterations=lin_its)
    return TorusField(grid, U + w), report


class NewtonCorrector(BaseEstimator):
    """Estimator wrapper around :func:`newton_correct`.

    Attributes
    ----------
    report_ : NewtonReport
    field_ : TorusField
        Corrected field.
    """

    def __init__(self, max_iter: int = 12, tol: float = 1e-10, linear_tol: float = 1e-10,
                 restart: int = 60, dense_limit: int = DENSE_LIMIT):
        self.max_iter = max_iter
        self.tol = tol
        self.linear_tol = linear_tol
        self.restart = restart
        self.dense_limit = dense_limit

    def fit(self, field: TorusField, config=None, model=None, rho=None, profile=None):
        if model is None:
            raise ValidationError("model is required")
        self.field_, self.report_ = newton_correct(
            field, config, model, rho=rho, profile=profile, max_iter=self.max_iter, tol=self.tol,
            linear_tol=self.linear_tol, restart=self.restart, dense_limit=self.dense_limit)
        return self
