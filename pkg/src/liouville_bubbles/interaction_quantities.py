"""Global singular integrals ``D_it``, local quantities ``L_it`` and case selection.

``D_it`` integrates ``(ratio - 1)/|x - p_t|^m`` over the cell ``Omega_t`` of a
partition (lifted to the plane around ``p_t``) and subtracts the integral of
``|x - p_t|^{-m}`` over the plane outside that cell.  Near ``p_t`` the numerator is ``O(r)`` with an odd
leading term, so the quadrature is polar around ``p_t``:

* inner disk (radius = cell inradius): uniform angular trapezoid, which
  cancels odd terms exactly, times Gauss-Legendre on geometric radial panels;
  the disk of radius ``r_min`` is replaced by the angular average of the
  second-order Taylor term;
* rest of the cell: Gauss-Legendre in angle between polygon vertex angles and
  in radius up to the polygon boundary;
* complement: the radial integral of ``r^{1-m}`` is done in closed form.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    CaseMismatch,
    Inconclusive,
    NoCaseApplies,
    PartitionViolation,
    QuadratureDiverging,
    ValidationError,
)
from .limit_profile import RadialProfile
from .reduced_energy import CriticalConfiguration, ReducedEnergyModel, h_table
from .torus_green import StarCell, VoronoiPartition, voronoi_partition

# the dilation projection depends on rho through eps_t sum_i (2 - m_i)(rho_i - rho*_i) / N,
# which is pi Lambda_{I,N}(rho) eps_t to first order
LAMBDA_PROJECTION_COEFF = np.pi

CASE_SUBCRITICAL = "subcritical-D"
CASE_CRITICAL_L = "critical-L"
CASE_CRITICAL_ZERO_L = "critical-L-zero-D"
CASES = (CASE_SUBCRITICAL, CASE_CRITICAL_L, CASE_CRITICAL_ZERO_L)

_EXPONENT_TOL = 1e-8
# (angular nodes on the inner disk, radial GL order, panels per octave, GL order outside)
_LEVELS = ((48, 8, 1, 12), (96, 12, 2, 20), (192, 16, 3, 28))
_INNER_FRACTION = 0.999
_R_MIN_FRACTION = 1e-3


def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _sectors(angles):
    """Consecutive angular intervals covering ``[a_0, a_0 + 2 pi)``."""
    a = np.unique(np.mod(np.asarray(angles, dtype=float), 2 * np.pi))
    b = np.append(a[1:], a[0] + 2 * np.pi)
    keep = b - a > 1e-13
    return a[keep], b[keep]


class _Integrand:
    """``ln h_i + 2 pi m G~_t`` around ``p_t`` for all components at once."""

    def __init__(self, model: ReducedEnergyModel, centers, t: int, m: float):
        self.model = model
        self.centers = centers
        self.t = t
        self.m = m
        self.p = centers[t]
        g = model.green
        self.phi0 = self._phi(self.p[None, :])[:, 0]
        _, dlnh, hlnh = model.log_h_derivatives(self.p)
        grad_gt = g.grad_gamma(self.p, self.p)
        hess_gt = g.hess_gamma(self.p, self.p)
        for s in range(centers.shape[0]):
            if s != t:
                grad_gt = grad_gt + g.grad_G(self.p, centers[s])
                hess_gt = hess_gt + g.hess_G(self.p, centers[s])
        self.grad = dlnh + 2 * np.pi * m * grad_gt[None, :]
        self.hess = hlnh + 2 * np.pi * m * hess_gt[None, :, :]
        # angular mean of the quadratic Taylor term of expm1(phi - phi0) is c2 r^2
        self.c2 = 0.25 * (np.trace(self.hess, axis1=-2, axis2=-1) + np.einsum("ia,ia->i", self.grad, self.grad))
        self.c2_scale = 0.25 * (np.abs(np.trace(self.hess, axis1=-2, axis2=-1))
                                + np.einsum("ia,ia->i", self.grad, self.grad))

    def _phi(self, x):
        g = self.model.green
        gt = g.gamma(x, self.p)
        for s in range(self.centers.shape[0]):
            if s != self.t:
                gt = gt + g.G(x, self.centers[s])
        return self.model.log_h(x) + 2 * np.pi * self.m * gt[None]

    def numerator(self, r, theta):
        """``expm1(phi(p + r u) - phi(p))`` with shape (n,) + broadcast(r, theta)."""
        r, theta = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
        x = self.p + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
        flat = x.reshape(-1, 2)
        val = self._phi(flat) - self.phi0[:, None]
        return np.expm1(val).reshape((-1,) + r.shape)


def integrand(model: ReducedEnergyModel, config: CriticalConfiguration, t: int, x, m_hat: float):
    """Pointwise ``(ratio_i(x) - 1)/|x - p_t|^m`` for every component; shape (n, ...)."""
    x = np.asarray(x, dtype=float)
    f = _Integrand(model, config.centers, t, m_hat)
    d = model.domain.wrap(x - config.centers[t])
    r = np.linalg.norm(d, axis=-1)
    theta = np.arctan2(d[..., 1], d[..., 0])
    return f.numerator(r, theta) / r[None] ** m_hat


def ring_average(model: ReducedEnergyModel, config: CriticalConfiguration, t: int, r: float, m_hat: float,
                 n_theta: int = 256):
    """Angular mean of :func:`integrand` on the circle of radius ``r`` about ``p_t``."""
    f = _Integrand(model, config.centers, t, m_hat)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    return f.numerator(r, theta).mean(axis=-1) / r**m_hat


def _cell_integral(f: _Integrand, cell: StarCell, level: int, m: float) -> np.ndarray:
    n_theta, n_rad, per_octave, n_out = _LEVELS[level]
    xr, wr = _gauss(n_rad)
    xo, wo = _gauss(n_out)
    r0 = _INNER_FRACTION * cell.inradius
    r_min = _R_MIN_FRACTION * r0
    # inner disk
    n_pan = int(np.ceil(np.log2(r0 / r_min) * per_octave))
    edges = np.geomspace(r_min, r0, n_pan + 1)
    a, b = edges[:-1, None], edges[1:, None]
    rr = (0.5 * (b - a) * xr[None, :] + 0.5 * (a + b)).ravel()
    wrr = (0.5 * (b - a) * wr[None, :]).ravel()
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    num = f.numerator(rr[:, None], theta[None, :])
    total = np.einsum("irk,r->i", num, wrr * rr ** (1.0 - m)) * (2 * np.pi / n_theta)
    if m < 4.0 - _EXPONENT_TOL:
        total = total + 2 * np.pi * f.c2 * r_min ** (4.0 - m) / (4.0 - m)
    # rest of the cell, sector by sector
    lo, hi = _sectors(cell.vertex_angles)
    th = (0.5 * (hi - lo)[:, None] * xo[None, :] + 0.5 * (hi + lo)[:, None]).ravel()
    wth = (0.5 * (hi - lo)[:, None] * wo[None, :]).ravel()
    rho = cell.ray_distance(th)
    # two radial panels per ray
    pieces = []
    for lo_f, hi_f in ((0.0, 0.5), (0.5, 1.0)):
        ra = r0 + lo_f * (rho - r0)
        rb = r0 + hi_f * (rho - r0)
        rk = 0.5 * (rb - ra)[:, None] * xo[None, :] + 0.5 * (rb + ra)[:, None]
        wk = 0.5 * (rb - ra)[:, None] * wo[None, :]
        val = f.numerator(rk, np.broadcast_to(th[:, None], rk.shape))
        pieces.append(np.einsum("iak,ak,a->i", val, wk * rk ** (1.0 - m), wth))
    total = total + pieces[0] + pieces[1]
    # complement of the cell in the plane, in closed form along each ray
    lo, hi = _sectors(cell.vertex_angles)
    th = (0.5 * (hi - lo)[:, None] * xo[None, :] + 0.5 * (hi + lo)[:, None]).ravel()
    wth = (0.5 * (hi - lo)[:, None] * wo[None, :]).ravel()
    comp = np.sum(wth * cell.ray_distance(th) ** (2.0 - m) / (m - 2.0))
    return total - comp


@dataclass
class DResult:
    """Values of ``D_it`` and their refinement error estimate.

    Attributes
    ----------
    D : ndarray (n, N)
        Level-1 values; NaN for components outside the requested set.
    error : ndarray (n, N)
        ``|level 1 - level 0|``.
    finest : ndarray (n, N)
        Level-2 values, used for the stability check.
    """

    D: np.ndarray
    error: np.ndarray
    finest: np.ndarray


def _check_partition(partition, config, deltas):
    if not isinstance(partition, VoronoiPartition):
        raise ValidationError("partition must be a VoronoiPartition")
    if partition.centers.shape != config.centers.shape or np.max(
            partition.domain.distance(partition.centers, config.centers)) > 1e-12:
        raise ValidationError("partition centers differ from the configuration centers")
    if deltas is not None:
        deltas = np.broadcast_to(np.asarray(deltas, dtype=float), (config.N,))
        for t, cell in enumerate(partition.cells):
            if 3.0 * deltas[t] > cell.inradius:
                raise PartitionViolation(f"ball of radius 3 delta_{t} is not inside cell {t}")


def compute_D(model: ReducedEnergyModel, config: CriticalConfiguration, partition: VoronoiPartition | None,
              profile: RadialProfile, components=None, deltas=None) -> DResult:
    """Singular integrals ``D_it`` with a refinement error estimate.

    Parameters
    ----------
    model : ReducedEnergyModel
    config : CriticalConfiguration
    partition : VoronoiPartition or None
        Defaults to the Voronoi partition of the centers.
    profile : RadialProfile
        Supplies the intercepts ``I_i`` and the exponent ``m_hat``.
    components : iterable of int, optional
        Components to evaluate; defaults to ``{i : m_i = m_hat}`` when
        ``m_hat < 4`` and to all components when ``m_hat = 4``.
    deltas : array_like, optional
        Cutoff radii checked against the partition.

    Raises
    ------
    QuadratureDiverging
        When ``m_hat = 4`` and the logarithmically divergent part does not
        vanish, or when the finest level disagrees with the reported error.
    PartitionViolation
    """
    if partition is None:
        partition = voronoi_partition(model.domain, config.centers)
    _check_partition(partition, config, deltas)
    m = float(profile.m_hat)
    n, N = model.n, config.N
    if components is None:
        if m < 4.0 - _EXPONENT_TOL:
            components = [i for i in range(n) if abs(profile.m_star[i] - m) < _EXPONENT_TOL]
        else:
            components = list(range(n))
    components = sorted(set(int(i) for i in components))
    levels = np.full((3, n, N), np.nan)
    for t in range(N):
        f = _Integrand(model, config.centers, t, m)
        if m >= 4.0 - _EXPONENT_TOL:
            bad = [i for i in components if abs(f.c2[i]) > 1e-8 * f.c2_scale[i] + 1e-12]
            if bad:
                raise QuadratureDiverging(
                    f"integral diverges logarithmically at center {t} for components {bad}")
        for level in range(3):
            vals = _cell_integral(f, partition.cells[t], level, m)
            levels[level, components, t] = vals[components]
    scale = np.exp(profile.I)[:, None]
    levels = levels * scale[None]
    D, err, finest = levels[1], np.abs(levels[1] - levels[0]), levels[2]
    floor = 1e-12 * np.nanmax(np.abs(D)) if np.any(np.isfinite(D)) else 0.0
    drift = np.abs(finest - D)
    if np.any(drift[components] > 10.0 * np.maximum(err[components], floor) + 1e-14):
        raise QuadratureDiverging("quadrature did not stabilize under refinement")
    return DResult(D=D, error=np.maximum(err, floor), finest=finest)


def compute_L(model: ReducedEnergyModel, config: CriticalConfiguration, profile: RadialProfile) -> np.ndarray:
    """``L_it = (|grad h_i/h_i + 8 pi grad G~_t|^2 + Lap h_i/h_i + 8 N pi) e^{I_i}`` at the centers."""
    centers = config.centers
    N = centers.shape[0]
    g = model.green
    out = np.zeros((model.n, N))
    for t in range(N):
        p = centers[t]
        grad_gt = g.grad_gamma(p, p)
        for s in range(N):
            if s != t:
                grad_gt = grad_gt + g.grad_G(p, centers[s])
        _, dlnh, _ = model.log_h_derivatives(p)
        lap_ratio = np.array([c.laplacian_ratio(model.domain, p) for c in model.h])
        v = dlnh + 8 * np.pi * grad_gt[None, :]
        out[:, t] = np.einsum("ia,ia->i", v, v) + lap_ratio + 8 * N * np.pi
    return out * np.exp(profile.I)[:, None]


@dataclass
class QuantityReport:
    """Interaction quantities of a critical configuration and the resulting case.

    Attributes
    ----------
    m_hat : float
    I_hat : list of int
    D, D_error : ndarray (n, N) or None
    L : ndarray (n, N) or None
    H : ndarray (n, N)
    h_at_centers : ndarray (n, N)
    D_sum, D_sum_error, L_sum, L_sum_error : float
    case : str or None
    """

    m_hat: float
    I_hat: list
    H: np.ndarray
    h_at_centers: np.ndarray
    D: np.ndarray | None = None
    D_error: np.ndarray | None = None
    L: np.ndarray | None = None
    D_sum: float = float("nan")
    D_sum_error: float = float("nan")
    L_sum: float = float("nan")
    L_sum_error: float = float("nan")
    case: str | None = None
    notes: list = field(default_factory=list)

    @property
    def critical(self) -> bool:
        return abs(self.m_hat - 4.0) < _EXPONENT_TOL

    def weights(self) -> np.ndarray:
        """``e^{(m_hat - 2) H_it} h_i(p_t)``."""
        return np.exp((self.m_hat - 2.0) * self.H) * self.h_at_centers

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return {
            "m_hat": self.m_hat, "I_hat": list(self.I_hat), "H": arr(self.H),
            "h_at_centers": arr(self.h_at_centers), "D": arr(self.D), "D_error": arr(self.D_error),
            "L": arr(self.L), "D_sum": self.D_sum, "D_sum_error": self.D_sum_error,
            "L_sum": self.L_sum, "L_sum_error": self.L_sum_error, "case": self.case, "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """One row per ``(i, t)`` with the entries and their error estimates."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "t", "H", "h", "D", "D_error", "L"])
        n, N = self.H.shape
        for i in range(n):
            for t in range(N):
                w.writerow([i, t, repr(float(self.H[i, t])), repr(float(self.h_at_centers[i, t])),
                            "" if self.D is None else repr(float(self.D[i, t])),
                            "" if self.D_error is None else repr(float(self.D_error[i, t])),
                            "" if self.L is None else repr(float(self.L[i, t]))])
        return buf.getvalue()


def _weighted_sum(values, errors, weights, rows):
    vals = values[rows]
    wts = weights[rows]
    total = float(np.sum(wts * vals))
    err = float(np.sum(np.abs(wts) * errors[rows])) if errors is not None else 0.0
    return total, err


def compute_quantities(model: ReducedEnergyModel, config: CriticalConfiguration, profile: RadialProfile,
                       partition: VoronoiPartition | None = None, deltas=None,
                       always_D: bool = False) -> QuantityReport:
    """Evaluate the quantities needed by :func:`classify_case` and fill in the case.

    ``D`` is computed when ``m_hat < 4``, when the ``L``-sum vanishes, or when
    ``always_D`` is set.  Classification errors are recorded in ``notes``
    rather than raised; call :func:`classify_case` to get them as exceptions.
    """
    m = float(profile.m_hat)
    if m > 4.0 + _EXPONENT_TOL:
        raise NoCaseApplies(f"m_hat = {m:.6g} exceeds 4")
    I_hat = [i for i in range(model.n) if abs(profile.m_star[i] - m) < _EXPONENT_TOL]
    H = h_table(model, config.centers)
    hp = np.stack([c.value(model.domain, config.centers) for c in model.h])
    report = QuantityReport(m_hat=m, I_hat=I_hat, H=H, h_at_centers=hp)
    w = report.weights()
    if report.critical:
        report.L = compute_L(model, config, profile)
        report.L_sum, _ = _weighted_sum(report.L, None, w, slice(None))
        report.L_sum_error = 1e-10 * float(np.sum(np.abs(w * report.L)))
    need_D = always_D or not report.critical or abs(report.L_sum) < 10.0 * report.L_sum_error
    if need_D:
        res = compute_D(model, config, partition, profile, deltas=deltas)
        report.D, report.D_error = res.D, res.error
        rows = I_hat if not report.critical else list(range(model.n))
        report.D_sum, report.D_sum_error = _weighted_sum(report.D, report.D_error, w, rows)
    try:
        report.case = classify_case(report)
    except (Inconclusive, NoCaseApplies) as exc:
        report.notes.append(f"{type(exc).__name__}: {exc}")
    return report


def classify_case(report: QuantityReport) -> str:
    """Case label from the weighted sums.

    Raises
    ------
    Inconclusive
        When the deciding sum is not larger than its error estimate.
    NoCaseApplies
    """
    m = report.m_hat
    if m > 4.0 + _EXPONENT_TOL:
        raise NoCaseApplies(f"m_hat = {m:.6g} exceeds 4")
    if not report.critical:
        if report.D is None:
            raise ValidationError("D has not been computed")
        if abs(report.D_sum) <= report.D_sum_error:
            raise Inconclusive(f"D-sum {report.D_sum:.3e} is within its error {report.D_sum_error:.3e}")
        return CASE_SUBCRITICAL
    if report.L is None:
        raise ValidationError("L has not been computed")
    if abs(report.L_sum) >= 10.0 * report.L_sum_error:
        return CASE_CRITICAL_L
    if report.D is None:
        raise ValidationError("L-sum vanishes and D has not been computed")
    if abs(report.D_sum) <= report.D_sum_error:
        raise Inconclusive(
            f"L-sum and D-sum ({report.D_sum:.3e} +- {report.D_sum_error:.3e}) are both within their errors")
    return CASE_CRITICAL_ZERO_L


def bracket(report: QuantityReport, t: int, case: str | None = None) -> float:
    """``sum_i (Q_it + sum_{s != t} (w_is / w_it) Q_is)`` with ``Q = D`` or ``L`` as the case requires."""
    case = case or report.case
    if case not in CASES:
        raise CaseMismatch(f"unknown or missing case {case!r}")
    w = report.weights()
    if case == CASE_CRITICAL_L:
        if report.L is None:
            raise CaseMismatch("case needs L but it was not computed")
        Q, rows = report.L, list(range(w.shape[0]))
    else:
        if report.D is None:
            raise CaseMismatch("case needs D but it was not computed")
        if case == CASE_SUBCRITICAL and report.critical:
            raise CaseMismatch("subcritical case requested with m_hat = 4")
        if case != CASE_SUBCRITICAL and not report.critical:
            raise CaseMismatch("critical case requested with m_hat < 4")
        Q = report.D
        rows = report.I_hat if case == CASE_SUBCRITICAL else list(range(w.shape[0]))
    total = 0.0
    for i in rows:
        total += float(np.sum(w[i] * Q[i]) / w[i, t])
    return total


def dilation_leading_term(report: QuantityReport, t: int, eps_t: float, case: str | None = None) -> float:
    """Interaction part of the predicted dilation projection at bubble ``t``.

    ``(m_hat - 2)/N * bracket * eps_t^{m_hat - 1}`` (subcritical),
    ``2/N * bracket * eps_t^3 ln(1/eps_t)`` (L case) or ``2/N * bracket * eps_t^3``.
    """
    case = case or report.case
    N = report.H.shape[1]
    b = bracket(report, t, case)
    if case == CASE_SUBCRITICAL:
        return (report.m_hat - 2.0) / N * b * eps_t ** (report.m_hat - 1.0)
    if case == CASE_CRITICAL_L:
        return 2.0 / N * b * eps_t**3 * np.log(1.0 / eps_t)
    return 2.0 / N * b * eps_t**3


def lambda_target(report: QuantityReport, eps_t: float, t: int = 0, case: str | None = None) -> float:
    """Value of ``Lambda_{I,N}(rho_eps)`` that cancels the interaction term of the dilation projection."""
    return -dilation_leading_term(report, t, eps_t, case) / (LAMBDA_PROJECTION_COEFF * eps_t)
