"""Approximate blowup solutions built from scaled limit profiles.

For each bubble ``t`` and component ``i`` the inner piece is

    W*(x) = v_i(|x - p_t| / eps_t) + 2 ln(1/eps_t) + 2 pi m_i [gamma(x, p_t) - gamma(p_t, p_t)]

and the outer piece replaces ``v_i(r/eps_t)`` by its log-linear continuation
``v_i(delta_t/eps_t) + m_i ln(delta_t / r)``.  They are glued with a radial
cutoff ``chi_t`` and summed over bubbles.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import GridTooCoarse, NoRoot, ValidationError
from .interaction_quantities import QuantityReport, lambda_target
from .limit_profile import RadialProfile, lambda_IN
from .reduced_energy import CriticalConfiguration, ReducedEnergyModel
from .torus_green import GreenEvaluator, TorusDomain, voronoi_partition
from .validation import check_point_cloud, check_positive_scalar, check_vector

MAX_GRID = 8192
MIN_POINTS_PER_SCALE = 2.0
MAX_SCALE_RATIO = 0.25
DELTA_FRACTION = 0.32
GRID_MAGIC = b"LTFG"
GRID_VERSION = 1


# ---------------------------------------------------------------------------
# cutoff


def _smoothstep(s):
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def cutoff_profile(r, delta: float):
    """Radial cutoff and its first two radial derivatives.

    ``chi = 1`` for ``r <= delta/2``, ``0`` for ``r >= delta`` and
    ``1 - S(2r/delta - 1)`` in between with the quintic smoothstep ``S``.
    """
    r = np.asarray(r, dtype=float)
    s = np.clip(2.0 * r / delta - 1.0, 0.0, 1.0)
    band = (s > 0.0) & (s < 1.0)
    chi = 1.0 - _smoothstep(s)
    d1 = np.where(band, -(30 * s**2 - 60 * s**3 + 30 * s**4) * (2.0 / delta), 0.0)
    d2 = np.where(band, -(60 * s - 180 * s**2 + 120 * s**3) * (4.0 / delta**2), 0.0)
    return chi, d1, d2


def cutoff(x, center, delta: float, domain: TorusDomain | None = None):
    """``chi((x - center)/delta)`` using the torus distance when ``domain`` is given."""
    delta = check_positive_scalar(delta, "delta")
    x = check_point_cloud(x, "x")
    center = np.asarray(center, dtype=float)
    if domain is not None:
        r = domain.distance(x, center)
    else:
        r = np.linalg.norm(x - center, axis=-1)
    return cutoff_profile(r, delta)[0]


# ---------------------------------------------------------------------------
# configuration


@dataclass
class BubbleConfiguration:
    """Centers, scales and parameters of one approximate solution.

    Attributes
    ----------
    centers : ndarray (N, 2)
    eps : float
        Base scale.
    eps_t : ndarray (N,)
        Per-bubble scales ``eps e^{H_1t}``.
    delta : float
    delta_t : ndarray (N,)
        Cutoff radii ``delta e^{H_1t - H_11}``.
    rho : ndarray (n,)
    H : ndarray (n, N)
    m_star, sigma : ndarray (n,)
    A : ndarray (n, n)
    green : GreenEvaluator
    """

    centers: np.ndarray
    eps: float
    eps_t: np.ndarray
    delta: float
    delta_t: np.ndarray
    rho: np.ndarray
    H: np.ndarray
    m_star: np.ndarray
    sigma: np.ndarray
    A: np.ndarray
    green: GreenEvaluator = field(repr=False)

    @property
    def N(self) -> int:
        return self.centers.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def domain(self) -> TorusDomain:
        return self.green.domain

    def lambda_value(self) -> float:
        return lambda_IN(self.A, self.rho, self.N)

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(), "eps": self.eps, "eps_t": self.eps_t.tolist(),
            "delta": self.delta, "delta_t": self.delta_t.tolist(), "rho": self.rho.tolist(),
            "H": self.H.tolist(), "m_star": self.m_star.tolist(), "sigma": self.sigma.tolist(),
            "lambda": self.lambda_value(),
        }


def default_delta(model: ReducedEnergyModel, critical: CriticalConfiguration) -> float:
    """Base cutoff radius: ``DELTA_FRACTION`` of the smallest Voronoi-cell inradius,
    divided by the largest ``delta_t / delta`` ratio so every ball fits its cell."""
    c = critical.centers
    ratio = np.exp(critical.H[0] - critical.H[0, 0])
    part = voronoi_partition(model.domain, c)
    inr = min(cell.inradius for cell in part.cells)
    return float(DELTA_FRACTION * inr / np.max(ratio))


def make_configuration(model: ReducedEnergyModel, critical: CriticalConfiguration, eps: float,
                       delta: float | None = None, rho=None,
                       max_scale_ratio: float = MAX_SCALE_RATIO) -> BubbleConfiguration:
    """Scales and radii for base scale ``eps`` at a critical configuration.

    ``eps_t = e^{H_1t} eps`` and ``delta_t = e^{H_1t - H_11} delta``, so
    ``ln(eps_t/eps_s) = H_1t - H_1s`` exactly.

    Raises
    ------
    ValidationError
        If ``eps_t >= max_scale_ratio * delta_t`` or the heights are undefined.
    CentersTooClose
        If the cutoff balls violate the partition conditions.
    """
    eps = check_positive_scalar(eps, "eps")
    H = np.asarray(critical.H, dtype=float)
    if not np.all(np.isfinite(H)):
        raise ValidationError("heights H are undefined for this configuration")
    if delta is None:
        delta = default_delta(model, critical)
    delta = check_positive_scalar(delta, "delta")
    ratio = np.exp(H[0] - H[0, 0])
    eps_t = np.exp(H[0, 0]) * eps * ratio
    delta_t = delta * ratio
    if np.any(eps_t >= max_scale_ratio * delta_t):
        raise ValidationError(
            f"bubble scales {eps_t} are not below {max_scale_ratio} times the cutoff radii {delta_t}")
    voronoi_partition(model.domain, critical.centers, deltas=delta_t)
    rho = model.rho_star.copy() if rho is None else check_vector(rho, "rho", model.n, positive=True)
    return BubbleConfiguration(
        centers=critical.centers.copy(), eps=eps, eps_t=eps_t, delta=delta, delta_t=delta_t, rho=rho,
        H=H.copy(), m_star=model.m_star.copy(), sigma=model.sigma.copy(), A=model.A.A.copy(),
        green=model.green)


def solve_rho_on_ray(A, rho_star, N: int, target: float, direction=None) -> np.ndarray:
    """Point ``rho* + s d`` with ``Lambda_{I,N} = target``, taking the root of smallest ``|s|``.

    ``Lambda`` is quadratic along the ray, so the root is explicit.
    """
    A = np.asarray(getattr(A, "A", A), dtype=float)
    rho_star = np.asarray(rho_star, dtype=float)
    d = rho_star.copy() if direction is None else np.asarray(direction, dtype=float)
    c = 2 * np.pi * N
    lam0 = lambda_IN(A, rho_star, N)
    b = 4.0 * d.sum() / c - 2.0 * (rho_star @ A @ d) / c**2
    q = (d @ A @ d) / c**2
    k = lam0 - target
    # q s^2 - b s - k = 0, solved without cancellation
    if abs(q) < 1e-300:
        if b == 0.0:
            raise NoRoot("Lambda is constant along the ray")
        roots = [-k / b]
    else:
        disc = b * b + 4.0 * q * k
        if disc < 0.0:
            raise NoRoot(f"target Lambda = {target:.3e} is not attained along the ray")
        big = b + np.copysign(np.sqrt(disc), b if b != 0.0 else 1.0)
        roots = [big / (2.0 * q)]
        roots.append(-2.0 * k / big if big != 0.0 else 0.0)
    roots = np.array([s for s in roots if np.isfinite(s)])
    good = [s for s in roots if np.all(rho_star + s * d > 0)
            and abs(lambda_IN(A, rho_star + s * d, N) - target) <= 1e-9 * max(1.0, abs(target))]
    if not good:
        raise NoRoot("no admissible root along the ray")
    s = min(good, key=abs)
    return rho_star + s * d


def rho_sweep(model: ReducedEnergyModel, critical: CriticalConfiguration, report: QuantityReport, eps_list,
              direction=None, delta: float | None = None, case: str | None = None) -> list:
    """Configurations whose ``rho_eps`` cancels the interaction term of the dilation projection.

    For each ``eps`` the target ``Lambda_{I,N}(rho_eps)`` is
    :func:`~liouville_bubbles.interaction_quantities.lambda_target` at bubble 0.
    """
    out = []
    for eps in eps_list:
        conf = make_configuration(model, critical, eps, delta=delta)
        target = lambda_target(report, float(conf.eps_t[0]), 0, case)
        rho = solve_rho_on_ray(model.A, model.rho_star, model.N, target, direction)
        conf.rho = rho
        out.append(conf)
    return out


# ---------------------------------------------------------------------------
# pieces


def _radial(config: BubbleConfiguration, t: int, x):
    d = config.domain.wrap(np.asarray(x, dtype=float) - config.centers[t])
    return np.linalg.norm(d, axis=-1)


def bubble_inner(profile: RadialProfile, config: BubbleConfiguration, i: int, t: int, x):
    """Inner piece ``W*_{i,t}`` at points ``x``."""
    x = check_point_cloud(x, "x")
    r = _radial(config, t, x)
    eps = config.eps_t[t]
    gam = config.green.gamma(x, config.centers[t]) - config.green.robin_constant
    v = profile.evaluate(r / eps)[i]
    return v + 2.0 * np.log(1.0 / eps) + 2 * np.pi * config.m_star[i] * gam


def bubble_outer(profile: RadialProfile, config: BubbleConfiguration, i: int, t: int, x):
    """Outer piece ``W**_{i,t}`` at points ``x`` (singular at ``p_t``)."""
    x = check_point_cloud(x, "x")
    r = _radial(config, t, x)
    eps, dlt, m = config.eps_t[t], config.delta_t[t], config.m_star[i]
    gam = config.green.gamma(x, config.centers[t]) - config.green.robin_constant
    vd = profile.evaluate(np.array([dlt / eps]))[i, 0]
    with np.errstate(divide="ignore"):
        return vd + m * np.log(dlt) - m * np.log(r) + 2.0 * np.log(1.0 / eps) + 2 * np.pi * m * gam


def seam_gap(profile: RadialProfile, config: BubbleConfiguration, i: int, t: int, samples: int = 65) -> float:
    """``max |W* - W**|`` over ``|x - p_t| in [delta_t/2, delta_t]`` (the Green terms cancel)."""
    eps, dlt, m = config.eps_t[t], config.delta_t[t], config.m_star[i]
    r = np.linspace(0.5 * dlt, dlt, samples)
    v = profile.evaluate(r / eps)[i]
    vd = profile.evaluate(np.array([dlt / eps]))[i, 0]
    return float(np.max(np.abs(v + m * np.log(r) - vd - m * np.log(dlt))))


def _compose(profile: RadialProfile, config: BubbleConfiguration, radii, gammas, want_laplacian: bool):
    """Sum the glued pieces given per-bubble distances and regular parts minus the Robin constant.

    Returns ``U`` of shape (n, P) and, when requested, ``-Lap U_j`` of the same shape.
    """
    n = config.n
    m = config.m_star
    A = config.A
    P = radii[0].shape[0]
    U = np.zeros((n, P))
    lap = np.zeros((n, P)) if want_laplacian else None
    for t in range(config.N):
        r, gam = radii[t], gammas[t]
        eps, dlt = config.eps_t[t], config.delta_t[t]
        base = 2.0 * np.log(1.0 / eps) + 2 * np.pi * m[:, None] * gam[None, :]
        vd = profile.evaluate(np.array([dlt / eps]))[:, 0]
        inside = r < dlt
        outside = ~inside
        Ut = np.empty((n, P))
        if np.any(outside):
            ro = r[outside]
            Ut[:, outside] = (vd + m * np.log(dlt))[:, None] - np.outer(m, np.log(ro)) + base[:, outside]
        if np.any(inside):
            ri = r[inside]
            v, dv = profile.evaluate(ri / eps, derivative=True)
            chi, chi1, chi2 = cutoff_profile(ri, dlt)
            Ut[:, inside] = v + base[:, inside]
            seam = chi < 1.0
            if np.any(seam):
                rs = ri[seam]
                gap = v[:, seam] - vd[:, None] + np.outer(m, np.log(rs / dlt))
                Ut[:, np.flatnonzero(inside)[seam]] -= (1.0 - chi[seam]) * gap
            if want_laplacian:
                lin = np.zeros((n, ri.size))
                lin += chi * (A @ np.exp(v)) / eps**2
                if np.any(seam):
                    rs = ri[seam]
                    gap = v[:, seam] - vd[:, None] + np.outer(m, np.log(rs / dlt))
                    dgap = dv[:, seam] / eps + m[:, None] / rs
                    lin[:, seam] += -2.0 * chi1[seam] * dgap - gap * (chi2[seam] + chi1[seam] / rs)
                lap[:, inside] += lin
        U += Ut
        if want_laplacian:
            lap += -2 * np.pi * m[:, None]
    return U, lap


# ---------------------------------------------------------------------------
# grids and fields


class TorusGrid:
    """Uniform ``M x M`` grid on the fundamental cell; index ``[a, b]`` is ``(a e1 + b e2)/M``."""

    def __init__(self, domain: TorusDomain, M: int):
        if int(M) != M or M < 4 or M % 2:
            raise ValidationError("grid size must be an even integer >= 4")
        if M > MAX_GRID:
            raise ValidationError(f"grid size {M} exceeds the memory guard {MAX_GRID}")
        self.domain = domain
        self.M = int(M)

    @property
    def spacing(self) -> float:
        return float(max(np.linalg.norm(self.domain.e1), np.linalg.norm(self.domain.e2)) / self.M)

    @property
    def weight(self) -> float:
        return 1.0 / self.M**2

    def points(self) -> np.ndarray:
        return self.domain.grid_points(self.M)

    def wavevectors(self) -> np.ndarray:
        return self.domain.grid_wavevectors(self.M)

    def k_squared(self) -> np.ndarray:
        k = self.wavevectors()
        return np.einsum("abi,abi->ab", k, k)

    def neg_laplacian(self, values):
        """Spectral ``-Lap`` of periodic samples with trailing shape (M, M)."""
        k2 = self.k_squared()
        return np.real(np.fft.ifft2(np.fft.fft2(values, axes=(-2, -1)) * k2, axes=(-2, -1)))

    def solve_poisson(self, rhs):
        """Zero-mean solution of ``-Lap u = rhs - mean(rhs)``."""
        k2 = self.k_squared()
        inv = np.zeros_like(k2)
        inv[k2 > 0] = 1.0 / k2[k2 > 0]
        return np.real(np.fft.ifft2(np.fft.fft2(rhs, axes=(-2, -1)) * inv, axes=(-2, -1)))

    def integrate(self, values):
        """Trapezoidal (uniform) quadrature over the cell; sums the last two axes."""
        return np.sum(values, axis=(-2, -1)) * self.weight


@dataclass
class TorusField:
    """Per-component samples ``values[i, a, b]`` on a :class:`TorusGrid`."""

    grid: TorusGrid
    values: np.ndarray
    neg_laplacian: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.grid.M

    def integrate(self):
        return self.grid.integrate(self.values)

    def to_csv(self, handle=None) -> str | None:
        """Rows ``x, y, u_1, ..., u_n`` in grid index order."""
        buf = handle if handle is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y"] + [f"u_{i + 1}" for i in range(self.n)])
        pts = self.grid.points().reshape(-1, 2)
        vals = self.values.reshape(self.n, -1)
        for k in range(pts.shape[0]):
            w.writerow([repr(float(pts[k, 0])), repr(float(pts[k, 1]))] + [repr(float(vals[i, k])) for i in range(self.n)])
        return None if handle is not None else buf.getvalue()

    def to_bytes(self) -> bytes:
        """Binary grid record: magic, version, M, n, e1, e2, then little-endian doubles."""
        dom = self.grid.domain
        head = GRID_MAGIC + struct.pack("<III4d", GRID_VERSION, self.M, self.n, *dom.e1, *dom.e2)
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, dual_cutoff: int = 64) -> "TorusField":
        if data[:4] != GRID_MAGIC:
            raise ValidationError("not a torus grid record")
        version, M, n, a, b, c, d = struct.unpack("<III4d", data[4:4 + 44])
        if version != GRID_VERSION:
            raise ValidationError(f"unsupported grid record version {version}")
        payload = np.frombuffer(data[48:], dtype="<f8")
        if payload.size != n * M * M:
            raise ValidationError("grid record payload has the wrong length")
        grid = TorusGrid(TorusDomain((a, b), (c, d), dual_cutoff=dual_cutoff), M)
        return cls(grid, payload.reshape(n, M, M).astype(float))


def check_resolution(config: BubbleConfiguration, grid: TorusGrid,
                     min_points: float = MIN_POINTS_PER_SCALE) -> float:
    """Smallest ``eps_t / h``; raises :class:`GridTooCoarse` below ``min_points``."""
    ratio = float(np.min(config.eps_t) / grid.spacing)
    if ratio < min_points:
        raise GridTooCoarse(
            f"grid spacing {grid.spacing:.3e} resolves eps_t = {np.min(config.eps_t):.3e} "
            f"with only {ratio:.2f} points (need {min_points})")
    return ratio


def assemble(profile: RadialProfile, config: BubbleConfiguration, M: int, with_laplacian: bool = False,
             min_points: float = MIN_POINTS_PER_SCALE) -> TorusField:
    """Sample ``U_i = sum_t [chi_t W*_{i,t} + (1 - chi_t) W**_{i,t}]`` on the ``M x M`` grid.

    With ``with_laplacian`` the exact ``-Lap U_i`` (from the profile equation
    and the product rule across the cutoff band) is stored alongside.
    """
    grid = TorusGrid(config.domain, M)
    check_resolution(config, grid, min_points)
    pts = grid.points()
    radii, gammas = [], []
    for t in range(config.N):
        _, gam = config.green.grid_green(M, config.centers[t])
        d = config.domain.wrap(pts - config.centers[t])
        radii.append(np.linalg.norm(d, axis=-1).ravel())
        gammas.append((gam - config.green.robin_constant).ravel())
    U, lap = _compose(profile, config, radii, gammas, with_laplacian)
    shape = (config.n, M, M)
    return TorusField(grid, U.reshape(shape), None if lap is None else lap.reshape(shape))


def evaluate_points(profile: RadialProfile, config: BubbleConfiguration, x, with_laplacian: bool = False):
    """``U`` (and optionally ``-Lap U``) at arbitrary points; shape (n, ...)."""
    x = check_point_cloud(x, "x")
    shape = x.shape[:-1]
    flat = x.reshape(-1, 2)
    radii, gammas = [], []
    for t in range(config.N):
        radii.append(_radial(config, t, flat))
        gammas.append(config.green.gamma(flat, config.centers[t]) - config.green.robin_constant)
    U, lap = _compose(profile, config, radii, gammas, with_laplacian)
    U = U.reshape((config.n,) + shape)
    if with_laplacian:
        return U, lap.reshape((config.n,) + shape)
    return U


def coefficient_values(model: ReducedEnergyModel, grid: TorusGrid) -> np.ndarray:
    """``h_i`` on the grid; shape (n, M, M)."""
    pts = grid.points()
    return np.stack([c.value(model.domain, pts) for c in model.h])


def mass_integral(field: TorusField, model: ReducedEnergyModel, h_values=None) -> np.ndarray:
    """``int h_i e^{U_i}`` by grid quadrature."""
    h = coefficient_values(model, field.grid) if h_values is None else h_values
    top = field.values.max(axis=(-2, -1), keepdims=True)
    return field.grid.integrate(h * np.exp(field.values - top)) * np.exp(top[..., 0, 0])


def mass_expansion(model: ReducedEnergyModel, config: BubbleConfiguration, profile: RadialProfile) -> np.ndarray:
    """Leading-order closed form of ``int h_i e^{U_i}``.

    ``(rho*_i/N) sum_l h_i(p_l) e^{(N-1) I_i} exp(sum_{s != l} 2 pi m_i [G(p_l, p_s) - gamma(p_s, p_s)])
    prod_{s != l} eps_s^{m_i - 2}``.
    """
    N, n = config.N, config.n
    g = config.green
    m = config.m_star
    out = np.zeros(n)
    for l in range(N):
        hl = np.array([c.value(model.domain, config.centers[l]) for c in model.h])
        inter = 0.0
        scale = np.ones(n)
        for s in range(N):
            if s == l:
                continue
            inter += float(g.G(config.centers[l], config.centers[s])) - g.robin_constant
            scale *= config.eps_t[s] ** (m - 2.0)
        out += hl * np.exp((N - 1) * profile.I + 2 * np.pi * m * inter) * scale
    return model.rho_star / N * out


def residual(field: TorusField, config: BubbleConfiguration, model: ReducedEnergyModel,
             method: str = "spectral", rho=None) -> TorusField:
    """``S_i(U) = -Lap(sum_j a^{ij} U_j) - rho_i (h_i e^{U_i} / int h_i e^{U_i} - 1)`` on the grid.

    ``method='spectral'`` differentiates the samples by FFT; ``'analytic'``
    uses the exact Laplacian stored by :func:`assemble`.
    """
    if method == "spectral":
        negl = field.grid.neg_laplacian(field.values)
    elif method == "analytic":
        if field.neg_laplacian is None:
            raise ValidationError("field was assembled without its Laplacian")
        negl = field.neg_laplacian
    else:
        raise ValidationError("method must be 'spectral' or 'analytic'")
    rho = config.rho if rho is None else np.asarray(rho, dtype=float)
    inv = np.linalg.inv(config.A)
    h = coefficient_values(model, field.grid)
    top = field.values.max(axis=(-2, -1), keepdims=True)
    e = h * np.exp(field.values - top)
    dens = e / field.grid.integrate(e)[:, None, None]
    S = np.einsum("ij,jab->iab", inv, negl) - rho[:, None, None] * (dens - 1.0)
    return TorusField(field.grid, S)


class ApproximateSolution(BaseEstimator, TransformerMixin):
    """Transformer mapping points of the torus to ``U_eps`` values.

    Parameters
    ----------
    profile : RadialProfile
    config : BubbleConfiguration

    ``transform(X)`` returns an array of shape (len(X), n).
    """

    def __init__(self, profile=None, config=None):
        self.profile = profile
        self.config = config

    def fit(self, X=None, y=None):
        if not isinstance(self.profile, RadialProfile) or not isinstance(self.config, BubbleConfiguration):
            raise ValidationError("profile and config must be set")
        if self.profile.n != self.config.n:
            raise ValidationError("profile and configuration have different component counts")
        self.n_features_out_ = self.config.n
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_out_")
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        return evaluate_points(self.profile, self.config, X).T

    def neg_laplacian(self, X):
        """Exact ``-Lap U_i`` at points; shape (len(X), n)."""
        check_is_fitted(self, "n_features_out_")
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        return evaluate_points(self.profile, self.config, X, with_laplacian=True)[1].T

    def assemble(self, M: int, with_laplacian: bool = False) -> TorusField:
        check_is_fitted(self, "n_features_out_")
        return assemble(self.profile, self.config, M, with_laplacian=with_laplacian)
