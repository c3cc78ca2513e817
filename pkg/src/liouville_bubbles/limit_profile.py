"""Radial entire solutions of the limit system ``-Lap v_i = sum_j a_ij exp(v_j)``.

The radial system is integrated in the logarithmic variable ``s = ln r``,
where it becomes ``w'' = -exp(2 s) A exp(w)``.  Writing ``M_j(r)`` for the mass
``int_0^r exp(v_j) rho d rho`` one has ``r v_i'(r) = -sum_j a_ij M_j(r)``, so the
state is ``(w, M)`` and the total masses are read off at the end of the
integration plus a power-law tail estimate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import BPoly
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    AsymptoticsMismatch,
    InvalidCouplingMatrix,
    MassInfeasible,
    ShootingDiverged,
    ValidationError,
)
from .validation import check_vector

CRITICAL_TOL = 1e-8
_R_START = 1e-4
_DS = 0.02
_S_CAP = 700.0


class CouplingMatrix:
    """Symmetric, nonnegative, invertible, irreducible coupling matrix.

    Parameters
    ----------
    A : array_like of shape (n, n)

    Raises
    ------
    InvalidCouplingMatrix
        If any of the four structural conditions fails.
    """

    def __init__(self, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidCouplingMatrix("coupling matrix must be square")
        if not np.all(np.isfinite(A)):
            raise InvalidCouplingMatrix("coupling matrix must be finite")
        scale = max(float(np.max(np.abs(A))), 1e-300)
        if np.max(np.abs(A - A.T)) > 1e-12 * scale:
            raise InvalidCouplingMatrix("coupling matrix must be symmetric")
        if np.any(A < 0):
            raise InvalidCouplingMatrix("coupling matrix must be entrywise nonnegative")
        n = A.shape[0]
        ncomp, _ = connected_components(A > 0, directed=False)
        if n > 1 and ncomp != 1:
            raise InvalidCouplingMatrix("coupling matrix must be irreducible")
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e12:
            raise InvalidCouplingMatrix(f"coupling matrix is not invertible (condition number {cond:.3g})")
        self.A = 0.5 * (A + A.T)
        self.inverse = np.linalg.inv(self.A)
        if np.max(np.abs(self.A @ self.inverse - np.eye(n))) > 1e-12 * max(1.0, cond):
            raise InvalidCouplingMatrix("inverse failed the identity check")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def __repr__(self):
        return f"CouplingMatrix({self.A.tolist()})"


def as_coupling(A) -> CouplingMatrix:
    return A if isinstance(A, CouplingMatrix) else CouplingMatrix(A)


# ---------------------------------------------------------------------------
# hypersurface algebra


def lambda_subset(A, sigma, subset) -> float:
    """``Lambda_J(sigma) = 4 sum_J sigma_i - sum_{J x J} a_ij sigma_i sigma_j``."""
    A = as_coupling(A).A
    idx = np.asarray(list(subset), dtype=int)
    s = np.asarray(sigma, dtype=float)[idx]
    return float(4.0 * s.sum() - s @ A[np.ix_(idx, idx)] @ s)


def lambda_IN(A, rho, N: int) -> float:
    """``Lambda_{I,N}(rho)`` with ``sigma = rho / (2 pi N)``."""
    A = as_coupling(A)
    rho = check_vector(rho, "rho", A.n, positive=True)
    if int(N) < 1:
        raise ValidationError("N must be a positive integer")
    s = rho / (2 * np.pi * N)
    return float(4.0 * s.sum() - s @ A.A @ s)


def lambda_IN_gradient(A, rho, N: int) -> np.ndarray:
    """Gradient of :func:`lambda_IN` with respect to ``rho``."""
    A = as_coupling(A)
    rho = check_vector(rho, "rho", A.n, positive=True)
    s = rho / (2 * np.pi * N)
    return (4.0 - 2.0 * A.A @ s) / (2 * np.pi * N)


def sigma_on_ray(A, direction) -> np.ndarray:
    """Intersection of the ray ``s * direction`` (``s > 0``) with ``Lambda_I = 0``."""
    A = as_coupling(A)
    d = check_vector(direction, "direction", A.n, positive=True)
    return d * (4.0 * d.sum() / (d @ A.A @ d))


def check_masses(A, sigma, tol: float = 1e-8) -> np.ndarray:
    """Validate ``Lambda_I(sigma) = 0`` and ``Lambda_J(sigma) > 0`` for proper subsets."""
    A = as_coupling(A)
    sigma = check_vector(sigma, "sigma", A.n)
    if np.any(sigma <= 0):
        raise MassInfeasible("masses must be positive")
    n = A.n
    full = lambda_subset(A, sigma, range(n))
    if abs(full) > tol * max(1.0, 4.0 * sigma.sum()):
        raise MassInfeasible(f"Lambda_I(sigma) = {full:.3e} is not zero")
    for size in range(1, n):
        for J in itertools.combinations(range(n), size):
            if lambda_subset(A, sigma, J) <= 0:
                raise MassInfeasible(f"Lambda_J(sigma) <= 0 for J = {J}")
    return sigma


# ---------------------------------------------------------------------------
# ODE integration


def _rhs(s, y, A, n):
    w = y[:n]
    M = y[n:]
    e = np.exp(w + 2.0 * s)
    return np.concatenate([-A @ M, e])


def _series_coefficients(A, c):
    """Coefficients of ``v = c + b r^2 + d r^4 + f r^6 + O(r^8)`` near the origin."""
    ec = np.exp(c)
    b = -(A @ ec) / 4.0
    d = -(A @ (ec * b)) / 16.0
    f = -(A @ (ec * (d + 0.5 * b**2))) / 36.0
    return b, d, f


def _initial_state(A, c, r0):
    ec = np.exp(c)
    b, d, f = _series_coefficients(A, c)
    w0 = c + b * r0**2 + d * r0**4 + f * r0**6
    M0 = ec * (r0**2 / 2.0 + b * r0**4 / 4.0 + (d + 0.5 * b**2) * r0**6 / 6.0)
    return np.concatenate([w0, M0])


def _tail(w_end, s_end, slope):
    """Mass beyond ``r = e^s`` for a local power law ``exp(v) ~ r^-slope``."""
    return np.exp(w_end + 2.0 * s_end) / (slope - 2.0)


def _integrate(A, c, s_min_end=None, corr_tol=1e-8, dense=False, rtol=1e-12):
    """Integrate from the series start until the masses have converged.

    Returns the ODE solution pieces and final state.
    """
    n = A.shape[0]
    r0 = _R_START * np.exp(-0.5 * max(float(np.max(c)), 0.0))
    s = np.log(r0)
    y = _initial_state(A, c, r0)
    ts, ys = [np.array([s])], [y[:, None]]
    chunk = 10.0
    target = s_min_end if s_min_end is not None else s + 20.0
    while True:
        s_next = s + chunk
        t_eval = None
        if dense:
            npts = int(np.ceil(chunk / _DS))
            t_eval = np.linspace(s, s_next, npts + 1)[1:]
        sol = solve_ivp(_rhs, (s, s_next), y, method="DOP853", rtol=rtol, atol=1e-14,
                        args=(A, n), t_eval=t_eval)
        if not sol.success:
            raise ShootingDiverged(f"radial integration failed: {sol.message}")
        y = sol.y[:, -1]
        s = s_next
        if dense:
            ts.append(sol.t)
            ys.append(sol.y)
        slopes = A @ y[n:]
        if s >= target and np.all(slopes > 2.0 + 1e-6):
            # size of the first asymptotic correction at the current radius
            I_est = y[:n] + slopes * s
            corr = np.abs(A @ (np.exp(I_est) / (slopes - 2.0) ** 2 * np.exp((2.0 - slopes) * s)))
            if np.max(corr) < corr_tol:
                break
        if s > _S_CAP:
            raise ShootingDiverged("profile did not reach its asymptotic regime")
    if dense:
        return np.concatenate(ts), np.concatenate(ys, axis=1)
    return s, y


def _masses_from_state(A, s, y):
    n = A.shape[0]
    w, M = y[:n], y[n:]
    slopes = A @ M
    return M + _tail(w, s, slopes)


def masses_for_initial_values(A, c) -> np.ndarray:
    """Total masses ``(1/2pi) int exp(v_i)`` of the solution with ``v(0) = c``."""
    A = as_coupling(A).A
    s, y = _integrate(A, np.asarray(c, dtype=float), corr_tol=1e-10)
    return _masses_from_state(A, s, y)


# ---------------------------------------------------------------------------
# profile object


@dataclass
class RadialProfile:
    """Radial solution of the limit system with its asymptotic constants.

    Attributes
    ----------
    A : ndarray (n, n)
    r : ndarray
        Log-spaced radii.
    v, dv : ndarray (n, len(r))
        Values and radial derivatives.
    sigma : ndarray
        Masses ``(1/2pi) int exp(v_i)``.
    m_star : ndarray
        Algebraic exponents ``A sigma``.
    I : ndarray
        Asymptotic intercepts.
    initial_values : ndarray
        ``v(0)``; its maximum is the dilation gauge.
    """

    A: np.ndarray
    r: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    sigma: np.ndarray
    m_star: np.ndarray
    I: np.ndarray
    initial_values: np.ndarray
    cumulative_mass: np.ndarray = field(default=None, repr=False)
    slope_fit: np.ndarray = field(default=None)
    _splines: list = field(default=None, repr=False)
    _mu_splines: list = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m_hat(self) -> float:
        return float(np.min(self.m_star))

    @property
    def is_critical(self) -> bool:
        """True when the minimal exponent equals 4 within the classification tolerance."""
        return bool(np.all(np.abs(self.m_star - 4.0) < CRITICAL_TOL))

    @property
    def I_hat(self) -> np.ndarray:
        """Indices attaining the minimal exponent."""
        if self.is_critical:
            return np.arange(self.n)
        return np.flatnonzero(self.m_star - self.m_hat < CRITICAL_TOL)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def _build(self):
        # quintic Hermite pieces in s = ln r: w = v with w' = r v', w'' = -r^2 A exp(v);
        # mu = M / r^2 with mu' = exp(v) - 2 mu, which keeps v' = -r A mu accurate near 0
        s = np.log(self.r)
        ev = np.exp(self.v)
        w1 = self.r * self.dv
        w2 = -(self.A @ ev) * self.r**2
        mu = self.cumulative_mass / self.r**2
        mu1 = ev - 2 * mu
        mu2 = ev * w1 - 2 * mu1
        self._splines = [
            BPoly.from_derivatives(s, np.stack([self.v[i], w1[i], w2[i]], axis=1))
            for i in range(self.n)
        ]
        self._mu_splines = [
            BPoly.from_derivatives(s, np.stack([mu[i], mu1[i], mu2[i]], axis=1))
            for i in range(self.n)
        ]

    def _series(self, r):
        c = self.initial_values
        b, d, f = _series_coefficients(self.A, c)
        r = np.asarray(r, dtype=float)
        v = c[:, None] + np.outer(b, r**2) + np.outer(d, r**4) + np.outer(f, r**6)
        dv = np.outer(2 * b, r) + np.outer(4 * d, r**3) + np.outer(6 * f, r**5)
        return v, dv

    def _asymptotic(self, r):
        r = np.asarray(r, dtype=float)
        coef = self.A * (np.exp(self.I) / (self.m_star - 2.0) ** 2)[None, :]
        pw = r[None, :] ** (2.0 - self.m_star[:, None])
        v = -np.outer(self.m_star, np.log(r)) + self.I[:, None] - coef @ pw
        dv = (-self.m_star[:, None] - coef @ ((2.0 - self.m_star[:, None]) * pw)) / r[None, :]
        return v, dv

    def _evaluate_all(self, r):
        if self._splines is None:
            self._build()
        r = np.abs(np.asarray(r, dtype=float))
        shape = r.shape
        flat = r.ravel()
        v = np.empty((self.n, flat.size))
        mu = np.empty((self.n, flat.size))
        lo = flat < 20.0 * self.r[0]
        hi = flat > self.r[-1]
        mid = ~(lo | hi)
        if np.any(lo):
            c = self.initial_values
            b, d, f = _series_coefficients(self.A, c)
            rl = flat[lo]
            v[:, lo] = c[:, None] + np.outer(b, rl**2) + np.outer(d, rl**4) + np.outer(f, rl**6)
            ec = np.exp(c)
            mu[:, lo] = ec[:, None] * (0.5 + np.outer(b, rl**2) / 4.0 + np.outer(d + 0.5 * b**2, rl**4) / 6.0)
        if np.any(hi):
            rh = flat[hi]
            v[:, hi], dvh = self._asymptotic(rh)
            mu[:, hi] = -np.linalg.solve(self.A, dvh) / rh
        if np.any(mid):
            sm = np.log(flat[mid])
            for i in range(self.n):
                v[i, mid] = self._splines[i](sm)
                mu[i, mid] = self._mu_splines[i](sm)
        Amu = self.A @ mu
        dv = -flat * Amu
        d2v = Amu - self.A @ np.exp(v)
        return (v.reshape((self.n,) + shape), dv.reshape((self.n,) + shape),
                d2v.reshape((self.n,) + shape))

    def evaluate(self, r, derivative: bool = False):
        """Profile values (and optionally ``v'``) at radii ``r``; shape (n, *r.shape)."""
        v, dv, _ = self._evaluate_all(r)
        return (v, dv) if derivative else v

    def second_derivative(self, r):
        """``v''`` at radii ``r``; shape (n, *r.shape)."""
        return self._evaluate_all(r)[2]

    def laplacian(self, r):
        """Planar Laplacian ``v'' + v'/r``, equal to ``-A exp(v)``; shape (n, *r.shape)."""
        v = self.evaluate(r)
        return -np.einsum("ij,j...->i...", self.A, np.exp(v))

    def mass_integral(self, weight=None) -> np.ndarray:
        """``int_{R^2} exp(v_i) w(|x|) dx`` by Simpson's rule in ``ln r`` plus end corrections.

        ``weight`` maps radii of shape (k,) to values of shape (n, k) or (k,).
        """
        def wt(rr):
            if weight is None:
                return np.ones((self.n, rr.size))
            return np.broadcast_to(weight(rr), (self.n, rr.size))

        r = self.r
        s = np.log(r)
        integrand = 2 * np.pi * np.exp(self.v) * wt(r) * r**2
        core = simpson(integrand, x=s, axis=1)
        head = np.pi * r[0] ** 2 * np.exp(self.initial_values) * wt(np.array([0.5 * r[0]]))[:, 0]
        tail = integrand[:, -1] / (self.m_star - 2.0)
        return core + head + tail


def _asymptotic_constants(A, r, v, dv):
    """Slope fit on ``[r_max/10, r_max]`` and intercepts with the first correction term."""
    n = A.shape[0]
    R = r[-1]
    sel = r >= R / 10.0
    X = np.vstack([np.log(r[sel]), np.ones(sel.sum())]).T
    slopes = np.empty(n)
    for i in range(n):
        coef, *_ = np.linalg.lstsq(X, v[i, sel], rcond=None)
        slopes[i] = -coef[0]
    return slopes


def _intercepts(A, m_star, R, vR):
    I = vR + m_star * np.log(R)
    for _ in range(5):
        corr = A @ (np.exp(I) / (m_star - 2.0) ** 2 * R ** (2.0 - m_star))
        I = vR + m_star * np.log(R) + corr
    return I


def integrate_profile(A, initial_values, r_max: float = 1e6) -> RadialProfile:
    """Integrate the radial system from prescribed ``v(0)`` and package the result.

    The masses are whatever the initial values produce; no gauge is imposed.
    """
    A = as_coupling(A).A
    c = np.asarray(initial_values, dtype=float)
    s_end_min = np.log(float(r_max)) + 1e-12
    ts, ys = _integrate(A, c, s_min_end=s_end_min, dense=True)
    n = A.shape[0]
    s_end = ts[-1]
    sigma = _masses_from_state(A, s_end, ys[:, -1])
    r = np.exp(ts)
    v = ys[:n]
    dv = -(A @ ys[n:]) / r
    m_star = A @ sigma
    I = _intercepts(A, m_star, r[-1], v[:, -1])
    slopes = _asymptotic_constants(A, r, v, dv)
    prof = RadialProfile(A=A, r=r, v=v, dv=dv, sigma=sigma, m_star=m_star, I=I,
                         initial_values=c.copy(), cumulative_mass=ys[n:].copy(), slope_fit=slopes)
    return prof


def _shoot(A, sigma, gauge=0.0, max_iter=50, tol=1e-11):
    n = A.shape[0]
    if n == 1:
        return np.full(1, gauge), 0
    c = np.full(n, gauge)

    def resid(cv):
        return masses_for_initial_values(A, cv) - sigma

    F = resid(c)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(F)) < tol * max(1.0, np.max(sigma)):
            return c, it - 1
        J = np.empty((n, n))
        h = 1e-6
        for k in range(n):
            cp = c.copy()
            cp[k] += h
            cm = c.copy()
            cm[k] -= h
            J[:, k] = (resid(cp) - resid(cm)) / (2 * h)
        step, *_ = np.linalg.lstsq(J, -F, rcond=1e-10)
        lam = 1.0
        norm0 = np.linalg.norm(F)
        for _ in range(30):
            trial = c + lam * step
            trial += gauge - np.max(trial)
            try:
                Ft = resid(trial)
            except ShootingDiverged:
                Ft = None
            if Ft is not None and np.linalg.norm(Ft) < norm0:
                break
            lam *= 0.5
        else:
            raise ShootingDiverged("line search failed in the shooting iteration")
        c, F = trial, Ft
    if np.max(np.abs(F)) < tol * max(1.0, np.max(sigma)):
        return c, max_iter
    raise ShootingDiverged(f"shooting did not converge in {max_iter} iterations (residual {np.max(np.abs(F)):.3e})")


def solve_radial(A, sigma, r_max: float = 1e6, max_iter: int = 50, gauge: float = 0.0) -> RadialProfile:
    """Radial solution of the limit system with prescribed masses.

    Parameters
    ----------
    A : CouplingMatrix or array_like
    sigma : array_like
        Target masses on the critical hypersurface.
    r_max : float
        Minimal outer radius of the stored profile (at least 1e4).  The
        integration is extended until the first asymptotic correction is
        below 1e-8.
    max_iter : int
        Newton iterations allowed for the shooting problem.
    gauge : float
        Value of ``max_i v_i(0)``; fixes the dilation freedom.  ``ln 8`` gives
        the standard single-equation bubble ``ln(8 / (1 + r^2)^2)``.

    Returns
    -------
    RadialProfile
    """
    A = as_coupling(A)
    sigma = check_masses(A, sigma)
    if float(r_max) < 1e4:
        raise ValidationError("r_max must be at least 1e4")
    c, _ = _shoot(A.A, sigma, gauge=float(gauge), max_iter=max_iter)
    prof = integrate_profile(A, c, r_max=r_max)
    if np.max(np.abs(prof.sigma - sigma)) > 1e-6:
        raise ShootingDiverged("recomputed masses miss the targets")
    return prof


def extract_asymptotics(profile: RadialProfile, tol: float = 1e-3):
    """Exponents and intercepts of the profile.

    Returns
    -------
    m_star : ndarray
        Algebraic exponents ``A sigma``.
    I : ndarray
        Intercepts including the first correction term.

    Raises
    ------
    AsymptoticsMismatch
        If the log-slope fit disagrees with ``A sigma`` by more than ``tol``.
    """
    m_alg = profile.A @ profile.sigma
    gap = np.max(np.abs(profile.slope_fit - m_alg))
    if gap > tol:
        raise AsymptoticsMismatch(f"slope fit differs from the algebraic exponent by {gap:.3e}")
    return m_alg, profile.I.copy()


@dataclass(frozen=True)
class KernelModes:
    """Translation and dilation modes of the linearized limit system."""

    profile: RadialProfile

    def translation(self, y):
        """``d v_i / d y_j`` at plane points ``y``; shape (2, n, ...)."""
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1)
        _, dv = self.profile.evaluate(r, derivative=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[..., None] > 0, y / r[..., None], 0.0)
        return np.stack([dv * unit[..., 0], dv * unit[..., 1]])

    def dilation(self, r):
        """``r v_i'(r) + 2``; shape (n, ...)."""
        r = np.asarray(r, dtype=float)
        _, dv = self.profile.evaluate(r, derivative=True)
        return r * dv + 2.0


def kernel_modes(profile: RadialProfile) -> KernelModes:
    """Kernel generators of the linearized operator around the profile."""
    return KernelModes(profile)


class LimitProfileSolver(BaseEstimator):
    """Estimator wrapper around :func:`solve_radial`.

    Parameters
    ----------
    r_max : float
    max_iter : int
    gauge : float

    Attributes
    ----------
    profile_ : RadialProfile
    m_star_ : ndarray
    intercepts_ : ndarray
    """

    def __init__(self, r_max: float = 1e6, max_iter: int = 50, gauge: float = 0.0):
        self.r_max = r_max
        self.max_iter = max_iter
        self.gauge = gauge

    def fit(self, A, sigma=None):
        """Solve for the profile; ``sigma`` defaults to the symmetric point on the ray (1,...,1)."""
        A = as_coupling(A)
        if sigma is None:
            sigma = sigma_on_ray(A, np.ones(A.n))
        self.profile_ = solve_radial(A, sigma, r_max=self.r_max, max_iter=self.max_iter, gauge=self.gauge)
        self.m_star_, self.intercepts_ = extract_asymptotics(self.profile_)
        return self

    def predict(self, r):
        """Profile values at radii ``r``; shape (n, len(r))."""
        check_is_fitted(self, "profile_")
        return self.profile_.evaluate(np.asarray(r, dtype=float))
