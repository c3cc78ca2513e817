"""Heights ``H_it``, the reduced energy of the centers, and its critical points.

The per-center balance equation is

    sum_i rho_i [grad ln h_i(p_t) + 2 pi m_i grad_1 Gt_t(p_t; p)] = 0,

with ``Gt_t(x; p) = gamma(x, p_t) + sum_{s != t} G(x, p_s)``.  Its left side is
the gradient of

    Fbal(p) = sum_t sum_i rho_i [ln h_i(p_t) + pi m_i Gt_t(p_t; p)],

because each pair interaction appears twice in the double sum.  The functional
``F`` with ``2 pi m_i`` (see :func:`reduced_energy`) has the same critical
points when ``N = 1`` or when all ``h_i`` are constant, but not in general;
critical points are therefore searched for the balance equation itself, whose
Jacobian is the symmetric Hessian of ``Fbal``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .coefficients import CoefficientFunction
from .exceptions import (
    CollisionDuringIteration,
    Degenerate,
    DegenerateExponent,
    NotConverged,
    SingularPoint,
    ValidationError,
)
from .limit_profile import as_coupling, check_masses, lambda_IN
from .torus_green import GreenEvaluator
from .validation import check_points, check_vector


class ReducedEnergyModel:
    """Data entering the reduced problem for ``N`` bubbles.

    Parameters
    ----------
    A : CouplingMatrix or array_like
    green : GreenEvaluator
    h : sequence of CoefficientFunction
        One positive coefficient per component.
    rho_star : array_like
        Parameter vector on the hypersurface ``Lambda_{I,N} = 0``.
    N : int
        Number of bubbles.
    """

    def __init__(self, A, green: GreenEvaluator, h, rho_star, N: int):
        self.A = as_coupling(A)
        if not isinstance(green, GreenEvaluator):
            raise ValidationError("green must be a GreenEvaluator")
        self.green = green
        self.domain = green.domain
        n = self.A.n
        h = list(h)
        if len(h) != n or not all(isinstance(c, CoefficientFunction) for c in h):
            raise ValidationError(f"expected {n} CoefficientFunction objects")
        for c in h:
            c.check_positive(self.domain)
        self.h = h
        if int(N) != N or N < 1:
            raise ValidationError("N must be a positive integer")
        self.N = int(N)
        self.rho_star = check_vector(rho_star, "rho_star", n, positive=True)
        self.sigma = self.rho_star / (2 * np.pi * self.N)
        lam = lambda_IN(self.A, self.rho_star, self.N)
        if abs(lam) > 1e-10 * max(1.0, 4.0 * self.sigma.sum()):
            raise ValidationError(f"rho_star is off the hypersurface (Lambda = {lam:.3e})")
        check_masses(self.A, self.sigma, tol=1e-10)
        self.m_star = self.A.A @ self.sigma

    @property
    def n(self) -> int:
        return self.A.n

    @property
    def translation_invariant(self) -> bool:
        return all(c.is_constant for c in self.h)

    def log_h(self, x):
        """``ln h_i(x)``; shape (n, ...)."""
        return np.stack([c.log(self.domain, x) for c in self.h])

    def log_h_derivatives(self, x):
        out = [c.log_derivatives(self.domain, x) for c in self.h]
        return (np.stack([o[0] for o in out]), np.stack([o[1] for o in out]), np.stack([o[2] for o in out]))

    def check_centers(self, centers) -> np.ndarray:
        centers = check_points(centers, "centers")
        if centers.shape[0] != self.N:
            raise ValidationError(f"expected {self.N} centers, got {centers.shape[0]}")
        for a, b in itertools.combinations(range(self.N), 2):
            if self.domain.distance(centers[a], centers[b]) < 1e-9:
                raise SingularPoint(f"centers {a} and {b} coincide")
        return centers


def _pair_sum(model, centers, what):
    """``sum_{s != t}`` of a Green quantity at ``p_t - p_s`` for each ``t``."""
    N = centers.shape[0]
    g = model.green
    if what == "G":
        out = np.zeros(N)
    elif what == "grad":
        out = np.zeros((N, 2))
    for t in range(N):
        for s in range(N):
            if s == t:
                continue
            if what == "G":
                out[t] += g.G(centers[t], centers[s])
            else:
                out[t] += g.grad_G(centers[t], centers[s])
    return out


def g_tilde_at_centers(model: ReducedEnergyModel, centers) -> np.ndarray:
    """``Gt_t(p_t; p)`` for every ``t``."""
    centers = model.check_centers(centers)
    return model.green.robin_constant + _pair_sum(model, centers, "G")


def h_table(model: ReducedEnergyModel, centers) -> np.ndarray:
    """Heights ``H_it = 2 pi m_i/(m_i - 2) Gt_t(p_t; p) + ln h_i(p_t)/(m_i - 2)``; shape (n, N)."""
    centers = model.check_centers(centers)
    m = model.m_star
    if np.any(m <= 2.0 + 1e-10):
        raise DegenerateExponent("every exponent must exceed 2")
    gt = g_tilde_at_centers(model, centers)
    lnh = model.log_h(centers)
    return (2 * np.pi * m / (m - 2.0))[:, None] * gt[None, :] + lnh / (m - 2.0)[:, None]


def compat_residual(H) -> float:
    """``max |(H_it - H_is) - (H_jt - H_js)|`` over all index pairs."""
    H = np.asarray(H, dtype=float)
    diff = H[:, :, None] - H[:, None, :]
    return float(np.max(np.abs(diff[:, None] - diff[None, :]))) if H.size else 0.0


def reduced_energy(model: ReducedEnergyModel, centers) -> float:
    """``F(p) = sum_t sum_i [ln h_i(p_t) + 2 pi m_i Gt_t(p_t; p)] rho_i``."""
    centers = model.check_centers(centers)
    gt = g_tilde_at_centers(model, centers)
    lnh = model.log_h(centers)
    rho, m = model.rho_star, model.m_star
    return float(np.sum(rho[:, None] * (lnh + 2 * np.pi * m[:, None] * gt[None, :])))


def reduced_energy_gradient(model: ReducedEnergyModel, centers) -> np.ndarray:
    """Analytic gradient of :func:`reduced_energy`; shape (N, 2)."""
    centers = model.check_centers(centers)
    _, dlnh, _ = model.log_h_derivatives(centers)
    rho, m = model.rho_star, model.m_star
    weight = float(np.sum(rho * m))
    return np.einsum("i,ita->ta", rho, dlnh) + 4 * np.pi * weight * _pair_sum(model, centers, "grad")


def se1_residual(model: ReducedEnergyModel, centers) -> np.ndarray:
    """Per-center balance ``sum_i rho_i [grad ln h_i + 2 pi m_i grad_1 Gt_t]``; shape (N, 2)."""
    centers = model.check_centers(centers)
    _, dlnh, _ = model.log_h_derivatives(centers)
    rho, m = model.rho_star, model.m_star
    # grad_1 gamma(p, p) vanishes: gamma depends on x - p and is even
    weight = float(np.sum(rho * m))
    return np.einsum("i,ita->ta", rho, dlnh) + 2 * np.pi * weight * _pair_sum(model, centers, "grad")


def se1_jacobian(model: ReducedEnergyModel, centers) -> np.ndarray:
    """Jacobian of :func:`se1_residual` in the flattened center coordinates; shape (2N, 2N)."""
    centers = model.check_centers(centers)
    N = centers.shape[0]
    _, _, hlnh = model.log_h_derivatives(centers)
    rho, m = model.rho_star, model.m_star
    weight = 2 * np.pi * float(np.sum(rho * m))
    J = np.zeros((2 * N, 2 * N))
    for t in range(N):
        J[2 * t:2 * t + 2, 2 * t:2 * t + 2] += np.einsum("i,iab->ab", rho, hlnh[:, t])
        for s in range(N):
            if s == t:
                continue
            Hg = model.green.hess_G(centers[t], centers[s])
            J[2 * t:2 * t + 2, 2 * t:2 * t + 2] += weight * Hg
            J[2 * t:2 * t + 2, 2 * s:2 * s + 2] -= weight * Hg
    return 0.5 * (J + J.T)


@dataclass
class CriticalConfiguration:
    """Certified critical configuration of the balance equation.

    Attributes
    ----------
    centers : ndarray (N, 2)
    gradient_norm : float
        Euclidean norm of the balance residual.
    hessian_eigenvalues : ndarray (2N,)
    certified_eigenvalues : ndarray
        Eigenvalues used for the nondegeneracy test; the two translation
        directions are removed when the model is translation invariant.
    symmetry_reduced : bool
    H : ndarray (n, N)
    compat_residual : float
    se1 : ndarray (N, 2)
    iterations : int
    """

    centers: np.ndarray
    gradient_norm: float
    hessian_eigenvalues: np.ndarray
    certified_eigenvalues: np.ndarray
    symmetry_reduced: bool
    H: np.ndarray
    compat_residual: float
    se1: np.ndarray
    iterations: int = 0
    energy: float = field(default=float("nan"))

    @property
    def N(self) -> int:
        return self.centers.shape[0]

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "gradient_norm": self.gradient_norm,
            "hessian_eigenvalues": self.hessian_eigenvalues.tolist(),
            "certified_eigenvalues": self.certified_eigenvalues.tolist(),
            "symmetry_reduced": self.symmetry_reduced,
            "H": self.H.tolist(),
            "compat_residual": self.compat_residual,
            "se1": self.se1.tolist(),
            "iterations": self.iterations,
            "energy": self.energy,
        }


def _min_separation(domain, x):
    N = x.shape[0]
    if N < 2:
        return np.inf
    return min(domain.distance(x[a], x[b]) for a, b in itertools.combinations(range(N), 2))


def certify(model: ReducedEnergyModel, centers, iterations: int = 0, eig_tol: float = 1e-8,
            raise_degenerate: bool = True) -> CriticalConfiguration:
    """Evaluate residual, Hessian spectrum, heights and compatibility at ``centers``."""
    centers = model.check_centers(centers)
    centers = model.domain.canonical(centers)
    N = centers.shape[0]
    F = se1_residual(model, centers)
    J = se1_jacobian(model, centers)
    evals = np.linalg.eigvalsh(J)
    reduced = model.translation_invariant
    if reduced:
        T = np.zeros((2 * N, 2))
        T[0::2, 0] = 1.0
        T[1::2, 1] = 1.0
        Q, _ = np.linalg.qr(np.hstack([T, np.eye(2 * N)]))
        P = Q[:, 2:2 * N]
        cert = np.linalg.eigvalsh(P.T @ J @ P) if N > 1 else np.zeros(0)
    else:
        cert = evals
    try:
        H = h_table(model, centers)
        compat = compat_residual(H)
    except DegenerateExponent:
        H = np.full((model.n, N), np.nan)
        compat = float("nan")
    config = CriticalConfiguration(
        centers=centers, gradient_norm=float(np.linalg.norm(F)), hessian_eigenvalues=evals,
        certified_eigenvalues=cert, symmetry_reduced=reduced, H=H, compat_residual=compat,
        se1=F, iterations=iterations, energy=reduced_energy(model, centers))
    if raise_degenerate:
        scale = float(np.max(np.abs(evals))) if evals.size else 0.0
        if cert.size == 0 or scale == 0.0 or np.min(np.abs(cert)) <= eig_tol * scale:
            raise Degenerate("critical point is degenerate (near-zero Hessian eigenvalue)", config)
    return config


def find_critical_point(model: ReducedEnergyModel, initial_centers, max_iter: int = 50, tol: float = 1e-10,
                        collision_distance: float = 0.05, max_halvings: int = 30,
                        eig_tol: float = 1e-8) -> CriticalConfiguration:
    """Damped Newton iteration on the balance equation followed by certification.

    Parameters
    ----------
    model : ReducedEnergyModel
    initial_centers : array_like (N, 2)
    max_iter : int
    tol : float
        Target Euclidean norm of the balance residual.
    collision_distance : float
        Smallest torus distance between centers tolerated during the iteration.
    max_halvings : int
        Step halvings allowed per iteration.
    eig_tol : float
        Relative threshold on Hessian eigenvalues for nondegeneracy.

    Raises
    ------
    NotConverged, CollisionDuringIteration, Degenerate
    """
    x = model.check_centers(initial_centers).copy()
    N = x.shape[0]
    F = se1_residual(model, x)
    norm = np.linalg.norm(F)
    it = 0
    while norm >= tol:
        if it >= max_iter:
            raise NotConverged(f"balance residual {norm:.3e} after {max_iter} iterations")
        it += 1
        J = se1_jacobian(model, x)
        step, *_ = np.linalg.lstsq(J, -F.ravel(), rcond=1e-12)
        step = step.reshape(N, 2)
        lam = 1.0
        collided = False
        for _ in range(max_halvings + 1):
            trial = x + lam * step
            if _min_separation(model.domain, trial) < collision_distance:
                collided = True
            else:
                Ft = se1_residual(model, trial)
                nt = np.linalg.norm(Ft)
                if nt < norm:
                    break
            lam *= 0.5
        else:
            if collided:
                raise CollisionDuringIteration("centers approached each other below the collision distance")
            if norm < 1e3 * tol:
                break
            raise NotConverged(f"damped Newton step failed to decrease the residual ({norm:.3e})")
        x, F, norm = trial, Ft, nt
    return certify(model, x, iterations=it, eig_tol=eig_tol)


class CriticalPointFinder(BaseEstimator):
    """Estimator interface to :func:`find_critical_point`.

    Parameters
    ----------
    model : ReducedEnergyModel
    max_iter, tol, collision_distance, eig_tol
        Passed through.

    Attributes
    ----------
    configuration_ : CriticalConfiguration
    centers_ : ndarray (N, 2)
    """

    def __init__(self, model=None, max_iter: int = 50, tol: float = 1e-10,
                 collision_distance: float = 0.05, eig_tol: float = 1e-8):
        self.model = model
        self.max_iter = max_iter
        self.tol = tol
        self.collision_distance = collision_distance
        self.eig_tol = eig_tol

    def fit(self, X, y=None):
        """Search from the initial centers ``X`` of shape (N, 2)."""
        if not isinstance(self.model, ReducedEnergyModel):
            raise ValidationError("model must be a ReducedEnergyModel")
        self.configuration_ = find_critical_point(
            self.model, X, max_iter=self.max_iter, tol=self.tol,
            collision_distance=self.collision_distance, eig_tol=self.eig_tol)
        self.centers_ = self.configuration_.centers
        return self
