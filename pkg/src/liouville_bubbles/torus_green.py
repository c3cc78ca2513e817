"""Doubly periodic Green's function on an area-one flat torus.

The Green's function solves ``-Lap G(., p) = delta_p - 1`` with zero mean.  It
is evaluated with an Ewald splitting of the heat-kernel representation

    G(d) = sum_{k != 0} exp(-tau |k|^2) cos(k.d) / |k|^2
           + (1/4pi) sum_L E1(|d + L|^2 / (4 tau)) - tau,

where ``k`` runs over the dual lattice and ``L`` over the lattice.  The
free-plane logarithm sits inside the ``L = 0`` exponential integral, so the
regular part ``gamma = G + ln|d| / (2 pi)`` is obtained by replacing that term
with the entire function ``Ein``; no cancellation of large numbers occurs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import HalfspaceIntersection
from scipy.special import exp1

from .exceptions import CentersTooClose, DomainError, NotConverged, PartitionViolation, SingularPoint, ValidationError
from .validation import check_point, check_point_cloud, check_points

EULER_GAMMA = float(np.euler_gamma)
_SINGULAR_DISTANCE = 1e-9
_MAX_DUAL_CUTOFF = 4096
_CHUNK = 16384


def ein(z):
    """Entire exponential integral ``Ein(z) = int_0^z (1 - e^-t)/t dt`` for ``z >= 0``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 1.0
    zs = z[small]
    term = zs.copy()
    acc = zs.copy()
    for n in range(2, 26):
        term = term * (-zs) / n
        acc = acc + term / n
    out[small] = acc
    zl = z[~small]
    out[~small] = exp1(zl) + EULER_GAMMA + np.log(zl)
    return out


def _one_minus_exp_over(z):
    """``(1 - exp(-z)) / z`` with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=float)
    safe = np.where(z > 0, z, 1.0)
    return np.where(z > 1e-300, -np.expm1(-safe) / safe, 1.0)


def _one_minus_exp_over_prime(z):
    """Derivative of :func:`_one_minus_exp_over`."""
    z = np.asarray(z, dtype=float)
    small = z < 1e-2
    zs = np.where(small, z, 0.0)
    series = -0.5 + zs / 3.0 - zs**2 / 8.0 + zs**3 / 30.0
    zl = np.where(small, 1.0, z)
    return np.where(small, series, (np.exp(-zl) * (1.0 + zl) - 1.0) / zl**2)


def _gauss_reduce(u: np.ndarray, v: np.ndarray):
    u, v = u.copy(), v.copy()
    for _ in range(200):
        if u @ u > v @ v:
            u, v = v, u
        mu = np.rint((u @ v) / (u @ u))
        if mu == 0:
            break
        v = v - mu * u
    if u @ u > v @ v:
        u, v = v, u
    return u, v


class TorusDomain:
    """Flat torus spanned by two lattice generators of unit cell area.

    Parameters
    ----------
    e1, e2 : array_like of shape (2,)
        Lattice generators.  ``|e1 x e2|`` must equal one within 1e-12.
    dual_cutoff : int
        Per-axis truncation index for dual-lattice sums.  Raised automatically
        by evaluators whose tail bound requires more modes.
    """

    def __init__(self, e1=(1.0, 0.0), e2=(0.0, 1.0), dual_cutoff: int = 64):
        e1 = np.asarray(e1, dtype=float)
        e2 = np.asarray(e2, dtype=float)
        if e1.shape != (2,) or e2.shape != (2,) or not (np.all(np.isfinite(e1)) and np.all(np.isfinite(e2))):
            raise DomainError("lattice generators must be finite 2-vectors")
        det = e1[0] * e2[1] - e1[1] * e2[0]
        if abs(det) < 1e-14:
            raise DomainError("lattice generators are linearly dependent")
        if abs(abs(det) - 1.0) > 1e-12:
            raise DomainError(f"torus area must be 1 (|e1 x e2| = {abs(det):.15g})")
        if int(dual_cutoff) < 1:
            raise DomainError("dual_cutoff must be a positive integer")
        self.e1 = e1
        self.e2 = e2
        self.dual_cutoff = int(dual_cutoff)
        self.basis = np.array([e1, e2])
        self.area = abs(det)
        self._inv_basis = np.linalg.inv(self.basis)
        # rows b1, b2 with b_i . e_j = delta_ij
        self.dual = self._inv_basis.T.copy()
        u, v = _gauss_reduce(e1, e2)
        self._reduced = np.array([u, v])
        self._inv_reduced = np.linalg.inv(self._reduced)
        self.shortest_vector = float(np.linalg.norm(u))
        self._offsets = np.array(list(itertools.product((-1, 0, 1), repeat=2)), dtype=float) @ self._reduced
        corners = np.array([[0.5, 0.5], [0.5, -0.5]]) @ self._reduced
        self.circumradius = float(np.max(np.linalg.norm(corners, axis=1)))

    def __repr__(self):
        return f"TorusDomain(e1={self.e1.tolist()}, e2={self.e2.tolist()})"

    # coordinates ---------------------------------------------------------
    def to_frac(self, x):
        return np.asarray(x, dtype=float) @ self._inv_basis

    def from_frac(self, f):
        return np.asarray(f, dtype=float) @ self.basis

    def wrap(self, d):
        """Reduce difference vectors to their nearest representative (shortest image)."""
        d = np.asarray(d, dtype=float)
        f = d @ self._inv_reduced
        base = d - np.rint(f) @ self._reduced
        cand = base[..., None, :] - self._offsets
        idx = np.argmin(np.einsum("...ij,...ij->...i", cand, cand), axis=-1)
        return np.take_along_axis(cand, idx[..., None, None], axis=-2)[..., 0, :]

    def distance(self, x, y):
        """Torus distance between point arrays ``x`` and ``y`` (broadcasting)."""
        return np.linalg.norm(self.wrap(np.asarray(x, float) - np.asarray(y, float)), axis=-1)

    def canonical(self, x):
        """Representative of ``x`` in the fundamental parallelogram ``[0,1)^2`` (fractional)."""
        f = self.to_frac(x)
        return self.from_frac(f - np.floor(f))

    def lattice_vectors(self, radius: float, include_zero: bool = True) -> np.ndarray:
        """All lattice vectors of length at most ``radius``."""
        kmax = int(np.ceil(radius / self.shortest_vector)) + 2
        rng = np.arange(-kmax, kmax + 1)
        mm, nn = np.meshgrid(rng, rng, indexing="ij")
        L = np.stack([mm.ravel(), nn.ravel()], axis=1).astype(float) @ self._reduced
        norms = np.linalg.norm(L, axis=1)
        keep = norms <= radius + 1e-12
        if not include_zero:
            keep &= norms > 0
        L = L[keep]
        order = np.lexsort((L[:, 1], L[:, 0], np.round(np.linalg.norm(L, axis=1), 12)))
        return L[order]

    # grids -----------------------------------------------------------------
    def grid_points(self, M: int) -> np.ndarray:
        """Uniform periodic grid, shape (M, M, 2); index [a, b] is (a/M) e1 + (b/M) e2."""
        f = np.arange(M) / M
        fa, fb = np.meshgrid(f, f, indexing="ij")
        return fa[..., None] * self.e1 + fb[..., None] * self.e2

    def grid_wavevectors(self, M: int) -> np.ndarray:
        """Dual-lattice wave vectors matching ``numpy.fft`` ordering, shape (M, M, 2)."""
        m = np.fft.fftfreq(M, d=1.0 / M)
        mm, nn = np.meshgrid(m, m, indexing="ij")
        return 2.0 * np.pi * (mm[..., None] * self.dual[0] + nn[..., None] * self.dual[1])


def _check_domain(domain) -> TorusDomain:
    if not isinstance(domain, TorusDomain):
        raise ValidationError("expected a TorusDomain")
    return domain


class GreenEvaluator:
    """Evaluator for ``G``, its regular part, gradients and Hessians.

    Parameters
    ----------
    domain : TorusDomain
    tol : float
        Target bound on the truncated tails of both Ewald sums.
    tau : float, optional
        Splitting parameter.  Defaults to ``1/(4 pi)``, which balances the
        number of dual modes and lattice images on a unit-area cell.

    Notes
    -----
    The object is immutable after construction; all methods are pure.
    """

    def __init__(self, domain: TorusDomain, tol: float = 1e-12, tau: float | None = None):
        self.domain = _check_domain(domain)
        self.tol = float(tol)
        self.tau = float(tau) if tau is not None else 1.0 / (4.0 * np.pi)
        self.singular_distance = _SINGULAR_DISTANCE
        # Gaussian tails: (1/4pi) E1(tau k_c^2) and (1/4pi) E1(R_c^2/(4 tau)) bound the truncations
        z = 1.0
        while exp1(z) / (4.0 * np.pi) > 1e-2 * self.tol:
            z += 0.25
        self._z_cut = z
        k_cut = np.sqrt(z / self.tau)
        r_cut = np.sqrt(4.0 * self.tau * z)
        cutoff = self.domain.dual_cutoff
        need = int(np.ceil(k_cut * max(np.linalg.norm(domain.e1), np.linalg.norm(domain.e2)) / (2 * np.pi))) + 1
        while cutoff < need:
            cutoff *= 2
            if cutoff > _MAX_DUAL_CUTOFF:
                raise NotConverged("dual sum tail exceeds tolerance at the maximal cutoff")
        self.dual_cutoff = cutoff
        rng = np.arange(-need, need + 1)
        mm, nn = np.meshgrid(rng, rng, indexing="ij")
        mm, nn = mm.ravel(), nn.ravel()
        half = (mm > 0) | ((mm == 0) & (nn > 0))
        k = 2 * np.pi * (np.outer(mm[half], domain.dual[0]) + np.outer(nn[half], domain.dual[1]))
        k2 = np.einsum("ij,ij->i", k, k)
        keep = k2 <= k_cut**2
        self._k = k[keep]
        k2 = k2[keep]
        self._ck = 2.0 * np.exp(-self.tau * k2) / k2
        self.tail_bound = exp1(self.tau * k_cut**2) / (4 * np.pi)
        self._images = domain.lattice_vectors(r_cut + domain.circumradius, include_zero=False)
        self._robin = None

    # core ------------------------------------------------------------------
    def _series(self, d: np.ndarray, want: tuple[str, ...]) -> dict:
        """Evaluate requested pieces at wrapped differences ``d`` of shape (P, 2)."""
        tau = self.tau
        out = {}
        phase = d @ self._k.T
        if "G" in want or "gamma" in want:
            rec = np.cos(phase) @ self._ck
        if "grad_G" in want or "grad_gamma" in want:
            grad_rec = -(np.sin(phase) * self._ck) @ self._k
        if "hess_G" in want or "hess_gamma" in want:
            hess_rec = -np.einsum("pk,ka,kb->pab", np.cos(phase) * self._ck, self._k, self._k)
        # nonzero lattice images
        y = d[:, None, :] + self._images[None, :, :]
        s = np.einsum("pli,pli->pl", y, y)
        zz = s / (4 * tau)
        active = zz < self._z_cut + 40.0
        if "G" in want or "gamma" in want:
            e = np.zeros_like(zz)
            e[active] = exp1(zz[active])
            img = e.sum(axis=1) / (4 * np.pi)
        if "grad_G" in want or "grad_gamma" in want or "hess_G" in want or "hess_gamma" in want:
            g = np.zeros_like(zz)
            g[active] = np.exp(-zz[active]) / s[active]
        if "grad_G" in want or "grad_gamma" in want:
            grad_img = -np.einsum("pl,pli->pi", g, y) / (2 * np.pi)
        if "hess_G" in want or "hess_gamma" in want:
            gp = np.zeros_like(zz)
            gp[active] = -np.exp(-zz[active]) * (1.0 / (4 * tau * s[active]) + 1.0 / s[active] ** 2)
            hess_img = -(g.sum(axis=1)[:, None, None] * np.eye(2)
                         + 2 * np.einsum("pl,pla,plb->pab", gp, y, y)) / (2 * np.pi)
        # the L = 0 term
        s0 = np.einsum("pi,pi->p", d, d)
        z0 = s0 / (4 * tau)
        if "G" in want:
            with np.errstate(divide="ignore"):
                out["G"] = rec + img + exp1(z0) / (4 * np.pi) - tau
        if "gamma" in want:
            out["gamma"] = rec + img + (-EULER_GAMMA + np.log(4 * tau) + ein(z0)) / (4 * np.pi) - tau
        if "grad_G" in want:
            with np.errstate(divide="ignore", invalid="ignore"):
                g0 = np.exp(-z0) / s0
            out["grad_G"] = grad_rec + grad_img - (g0[:, None] * d) / (2 * np.pi)
        if "grad_gamma" in want:
            phi = _one_minus_exp_over(z0)
            out["grad_gamma"] = grad_rec + grad_img + (phi[:, None] * d) / (8 * np.pi * tau)
        if "hess_G" in want:
            with np.errstate(divide="ignore", invalid="ignore"):
                g0 = np.exp(-z0) / s0
                gp0 = -np.exp(-z0) * (1.0 / (4 * tau * s0) + 1.0 / s0**2)
            out["hess_G"] = hess_rec + hess_img - (
                g0[:, None, None] * np.eye(2) + 2 * gp0[:, None, None] * np.einsum("pa,pb->pab", d, d)
            ) / (2 * np.pi)
        if "hess_gamma" in want:
            phi = _one_minus_exp_over(z0)
            dphi = _one_minus_exp_over_prime(z0)
            out["hess_gamma"] = hess_rec + hess_img + (
                phi[:, None, None] * np.eye(2) + (dphi / (2 * tau))[:, None, None] * np.einsum("pa,pb->pab", d, d)
            ) / (8 * np.pi * tau)
        return out

    def _evaluate(self, x, p, want: tuple[str, ...], singular_ok: bool):
        x = check_point_cloud(x, "x")
        p = check_point_cloud(p, "p")
        d = self.domain.wrap(x - p)
        shape = d.shape[:-1]
        flat = d.reshape(-1, 2)
        if not singular_ok:
            if flat.shape[0] and np.min(np.einsum("pi,pi->p", flat, flat)) < self.singular_distance**2:
                raise SingularPoint("evaluation point coincides with the source modulo the lattice")
        pieces = {key: [] for key in want}
        for start in range(0, flat.shape[0], _CHUNK):
            res = self._series(flat[start:start + _CHUNK], want)
            for key in want:
                pieces[key].append(res[key])
        out = {}
        for key in want:
            arr = np.concatenate(pieces[key], axis=0) if pieces[key] else np.zeros((0,))
            trailing = arr.shape[1:]
            out[key] = arr.reshape(shape + trailing)
        return out

    # public vectorized API --------------------------------------------------
    def G(self, x, p):
        """Green's function ``G(x, p)``; broadcasting over leading axes."""
        return self._evaluate(x, p, ("G",), singular_ok=False)["G"]

    def gamma(self, x, p):
        """Regular part ``G(x, p) + ln|x - p| / (2 pi)`` with nearest-representative distance."""
        return self._evaluate(x, p, ("gamma",), singular_ok=True)["gamma"]

    def grad_G(self, x, p):
        """Gradient of ``G`` with respect to ``x``."""
        return self._evaluate(x, p, ("grad_G",), singular_ok=False)["grad_G"]

    def grad_gamma(self, x, p):
        """Gradient of the regular part with respect to ``x``."""
        return self._evaluate(x, p, ("grad_gamma",), singular_ok=True)["grad_gamma"]

    def hess_G(self, x, p):
        """Hessian of ``G`` with respect to ``x``, shape (..., 2, 2)."""
        return self._evaluate(x, p, ("hess_G",), singular_ok=False)["hess_G"]

    def hess_gamma(self, x, p):
        """Hessian of the regular part with respect to ``x``, shape (..., 2, 2)."""
        return self._evaluate(x, p, ("hess_gamma",), singular_ok=True)["hess_gamma"]

    @property
    def robin_constant(self) -> float:
        """``gamma(p, p)``, independent of ``p`` on a flat torus."""
        if self._robin is None:
            self._robin = float(self.gamma(np.zeros(2), np.zeros(2)))
        return self._robin

    # grids -------------------------------------------------------------------
    def grid_green(self, M: int, p):
        """``G`` and ``gamma`` with source ``p`` on the uniform ``M x M`` grid.

        The smooth part is summed exactly by one inverse FFT with a splitting
        parameter small enough that every retained Gaussian-damped mode fits
        below the grid Nyquist frequency; the short-range part is then local.

        Returns
        -------
        G, gamma : ndarray of shape (M, M)
            ``G`` is ``inf`` at a grid point coinciding with ``p``.
        """
        p = check_point(p, "p")
        dom = self.domain
        kvec = dom.grid_wavevectors(M)
        k2 = np.einsum("abi,abi->ab", kvec, kvec)
        m = np.fft.fftfreq(M, d=1.0 / M)
        edge = (np.abs(m)[:, None] >= M // 2) | (np.abs(m)[None, :] >= M // 2)
        k_nyq2 = float(np.min(k2[edge]))
        tau = min(self.tau, 40.0 / k_nyq2)
        coeff = np.zeros_like(k2)
        nz = k2 > 0
        coeff[nz] = np.exp(-tau * k2[nz]) / k2[nz]
        coeff[edge] = 0.0
        phase = np.exp(-1j * (kvec @ p))
        rec = np.real(np.fft.ifft2(coeff * phase)) * (M * M)
        d = dom.wrap(dom.grid_points(M) - p)
        s0 = np.einsum("abi,abi->ab", d, d)
        z0 = s0 / (4 * tau)
        images = dom.lattice_vectors(np.sqrt(4 * tau * (self._z_cut + 40.0)) + dom.circumradius, include_zero=False)
        img = np.zeros_like(s0)
        for L in images:
            zz = np.einsum("abi,abi->ab", d + L, d + L) / (4 * tau)
            act = zz < self._z_cut + 40.0
            if np.any(act):
                img[act] += exp1(zz[act])
        base = rec + img / (4 * np.pi) - tau
        gam = np.empty_like(s0)
        near = z0 < 60.0
        gam[near] = base[near] + (-EULER_GAMMA + np.log(4 * tau) + ein(z0[near])) / (4 * np.pi)
        far = ~near
        gam[far] = base[far] + np.log(s0[far]) / (4 * np.pi)
        with np.errstate(divide="ignore"):
            G = gam - np.log(s0) / (4 * np.pi)
        return G, gam


def green_eval(g: GreenEvaluator, x, p) -> float:
    """Green's function ``G(x, p)`` at a single pair of points."""
    return float(g.G(check_point(x, "x"), check_point(p, "p")))


def green_regular_part(g: GreenEvaluator, x, p) -> float:
    """Regular part ``gamma(x, p) = G(x, p) + ln|x - p| / (2 pi)``."""
    return float(g.gamma(check_point(x, "x"), check_point(p, "p")))


def green_gradient(g: GreenEvaluator, x, p, which: str = "x") -> np.ndarray:
    """Gradient of ``G`` with respect to ``x`` (``which='x'``) or ``p`` (``which='p'``)."""
    if which not in ("x", "p"):
        raise ValidationError("which must be 'x' or 'p'")
    grad = g.grad_G(check_point(x, "x"), check_point(p, "p"))
    return -grad if which == "p" else grad


def _check_centers(domain: TorusDomain, centers) -> np.ndarray:
    centers = check_points(centers, "centers")
    n = centers.shape[0]
    for a in range(n):
        for b in range(a + 1, n):
            if domain.distance(centers[a], centers[b]) < _SINGULAR_DISTANCE:
                raise SingularPoint(f"centers {a} and {b} coincide modulo the lattice")
    return centers


def g_tilde(g: GreenEvaluator, t: int, x, centers):
    """``gamma(x, p_t) + sum_{s != t} G(x, p_s)``, vectorized over ``x``."""
    centers = _check_centers(g.domain, centers)
    if not 0 <= t < centers.shape[0]:
        raise ValidationError("bubble index out of range")
    val = g.gamma(x, centers[t])
    for s in range(centers.shape[0]):
        if s != t:
            val = val + g.G(x, centers[s])
    return val


def g_tilde_gradient(g: GreenEvaluator, t: int, x, centers):
    """Gradient in ``x`` of :func:`g_tilde`."""
    centers = _check_centers(g.domain, centers)
    val = g.grad_gamma(x, centers[t])
    for s in range(centers.shape[0]):
        if s != t:
            val = val + g.grad_G(x, centers[s])
    return val


# ---------------------------------------------------------------------------
# Voronoi partition of the torus


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area of a polygon with vertices in counterclockwise order."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class StarCell:
    """Convex cell around a center, in coordinates relative to that center.

    The cell is ``{y : y.q_k <= c_k}`` for the neighbour offsets ``q_k``
    stored in ``normals``; ``offsets`` default to ``|q_k|^2 / 2`` (plain
    bisectors).
    """

    normals: np.ndarray
    vertices: np.ndarray
    offsets: np.ndarray | None = None

    @property
    def levels(self) -> np.ndarray:
        if self.offsets is not None:
            return self.offsets
        return 0.5 * np.einsum("ij,ij->i", self.normals, self.normals)

    @property
    def vertex_angles(self) -> np.ndarray:
        return np.sort(np.mod(np.arctan2(self.vertices[:, 1], self.vertices[:, 0]), 2 * np.pi))

    @property
    def inradius(self) -> float:
        """Radius of the largest disk around the center inside the cell."""
        return float(np.min(self.levels / np.linalg.norm(self.normals, axis=1)))

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    def ray_distance(self, theta):
        """Distance from the center to the cell boundary along direction ``theta``."""
        theta = np.asarray(theta, dtype=float)
        u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        proj = u @ self.normals.T
        with np.errstate(divide="ignore"):
            dist = np.where(proj > 1e-15, self.levels / np.where(proj > 1e-15, proj, 1.0), np.inf)
        return np.min(dist, axis=-1)


def _star_cell(normals: np.ndarray, offsets: np.ndarray | None = None) -> StarCell:
    if offsets is None:
        offsets = 0.5 * np.einsum("ij,ij->i", normals, normals)
    if np.any(offsets <= 0):
        raise PartitionViolation("cell does not contain its center")
    halfspaces = np.hstack([normals, -offsets[:, None]])
    hs = HalfspaceIntersection(halfspaces, np.zeros(2))
    verts = hs.intersections
    ang = np.arctan2(verts[:, 1], verts[:, 0])
    verts = verts[np.argsort(ang)]
    keep = np.ones(len(verts), dtype=bool)
    for a in range(1, len(verts)):
        if np.linalg.norm(verts[a] - verts[a - 1]) < 1e-13:
            keep[a] = False
    verts = verts[keep]
    # drop neighbours whose bisector does not touch the cell
    slack = verts @ normals.T - offsets
    active = np.any(np.abs(slack) < 1e-10, axis=0)
    return StarCell(normals=normals[active], vertices=verts, offsets=offsets[active])


class VoronoiPartition:
    """Partition of the torus into nearest-center cells.

    Points on a cell boundary go to the lowest center index.  With
    ``weights`` the partition is the power diagram: ``x`` belongs to the cell
    minimizing ``|x - p_t|^2 - w_t``.

    Parameters
    ----------
    domain : TorusDomain
    centers : array_like of shape (N, 2)
    deltas : array_like of shape (N,), optional
        Cutoff radii; when given, ``B_{3 delta_t}(p_t)`` must lie inside cell ``t``.
    weights : array_like of shape (N,), optional
        Power-diagram weights; zero gives the plain Voronoi partition.
    """

    def __init__(self, domain: TorusDomain, centers, deltas=None, weights=None):
        self.domain = _check_domain(domain)
        self.centers = _check_centers(domain, centers)
        N = self.centers.shape[0]
        self.weights = np.zeros(N) if weights is None else np.asarray(weights, dtype=float).reshape(N)
        reach = 3.0 * domain.circumradius + domain.shortest_vector
        L = domain.lattice_vectors(reach)
        self.cells = []
        lattice_normals = L[np.linalg.norm(L, axis=1) > 0]
        self.lattice_cell = _star_cell(lattice_normals)
        for t in range(N):
            normals = [lattice_normals]
            offsets = [0.5 * np.einsum("ij,ij->i", lattice_normals, lattice_normals)]
            for s in range(N):
                if s != t:
                    q = domain.wrap(self.centers[s] - self.centers[t]) + L
                    normals.append(q)
                    offsets.append(0.5 * (np.einsum("ij,ij->i", q, q) + self.weights[t] - self.weights[s]))
            nrm = np.vstack(normals)
            off = np.concatenate(offsets)
            near = np.linalg.norm(nrm, axis=1) <= 2 * domain.circumradius + 1e-9
            self.cells.append(_star_cell(nrm[near], off[near]))
        self.deltas = None
        if deltas is not None:
            deltas = np.broadcast_to(np.asarray(deltas, dtype=float), (N,)).copy()
            self.deltas = deltas
            if N > 1:
                sep = min(domain.distance(self.centers[a], self.centers[b])
                          for a in range(N) for b in range(a + 1, N))
                if sep <= 6.0 * float(np.max(deltas)):
                    raise CentersTooClose(
                        f"minimum center separation {sep:.6g} is not larger than 6 max(delta) = {6 * np.max(deltas):.6g}")
            for t in range(N):
                if 3.0 * deltas[t] > self.cells[t].inradius:
                    raise CentersTooClose(f"ball of radius 3 delta_{t} is not inside cell {t}")

    @property
    def n_cells(self) -> int:
        return self.centers.shape[0]

    def labels(self, x) -> np.ndarray:
        """Index of the cell containing each point (lowest index on ties)."""
        x = check_point_cloud(x, "x")
        d = np.stack([self.domain.distance(x, c) ** 2 - w for c, w in zip(self.centers, self.weights)], axis=-1)
        return np.argmin(d, axis=-1)

    def contains(self, t: int, x) -> np.ndarray:
        return self.labels(x) == t

    def cell_areas(self) -> np.ndarray:
        return np.array([c.area for c in self.cells])


def voronoi_partition(domain: TorusDomain, centers, deltas=None, weights=None) -> VoronoiPartition:
    """Nearest-center partition of the torus; see :class:`VoronoiPartition`."""
    return VoronoiPartition(domain, centers, deltas, weights)
