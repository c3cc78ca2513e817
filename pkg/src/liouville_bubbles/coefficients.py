"""Positive doubly periodic coefficient functions given by trigonometric polynomials.

A coefficient is either ``h = P`` (``form='linear'``) or ``h = exp(P)``
(``form='exp'``) where

    P(x) = c0 + sum_terms a cos(k.x) + b sin(k.x),   k = 2 pi (m b1 + n b2),

with ``b1, b2`` the dual basis of the torus, so every term is periodic.
Derivatives are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .torus_green import TorusDomain


@dataclass(frozen=True)
class TrigPolynomial:
    """Finite Fourier series ``c0 + sum a cos(k.x) + b sin(k.x)``.

    Parameters
    ----------
    terms : sequence of (m, n, a, b)
        Integer dual-lattice indices and cosine/sine coefficients.
    constant : float
    """

    terms: tuple = ()
    constant: float = 0.0

    def __post_init__(self):
        clean = []
        for term in self.terms:
            if len(term) != 4:
                raise ValidationError("trigonometric terms must be (m, n, a, b)")
            m, n, a, b = term
            if int(m) != m or int(n) != n:
                raise ValidationError("trigonometric indices must be integers")
            clean.append((int(m), int(n), float(a), float(b)))
        object.__setattr__(self, "terms", tuple(clean))
        object.__setattr__(self, "constant", float(self.constant))

    def _waves(self, domain: TorusDomain):
        if not self.terms:
            return np.zeros((0, 2)), np.zeros(0), np.zeros(0)
        idx = np.array([[t[0], t[1]] for t in self.terms], dtype=float)
        k = 2 * np.pi * idx @ domain.dual
        a = np.array([t[2] for t in self.terms])
        b = np.array([t[3] for t in self.terms])
        return k, a, b

    def derivatives(self, domain: TorusDomain, x, order: int = 2):
        """Value, gradient and Hessian of ``P`` at points ``x`` of shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        k, a, b = self._waves(domain)
        ph = x @ k.T
        c, s = np.cos(ph), np.sin(ph)
        val = self.constant + c @ a + s @ b
        out = [val]
        if order >= 1:
            coef = -s * a + c * b
            out.append(coef @ k)
        if order >= 2:
            coef2 = -(c * a + s * b)
            out.append(np.einsum("...k,ka,kb->...ab", coef2, k, k))
        return out


@dataclass(frozen=True)
class CoefficientFunction:
    """Positive coefficient ``h`` built from a :class:`TrigPolynomial`.

    Parameters
    ----------
    poly : TrigPolynomial
    form : {'exp', 'linear'}
        ``h = exp(P)`` or ``h = P``.
    """

    poly: TrigPolynomial = field(default_factory=TrigPolynomial)
    form: str = "exp"

    def __post_init__(self):
        if self.form not in ("exp", "linear"):
            raise ValidationError("form must be 'exp' or 'linear'")

    @classmethod
    def constant(cls, value: float = 1.0) -> "CoefficientFunction":
        if value <= 0:
            raise ValidationError("constant coefficient must be positive")
        return cls(TrigPolynomial((), np.log(value)), "exp")

    @property
    def is_constant(self) -> bool:
        return all(t[2] == 0 and t[3] == 0 for t in self.poly.terms)

    def log_derivatives(self, domain: TorusDomain, x):
        """``ln h``, its gradient and Hessian at ``x``."""
        P, dP, HP = self.poly.derivatives(domain, x)
        if self.form == "exp":
            return P, dP, HP
        if np.any(P <= 0):
            raise ValidationError("coefficient function is not positive")
        g = dP / P[..., None]
        H = HP / P[..., None, None] - np.einsum("...a,...b->...ab", g, g)
        return np.log(P), g, H

    def value(self, domain: TorusDomain, x):
        lnh, _, _ = self.log_derivatives(domain, x)
        return np.exp(lnh)

    def log(self, domain: TorusDomain, x):
        P = self.poly.derivatives(domain, x, order=0)[0]
        if self.form == "exp":
            return P
        if np.any(P <= 0):
            raise ValidationError("coefficient function is not positive")
        return np.log(P)

    def laplacian_ratio(self, domain: TorusDomain, x):
        """``Lap h / h`` at ``x``."""
        _, g, H = self.log_derivatives(domain, x)
        return np.trace(H, axis1=-2, axis2=-1) + np.einsum("...a,...a->...", g, g)

    def check_positive(self, domain: TorusDomain, samples: int = 64):
        """Verify positivity on a dense sample grid."""
        if self.form == "exp":
            return
        P = self.poly.derivatives(domain, domain.grid_points(samples), order=0)[0]
        if np.min(P) <= 0:
            raise ValidationError("coefficient function is not positive on the sample grid")

    def to_dict(self) -> dict:
        return {"form": self.form, "constant": self.poly.constant,
                "terms": [list(t) for t in self.poly.terms]}
