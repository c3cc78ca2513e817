"""Experiment configuration files.

One INI file describes one experiment.  Lists use commas, matrix rows and
point lists use semicolons, trigonometric terms use ``|``::

    [problem]
    coupling = 2, 1; 1, 2
    masses = 0.857142857142857, 1.714285714285714   # or: mass_ray = 1, 2
    N = 1
    e1 = 1, 0
    e2 = 0, 1
    dual_cutoff = 64
    seed = 0

    [coefficients]
    # h<i> = form; constant; m n a b | m n a b ...   (form is exp or linear)
    h0 = exp; 0; 1 0 0.3 0.1 | 0 1 0.1 0.2
    normalize = true

    [centers]
    initial = 0.1, 0.15; 0.6, 0.65
    collision_distance = 0.05
    restarts = 8

    [green]
    grid = 32
    source = 0, 0

    [sweep]
    eps = 0.01, 0.005, 0.0025, 0.00125
    delta = auto
    grid = 2048
    residual = analytic
    rho = sweep                  # sweep (rho_eps on the mass ray) or star

    [newton]
    enabled = false
    grid = 1024
    eps = 0.01, 0.005, 0.0025

Missing coefficient entries default to the constant that makes every
height vanish at a single center, ``h_i = exp(-2 pi m_i gamma(p, p))``.
Missing sections take the defaults shown above.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientFunction, TrigPolynomial
from .exceptions import ValidationError
from .limit_profile import as_coupling, check_masses, sigma_on_ray
from .torus_green import GreenEvaluator, TorusDomain


def _floats(text: str, name: str) -> list:
    try:
        return [float(tok) for tok in text.replace("\n", " ").split(",") if tok.strip()]
    except ValueError as exc:
        raise ValidationError(f"{name}: cannot parse '{text}' as numbers") from exc


def _rows(text: str, name: str) -> list:
    return [_floats(row, name) for row in text.split(";") if row.strip()]


def _bool(text: str, name: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"{name}: expected a boolean, got '{text}'")


def _int(text: str, name: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ValidationError(f"{name}: expected an integer, got '{text}'") from exc


def _coefficient(text: str, name: str) -> CoefficientFunction:
    parts = [p.strip() for p in text.split(";")]
    if len(parts) not in (2, 3):
        raise ValidationError(f"{name}: expected 'form; constant; terms'")
    form = parts[0]
    constant = _floats(parts[1], name)
    if len(constant) != 1:
        raise ValidationError(f"{name}: constant must be a single number")
    terms = []
    if len(parts) == 3 and parts[2]:
        for chunk in parts[2].split("|"):
            vals = chunk.split()
            if len(vals) != 4:
                raise ValidationError(f"{name}: each term needs 'm n a b'")
            try:
                terms.append((int(vals[0]), int(vals[1]), float(vals[2]), float(vals[3])))
            except ValueError as exc:
                raise ValidationError(f"{name}: bad term '{chunk}'") from exc
    return CoefficientFunction(TrigPolynomial(tuple(terms), constant[0]), form)


@dataclass
class ExperimentConfig:
    """Parsed experiment description; see the module docstring for the file grammar."""

    A: np.ndarray
    sigma: np.ndarray
    N: int
    e1: np.ndarray
    e2: np.ndarray
    dual_cutoff: int = 64
    seed: int = 0
    coefficients: list = field(default_factory=list)
    normalize: bool = True
    initial_centers: np.ndarray | None = None
    collision_distance: float = 0.05
    restarts: int = 8
    green_grid: int = 32
    green_source: np.ndarray = field(default_factory=lambda: np.zeros(2))
    eps: list = field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3, 1.25e-3])
    delta: float | None = None
    grid: int = 2048
    residual: str = "analytic"
    rho_mode: str = "sweep"
    newton: bool = False
    newton_grid: int = 1024
    newton_eps: list = field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3])

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def rho_star(self) -> np.ndarray:
        return 2 * np.pi * self.N * self.sigma

    def domain(self) -> TorusDomain:
        return TorusDomain(self.e1, self.e2, dual_cutoff=self.dual_cutoff)

    def coefficient_functions(self, green: GreenEvaluator) -> list:
        """Configured coefficients, with height-neutral constants for unset components."""
        m = self.A @ self.sigma
        out = []
        for i in range(self.n):
            c = self.coefficients[i] if i < len(self.coefficients) else None
            if c is None:
                c = CoefficientFunction.constant(float(np.exp(-2 * np.pi * m[i] * green.robin_constant)))
            out.append(c)
        return out

    def plan(self) -> dict:
        """Resolved settings as plain data, for dry runs and output headers."""
        return {
            "coupling": self.A.tolist(), "sigma": self.sigma.tolist(), "rho_star": self.rho_star.tolist(),
            "m_star": (self.A @ self.sigma).tolist(), "N": self.N, "e1": self.e1.tolist(),
            "e2": self.e2.tolist(), "dual_cutoff": self.dual_cutoff, "seed": self.seed,
            "coefficients": [None if c is None else c.to_dict() for c in self.coefficients],
            "normalize": self.normalize,
            "initial_centers": None if self.initial_centers is None else self.initial_centers.tolist(),
            "collision_distance": self.collision_distance, "restarts": self.restarts,
            "green_grid": self.green_grid, "green_source": self.green_source.tolist(), "eps": list(self.eps),
            "delta": self.delta, "grid": self.grid, "residual": self.residual, "rho_mode": self.rho_mode,
            "newton": self.newton, "newton_grid": self.newton_grid, "newton_eps": list(self.newton_eps),
        }


def _check_grid(M: int, name: str) -> int:
    if M < 4 or M & (M - 1):
        raise ValidationError(f"{name} must be a power of two >= 4, got {M}")
    return M


def _check_sweep(eps: list, name: str) -> list:
    if not eps or any(e <= 0 for e in eps):
        raise ValidationError(f"{name} must be a non-empty list of positive numbers")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError(f"{name} must be strictly decreasing")
    return eps


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text.

    Raises
    ------
    ValidationError
        On syntax errors or values that break a documented invariant.
    """
    # ';' separates rows inside values, so only '#' starts a comment
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), delimiters=("=",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config syntax: {exc}") from exc
    if not cp.has_section("problem"):
        raise ValidationError("config needs a [problem] section")
    pr = cp["problem"]
    if "coupling" not in pr:
        raise ValidationError("[problem] needs 'coupling'")
    A = np.array(_rows(pr["coupling"], "coupling"), dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("coupling must be a square matrix")
    coupling = as_coupling(A)
    if "masses" in pr:
        sigma = np.array(_floats(pr["masses"], "masses"))
        check_masses(coupling, sigma)
    elif "mass_ray" in pr:
        sigma = sigma_on_ray(coupling, np.array(_floats(pr["mass_ray"], "mass_ray")))
    else:
        sigma = sigma_on_ray(coupling, np.ones(coupling.n))
    N = _int(pr.get("N", "1"), "N")
    if N < 1:
        raise ValidationError("N must be a positive integer")
    e1 = np.array(_floats(pr.get("e1", "1, 0"), "e1"))
    e2 = np.array(_floats(pr.get("e2", "0, 1"), "e2"))
    cfg = ExperimentConfig(A=coupling.A, sigma=sigma, N=N, e1=e1, e2=e2,
                           dual_cutoff=_int(pr.get("dual_cutoff", "64"), "dual_cutoff"),
                           seed=_int(pr.get("seed", "0"), "seed"))
    cfg.domain()  # validates area and generators

    if cp.has_section("coefficients"):
        co = cp["coefficients"]
        cfg.coefficients = [_coefficient(co[f"h{i}"], f"h{i}") if f"h{i}" in co else None
                            for i in range(cfg.n)]
        extra = [k for k in co if k.startswith("h") and k[1:].isdigit() and int(k[1:]) >= cfg.n]
        if extra:
            raise ValidationError(f"coefficient entries {extra} exceed the number of components")
        cfg.normalize = _bool(co.get("normalize", "true"), "normalize")
    if cp.has_section("centers"):
        ce = cp["centers"]
        if "initial" in ce:
            pts = np.array(_rows(ce["initial"], "initial"), dtype=float)
            if pts.shape != (N, 2):
                raise ValidationError(f"initial centers must be {N} points in the plane")
            cfg.initial_centers = pts
        cfg.collision_distance = float(ce.get("collision_distance", "0.05"))
        cfg.restarts = _int(ce.get("restarts", "8"), "restarts")
    if cp.has_section("green"):
        gr = cp["green"]
        cfg.green_grid = _check_grid(_int(gr.get("grid", "32"), "green grid"), "green grid")
        src = np.array(_floats(gr.get("source", "0, 0"), "source"))
        if src.shape != (2,):
            raise ValidationError("green source must be a point")
        cfg.green_source = src
    if cp.has_section("sweep"):
        sw = cp["sweep"]
        cfg.eps = _check_sweep(_floats(sw.get("eps", "0.01, 0.005, 0.0025, 0.00125"), "eps"), "eps")
        d = sw.get("delta", "auto").strip()
        cfg.delta = None if d == "auto" else float(d)
        cfg.grid = _check_grid(_int(sw.get("grid", "2048"), "grid"), "grid")
        cfg.residual = sw.get("residual", "analytic").strip()
        if cfg.residual not in ("analytic", "spectral"):
            raise ValidationError("residual must be 'analytic' or 'spectral'")
        cfg.rho_mode = sw.get("rho", "sweep").strip()
        if cfg.rho_mode not in ("sweep", "star"):
            raise ValidationError("rho must be 'sweep' or 'star'")
    if cp.has_section("newton"):
        nw = cp["newton"]
        cfg.newton = _bool(nw.get("enabled", "false"), "newton enabled")
        cfg.newton_grid = _check_grid(_int(nw.get("grid", "1024"), "newton grid"), "newton grid")
        cfg.newton_eps = _check_sweep(_floats(nw.get("eps", "0.01, 0.005, 0.0025"), "newton eps"), "newton eps")
    known = {"problem", "coefficients", "centers", "green", "sweep", "newton"}
    unknown = sorted(set(cp.sections()) - known)
    if unknown:
        raise ValidationError(f"unknown config sections: {unknown}")
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read and parse a configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
