"""Inverse design: from a target refraction coefficient to a particle recipe.

The effective refraction coefficient of a cloud with impedance function
``h`` and density ``N`` in a background ``n0^2`` is

    n^2(x) = n0^2(x) - 4 pi h(x) N(x) / k^2,

so a target ``n^2`` fixes the product ``p = h N = k^2 (n0^2 - n^2) / (4 pi)``
and leaves the split between ``h`` and ``N`` free.  Two splits are offered:
a constant density (``h = p / N0``) or a constant impedance
(``N = p / h0``, which must be real and nonnegative).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import yaml
from scipy.stats import qmc

from .cloud import ParticleCloud, expected_count, generate_cloud
from .continuum import effective_refraction
from .greens import GreensKernel
from .medium import (Constant, Domain, Field, FunctionField, IncidentField, InputError, Medium,
                     domain_from_config, field_from_config, parse_scalar)
from .study import CompareResult, compare_limit

STRATEGIES = ("fixed-density", "fixed-h")
FEASIBILITY_SAMPLES = 10_000
SIGN_TOL = 1e-12


class DesignInfeasible(ValueError):
    """The target cannot be reached with ``N >= 0`` and ``Im h <= 0``."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


def feasibility_samples(domain: Domain, n: int = FEASIBILITY_SAMPLES) -> np.ndarray:
    """Deterministic Halton points inside ``domain``."""
    lo, hi = domain.bounds()
    sampler = qmc.Halton(d=3, scramble=False)
    sampler.fast_forward(1)
    pts = np.zeros((0, 3))
    while len(pts) < n:
        cand = lo + sampler.random(2 * n) * (hi - lo)
        pts = np.vstack([pts, cand[domain.contains(cand)]])
    return pts[:n]


def _product(n0sq: Field, target: Field, k: float, x) -> np.ndarray:
    return k * k * (np.asarray(n0sq(x), dtype=complex) - np.asarray(target(x), dtype=complex)) / (4 * np.pi)


@dataclass(frozen=True)
class MaterialRecipe:
    """A design pair ``(h, N)`` with the particle parameters that realise it.

    Attributes
    ----------
    strategy : str
        ``"fixed-density"`` or ``"fixed-h"``.
    scale : complex
        ``N0`` for the fixed-density split, ``h0`` for the fixed-h split.
    n0sq, target : Field
        Background and target refraction coefficients.
    k : float
    domain : Domain
    a, kappa : float
        Particle radius and exponent; ``zeta(x) = h(x) / a^kappa``.
    predicted_M : int
        ``round(a^(kappa-2) int_D N)``.
    """

    strategy: str
    scale: complex
    n0sq: Field
    target: Field
    k: float
    domain: Domain
    a: float
    kappa: float
    predicted_M: int = 0
    samples: np.ndarray = field(default=None, repr=False, compare=False)

    def product(self, x) -> np.ndarray:
        return _product(self.n0sq, self.target, self.k, x)

    def h_values(self, x) -> np.ndarray:
        if self.strategy == "fixed-density":
            return self.product(x) / self.scale
        return np.full(np.shape(x)[:-1], complex(self.scale))

    def N_values(self, x) -> np.ndarray:
        if self.strategy == "fixed-density":
            return np.full(np.shape(x)[:-1], float(np.real(self.scale)))
        return np.real(self.product(x) / self.scale)

    @property
    def h(self) -> Field:
        if self.strategy == "fixed-h":
            return Constant(complex(self.scale))
        return FunctionField(self.h_values, "recipe h")

    @property
    def N(self) -> Field:
        if self.strategy == "fixed-density":
            return Constant(float(np.real(self.scale)))
        return FunctionField(self.N_values, "recipe N")

    def zeta(self, x) -> np.ndarray:
        return self.h_values(x) / self.a**self.kappa

    def achieved(self, x) -> np.ndarray:
        """Refraction coefficient produced by the recipe's ``(h, N)``."""
        return effective_refraction(self.n0sq, self.h_values(x), self.N_values(x), self.k, x)

    def to_config(self) -> dict:
        samples = self.samples if self.samples is not None else feasibility_samples(self.domain, 16)
        tgt = np.asarray(self.target(samples[:16]), dtype=complex)
        return {
            "strategy": self.strategy,
            "N0" if self.strategy == "fixed-density" else "h0": _num(self.scale),
            "n0sq": self.n0sq.to_config(),
            "target": self.target.to_config(),
            "k": float(self.k),
            "domain": self.domain.to_config(),
            "a": float(self.a),
            "kappa": float(self.kappa),
            "predicted_M": int(self.predicted_M),
            "target_samples": [[*map(float, p), _num(v)] for p, v in zip(samples[:16], tgt)],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_config(), fh, sort_keys=False)

    @classmethod
    def load(cls, path) -> "MaterialRecipe":
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
        strategy = cfg["strategy"]
        key = "N0" if strategy == "fixed-density" else "h0"
        return design_material(field_from_config(cfg["n0sq"]), field_from_config(cfg["target"]), cfg["k"],
                               domain_from_config(cfg["domain"]), strategy=strategy,
                               **{key: parse_scalar(cfg[key])}, a=cfg["a"], kappa=cfg["kappa"])


def _num(v):
    v = complex(v)
    return f"{v.real!r}{v.imag:+}j" if v.imag else v.real


def design_material(n0sq, target_nsq, k: float, domain: Domain, strategy: str = "fixed-density",
                    N0: Optional[float] = None, h0: Optional[complex] = None, a: Optional[float] = None,
                    kappa: float = 0.5, n_samples: int = FEASIBILITY_SAMPLES) -> MaterialRecipe:
    """Split ``p = k^2 (n0^2 - n^2) / (4 pi)`` into an admissible pair ``(h, N)``.

    Parameters
    ----------
    n0sq, target_nsq : Field or config value
    k : float
        Wave number, positive.
    domain : Domain
    strategy : {"fixed-density", "fixed-h"}
    N0 : float, optional
        Constant density for the fixed-density split.  Defaults to the
        smallest value ``>= 1`` that keeps ``max |zeta| a <= 0.1``.
    h0 : complex, optional
        Constant impedance for the fixed-h split (required there).
    a : float, optional
        Radius; defaults to ``0.01 diam(D)``.
    kappa : float

    Raises
    ------
    DesignInfeasible
        If ``Im h > 0`` or ``N < 0`` (or ``N`` non-real) at a sample point;
        the message names the first offending point.
    """
    n0sq = field_from_config(n0sq)
    target = field_from_config(target_nsq)
    if not k > 0:
        raise InputError(f"wave number must be positive, got {k}")
    if strategy not in STRATEGIES:
        raise InputError(f"unknown design strategy {strategy!r}")
    if not 0 < kappa < 1:
        raise InputError(f"kappa must lie in (0, 1), got {kappa}")
    a = 0.01 * domain.diameter() if a is None else float(a)
    if not a > 0:
        raise InputError("radius must be positive")

    pts = feasibility_samples(domain, n_samples)
    p = _product(n0sq, target, k, pts)
    scale = None
    if strategy == "fixed-density":
        if N0 is None:
            N0 = max(1.0, 10.0 * float(np.abs(p).max()) * a ** (1.0 - kappa))
        N0 = float(N0)
        if not N0 > 0:
            raise DesignInfeasible(f"density N0 must be positive, got {N0}")
        scale = N0
        bad = np.flatnonzero(p.imag / N0 > SIGN_TOL * max(1.0, np.abs(p).max()))
        if len(bad):
            x = pts[bad[0]]
            raise DesignInfeasible(f"Im h > 0 at x = {x.tolist()}: the target adds gain there", x)
    else:
        if h0 is None:
            raise InputError("the fixed-h strategy needs h0")
        h0 = complex(parse_scalar(h0) if isinstance(h0, str) else h0)
        if h0 == 0:
            raise DesignInfeasible("h0 must be nonzero")
        if h0.imag > 0:
            raise DesignInfeasible(f"h0 = {h0} violates Im h <= 0")
        scale = h0
        ratio = p / h0
        tol = SIGN_TOL * max(1.0, np.abs(ratio).max())
        bad = np.flatnonzero((np.abs(ratio.imag) > tol) | (ratio.real < -tol))
        if len(bad):
            x = pts[bad[0]]
            raise DesignInfeasible(f"N = p / h0 = {ratio[bad[0]]:.6g} is not real and nonnegative at x = {x.tolist()}",
                                   x)
    recipe = MaterialRecipe(strategy, scale, n0sq, target, float(k), domain, a, float(kappa), 0, pts)
    M = int(round(expected_count(domain, recipe.N, a, kappa)))
    return MaterialRecipe(strategy, scale, n0sq, target, float(k), domain, a, float(kappa), M, pts)


def recipe_to_cloud(recipe: MaterialRecipe, domain: Optional[Domain] = None, a: Optional[float] = None,
                    placement: str = "jitter", seed: int = 0) -> ParticleCloud:
    """Generate the recipe's particles; ``a`` overrides the recipe radius."""
    domain = recipe.domain if domain is None else domain
    a = recipe.a if a is None else a
    cloud = generate_cloud(domain, recipe.N, recipe.h, a, recipe.kappa, placement=placement, seed=seed)
    cloud.params["predicted_M"] = recipe.predicted_M
    return cloud


@dataclass
class VerificationReport:
    result: CompareResult
    runtimes: list

    @property
    def rows(self):
        return self.result.rows

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("a,M,max_rel_discrepancy\n")
            for r in self.rows:
                fh.write(f"{r.a:.17g},{r.M},{r.max_rel_discrepancy:.17g}\n")

    def write_runtimes(self, path) -> None:
        with open(path, "w") as fh:
            json.dump([{"a": r.a, "runtime": t} for r, t in zip(self.rows, self.runtimes)], fh, indent=2)


def verify_design(recipe: MaterialRecipe, medium: Medium, u0: IncidentField, a_sequence: Sequence[float],
                  grid_n: int = 24, placement: str = "jitter", seed: int = 0, jobs: int = 1,
                  **kwargs) -> VerificationReport:
    """Forward check of a recipe: particle fields against the continuum field for each radius."""
    if not medium.is_homogeneous:
        raise InputError("design verification needs a constant-speed medium")
    kernel = GreensKernel.from_medium(medium)
    result = compare_limit(medium, kernel, u0, recipe.h, recipe.N, recipe.kappa, a_sequence, grid_n=grid_n,
                           placement=placement, seed=seed, jobs=jobs, **kwargs)
    return VerificationReport(result, [r.runtime for r in result.rows])
