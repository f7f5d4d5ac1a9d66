"""Riemann-type sums over particle centres and their continuum limits.

``a^(2-kappa) sum_m f(x_m)`` tends to ``int_D f N dx`` for the clouds
produced by :mod:`smallbodies.cloud`.  For ``f`` unbounded on a set ``S``
with ``|f| <= c / dist(x, S)^nu``, the sum is cut off at ``dist >= delta``
and the limits are taken in the order ``a -> 0`` first, then
``delta -> 0``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .cloud import ParticleCloud, generate_cloud
from .medium import Box, Constant, Domain, Field, InputError, as_points, field_from_config

logger = logging.getLogger(__name__)


class AdmissibilityError(ValueError):
    """Growth exponent too large for the integral to exist."""


# ---------------------------------------------------------------------------
# Singular sets
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PointSet:
    point: tuple
    codim = 3

    def distance(self, x):
        return np.linalg.norm(as_points(x) - np.array(self.point), axis=-1)


@dataclass(frozen=True)
class Segment:
    start: tuple
    end: tuple
    codim = 2

    def distance(self, x):
        x = as_points(x)
        p0, p1 = np.array(self.start), np.array(self.end)
        d = p1 - p0
        t = np.clip(((x - p0) @ d) / (d @ d), 0.0, 1.0)
        return np.linalg.norm(x - (p0 + t[..., None] * d), axis=-1)


@dataclass(frozen=True)
class Plane:
    """Plane through ``point`` with unit ``normal`` (the patch is its trace in D)."""

    point: tuple
    normal: tuple
    codim = 1

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", tuple((n / np.linalg.norm(n)).tolist()))

    def distance(self, x):
        return np.abs((as_points(x) - np.array(self.point)) @ np.array(self.normal))


@dataclass(frozen=True)
class SingularFunction:
    """``f`` with the growth bound ``|f(x)| <= c / dist(x, S)^nu``, ``0 <= nu < 3``."""

    f: Callable
    singular_set: Optional[object] = None
    nu: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if not 0 <= self.nu < 3:
            raise AdmissibilityError(f"growth exponent nu = {self.nu} must satisfy 0 <= nu < 3")
        if self.singular_set is not None and self.nu >= self.singular_set.codim:
            warnings.warn(f"nu = {self.nu} is not integrable near a set of codimension "
                          f"{self.singular_set.codim}; the full-domain integral diverges", stacklevel=2)

    def __call__(self, x):
        return np.asarray(self.f(as_points(x)))

    def check_growth(self, x) -> bool:
        """Verify the growth bound on sample points (useful near ``S``)."""
        x = as_points(x)
        if self.singular_set is None:
            return bool(np.all(np.isfinite(self(x))))
        dist = self.singular_set.distance(x)
        with np.errstate(divide="ignore"):
            bound = self.c / dist**self.nu
        return bool(np.all(np.abs(self(x)) <= bound * (1 + 1e-12)))


# ---------------------------------------------------------------------------
# Sums
# ---------------------------------------------------------------------------
def _finite_sum(values: np.ndarray) -> complex:
    bad = ~np.isfinite(values)
    if np.any(bad):
        warnings.warn(f"f is infinite at {int(bad.sum())} centre(s); excluded from the sum", stacklevel=3)
        values = values[~bad]
    # numpy sums pairwise, which fixes the reduction order
    return complex(np.sum(values))


def weighted_sum(f, cloud: ParticleCloud) -> complex:
    """``a^(2-kappa) sum_m f(x_m)``."""
    if cloud.M == 0:
        raise InputError("weighted_sum needs a nonempty cloud")
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.asarray(f(cloud.centers), dtype=complex)
    return cloud.weight * _finite_sum(vals)


def cutoff_sum(f, cloud: ParticleCloud, delta: float) -> complex:
    """Weighted sum over centres with ``dist(x_m, S) >= delta``."""
    if delta < 0:
        raise InputError("delta must be nonnegative")
    sset = getattr(f, "singular_set", None)
    if sset is None or delta == 0:
        return weighted_sum(f, cloud) if cloud.M else 0j
    keep = sset.distance(cloud.centers) >= delta
    if not np.any(keep):
        return 0j
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.asarray(f(cloud.centers[keep]), dtype=complex)
    return cloud.weight * _finite_sum(vals)


# ---------------------------------------------------------------------------
# Reference integrals
# ---------------------------------------------------------------------------
_GL = {n: leggauss(n) for n in (16, 32)}


def _adaptive_line(g, lo: float, hi: float, tol: float, depth: int = 0) -> complex:
    """Vectorised adaptive Gauss-Legendre on ``[lo, hi]`` (16 vs 32 nodes)."""
    if hi <= lo:
        return 0.0
    vals = []
    for n in (16, 32):
        x, w = _GL[n]
        t = 0.5 * (hi - lo) * (x + 1) + lo
        vals.append(0.5 * (hi - lo) * np.sum(w * g(t)))
    if abs(vals[1] - vals[0]) <= tol or depth >= 40:
        return vals[1]
    mid = 0.5 * (lo + hi)
    return _adaptive_line(g, lo, mid, tol / 2, depth + 1) + _adaptive_line(g, mid, hi, tol / 2, depth + 1)


def _quad2(g, x_range, y_range, tol):
    """Outer 2-D adaptive quadrature of a scalar complex integrand."""
    def re(y, x):
        return g(x, y).real

    def im(y, x):
        return g(x, y).imag

    opts = dict(epsabs=tol, epsrel=1e-10)
    r = integrate.dblquad(re, x_range[0], x_range[1], y_range[0], y_range[1], **opts)[0]
    i = integrate.dblquad(im, x_range[0], x_range[1], y_range[0], y_range[1], **opts)[0]
    return r + 1j * i


def reference_integral(f, N, domain: Domain, delta: float = 0.0, tol: float = 1e-6) -> complex:
    """``int_{D_delta} f N dx`` with ``D_delta = {x in D : dist(x, S) >= delta}``.

    The coordinates follow the singular set: spherical about a point,
    slabs normal to a plane, cylindrical about a segment's line.  Without a
    singular set, spherical coordinates about the domain centre are used.
    Domains are convex, so every ray meets them in one interval.
    """
    N = field_from_config(N)
    sset = getattr(f, "singular_set", None)

    def fn(pts):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.asarray(f(pts), dtype=complex) * np.real(N(pts))
        return np.where(np.isfinite(v), v, 0.0)

    if sset is None or isinstance(sset, PointSet):
        anchor = domain.center() if sset is None else np.array(sset.point, dtype=float)
        if sset is not None and domain.depth(anchor) < 0:
            raise InputError("point singularities must lie in the closed domain")
        cutoff = 0.0 if sset is None else delta
        if isinstance(domain, Box):
            return _box_pyramids(fn, domain, anchor, cutoff, tol)

        def shell(theta, phi):
            d = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
            t0, t1 = domain.ray_interval(anchor, d)
            lo, hi = max(float(t0), 0.0, cutoff), float(t1)
            g = lambda r: fn(anchor + r[:, None] * d) * r * r  # noqa: E731
            return _adaptive_line(g, lo, hi, tol * 1e-2) * np.sin(theta)

        return _quad2(shell, (0.0, np.pi), (0.0, 2 * np.pi), tol)

    if isinstance(sset, Plane):
        n = np.array(sset.normal)
        p = np.array(sset.point, dtype=float)
        e1, e2 = _orthonormal(n)
        half = domain.diameter()
        centre_off = domain.center() - p
        c1, c2 = centre_off @ e1, centre_off @ e2

        def column(u, v):
            base = p + u * e1 + v * e2
            t0, t1 = domain.ray_interval(base, n)
            t0, t1 = float(t0), float(t1)
            if t1 <= t0:
                return 0.0
            g = lambda s: fn(base + s[:, None] * n)  # noqa: E731
            total = 0.0
            for lo, hi in ((t0, min(t1, -delta)), (max(t0, delta), t1)):
                total += _adaptive_line(g, lo, hi, tol * 1e-2)
            return total

        if isinstance(domain, Box) and np.count_nonzero(n) == 1:
            lo, hi = domain.bounds()
            ax1, ax2 = np.flatnonzero(np.abs(e1) > 0.5)[0], np.flatnonzero(np.abs(e2) > 0.5)[0]
            r1 = sorted(((lo[ax1] - p[ax1]) * e1[ax1], (hi[ax1] - p[ax1]) * e1[ax1]))
            r2 = sorted(((lo[ax2] - p[ax2]) * e2[ax2], (hi[ax2] - p[ax2]) * e2[ax2]))
            return _quad2(column, tuple(r1), tuple(r2), tol)
        return _quad2(column, (c1 - half, c1 + half), (c2 - half, c2 + half), tol)

    if isinstance(sset, Segment):
        p0, p1 = np.array(sset.start, float), np.array(sset.end, float)
        length = np.linalg.norm(p1 - p0)
        axis = (p1 - p0) / length
        e1, e2 = _orthonormal(axis)
        proj = [(c - p0) @ axis for c in _corners(domain)]
        t_lo, t_hi = min(proj), max(proj)

        def ring(t, phi):
            base = p0 + t * axis
            d = np.cos(phi) * e1 + np.sin(phi) * e2
            r0, r1 = domain.ray_interval(base, d)
            r0, r1 = max(float(r0), 0.0), float(r1)
            gap = 0.0 if 0 <= t <= length else min(abs(t), abs(t - length))
            rmin = max(r0, np.sqrt(max(delta**2 - gap**2, 0.0)))
            g = lambda r: fn(base + r[:, None] * d) * r  # noqa: E731
            return _adaptive_line(g, rmin, r1, tol * 1e-2)

        return _quad2(lambda t, phi: ring(t, phi), (t_lo, t_hi), (0.0, 2 * np.pi), tol)

    raise InputError(f"unsupported singular set {sset!r}")


def _box_pyramids(fn, box: Box, anchor: np.ndarray, cutoff: float, tol: float) -> complex:
    """Split the box into six pyramids with apex ``anchor``; each is smooth in face coordinates."""
    lo, hi = box.bounds()
    total = 0j
    for ax in range(3):
        others = [i for i in range(3) if i != ax]
        for level in (lo[ax], hi[ax]):
            height = abs(level - anchor[ax])
            if height == 0:
                continue

            def column(u, v, ax=ax, others=others, level=level, height=height):
                q = np.empty(3)
                q[ax], q[others[0]], q[others[1]] = level, u, v
                span = q - anchor
                s0 = min(cutoff / np.linalg.norm(span), 1.0)
                g = lambda s: fn(anchor + s[:, None] * span) * s * s  # noqa: E731
                return _adaptive_line(g, s0, 1.0, tol * 1e-2) * height

            total += _quad2(column, (lo[others[0]], hi[others[0]]), (lo[others[1]], hi[others[1]]), tol / 6)
    return total


def _orthonormal(n):
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def _corners(domain: Domain):
    lo, hi = domain.bounds()
    return [np.array([x, y, z]) for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]


# ---------------------------------------------------------------------------
# Convergence study
# ---------------------------------------------------------------------------
@dataclass
class StudyRow:
    delta: float
    a: float
    M_used: int
    value: complex
    error_cutoff: float
    error_full: float


@dataclass
class LimitStudy:
    rows: list = field(default_factory=list)
    reference_full: complex = np.nan
    references_cutoff: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "a", "M_used", "re_sum", "im_sum", "abs_error_cutoff", "abs_error"])
            for r in self.rows:
                w.writerow([f"{r.delta:.17g}", f"{r.a:.17g}", r.M_used, f"{r.value.real:.17g}",
                            f"{r.value.imag:.17g}", f"{r.error_cutoff:.17g}", f"{r.error_full:.17g}"])


def limit_study(f: SingularFunction, N, domain: Domain, kappa: float, a_sequence: Sequence[float],
                delta_sequence: Sequence[float] = (0.0,), h=0.0, placement: str = "jitter",
                seed: int = 0, tol: float = 1e-6, reference_full: Optional[complex] = None) -> LimitStudy:
    """Tabulate cut-off sums against ``int_{D_delta} f N`` and ``int_D f N``.

    The outer loop runs over ``delta`` and the inner over ``a`` so rows
    keep the iterated-limit order.
    """
    if not isinstance(f, SingularFunction):
        f = SingularFunction(f)
    if f.nu >= 3:
        raise AdmissibilityError("nu >= 3 is not admissible")
    a_sequence = list(a_sequence)
    if any(x <= y for x, y in zip(a_sequence, a_sequence[1:])):
        raise InputError("a_sequence must be decreasing")
    deltas = list(delta_sequence)
    if f.singular_set is not None and any(x <= y for x, y in zip(deltas, deltas[1:])):
        raise InputError("delta_sequence must be decreasing")
    N = field_from_config(N)

    divergent = f.singular_set is not None and f.nu >= f.singular_set.codim
    if reference_full is None:
        reference_full = np.inf if divergent else reference_integral(f, N, domain, 0.0, tol)
    study = LimitStudy(reference_full=reference_full)
    clouds = {a: generate_cloud(domain, N, h, a, kappa, placement=placement, seed=seed) for a in a_sequence}
    for delta in deltas:
        ref_cut = reference_full if delta == 0 else reference_integral(f, N, domain, delta, tol)
        study.references_cutoff[delta] = ref_cut
        for a in a_sequence:
            cloud = clouds[a]
            if f.singular_set is not None and delta > 0:
                used = int(np.count_nonzero(f.singular_set.distance(cloud.centers) >= delta))
            else:
                used = cloud.M
            value = cutoff_sum(f, cloud, delta)
            err_full = abs(value - reference_full) if np.isfinite(reference_full) else np.inf
            study.rows.append(StudyRow(delta, a, used, value, abs(value - ref_cut), err_full))
    return study
