"""Independent checks for the small-body asymptotics.

* Exact separation-of-variables solution for plane-wave scattering by a
  single ball with the impedance condition ``du/dr = zeta u`` at ``r = a``.
* Numerical surface quadratures of the single-layer identities on a
  sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss, legval
from scipy import special

from .medium import InputError


class ImpedanceResonance(ArithmeticError):
    pass


def _h1(l, z, derivative=False):
    return special.spherical_jn(l, z, derivative) + 1j * special.spherical_yn(l, z, derivative)


@dataclass(frozen=True)
class SphereScatteringSeries:
    """Scattered field ``sum_l A_l h_l(kr) P_l(cos theta)`` for incidence along +z.

    The incident wave is ``exp(ikz) = sum_l i^l (2l+1) j_l(kr) P_l(cos theta)``.
    """

    a: float
    zeta: complex
    k: float
    l_max: int
    coefficients: np.ndarray

    def incident_modes(self) -> np.ndarray:
        l = np.arange(self.l_max + 1)
        return (1j**l) * (2 * l + 1)

    def field(self, r, cos_theta) -> np.ndarray:
        """Total field ``u0 + scattered`` at radius ``r`` and polar cosine."""
        r = np.asarray(r, dtype=float)
        ct = np.asarray(cos_theta, dtype=float)
        l = np.arange(self.l_max + 1)
        kr = self.k * r[..., None]
        radial = self.incident_modes() * special.spherical_jn(l, kr) + self.coefficients * _h1(l, kr)
        return _legendre_sum(radial, ct)

    def radial_derivative(self, r, cos_theta) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        ct = np.asarray(cos_theta, dtype=float)
        l = np.arange(self.l_max + 1)
        kr = self.k * r[..., None]
        radial = self.k * (self.incident_modes() * special.spherical_jn(l, kr, True)
                           + self.coefficients * _h1(l, kr, True))
        return _legendre_sum(radial, ct)

    def scattered(self, r, cos_theta) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        l = np.arange(self.l_max + 1)
        return _legendre_sum(self.coefficients * _h1(l, self.k * r[..., None]), np.asarray(cos_theta))

    def truncation_ratio(self) -> float:
        mags = np.abs(self.coefficients)
        return float(mags[-1] / mags.max()) if mags.max() > 0 else 0.0

    def mode_residuals(self) -> np.ndarray:
        """Per-mode mismatch of ``du/dr - zeta u`` at ``r = a``, relative to the mode size."""
        l = np.arange(self.l_max + 1)
        ka = self.k * self.a
        inc = self.incident_modes()
        du = self.k * (inc * special.spherical_jn(l, ka, True) + self.coefficients * _h1(l, ka, True))
        u = inc * special.spherical_jn(l, ka) + self.coefficients * _h1(l, ka)
        scale = np.abs(self.k * inc * special.spherical_jn(l, ka, True)) + np.abs(self.zeta * inc
                                                                                   * special.spherical_jn(l, ka))
        return np.abs(du - self.zeta * u) / np.where(scale > 0, scale, 1.0)


def _legendre_sum(radial, ct):
    # sum_l radial[..., l] P_l(ct), via the three-term recurrence
    n = radial.shape[-1]
    p_prev = np.ones_like(ct)
    total = radial[..., 0] * p_prev
    if n == 1:
        return total
    p = ct.copy()
    total = total + radial[..., 1] * p
    for l in range(1, n - 1):
        p_prev, p = p, ((2 * l + 1) * ct * p - l * p_prev) / (l + 1)
        total = total + radial[..., l + 1] * p
    return total


def solve_sphere_exact(a: float, zeta: complex, k: float, l_max: int | None = None) -> SphereScatteringSeries:
    """Mode-matched series for a ball of radius ``a`` with ``du/dr = zeta u`` on its surface.

    ``l_max`` defaults to ``10 + 2 ka`` rounded up, grown until the last
    coefficient is below ``1e-12`` of the largest.
    """
    if not (a > 0 and k > 0):
        raise InputError("need a > 0 and k > 0")
    ka = k * a
    l_max = int(np.ceil(10 + 2 * ka)) if l_max is None else max(int(l_max), int(np.ceil(10 + 2 * ka)))
    while True:
        l = np.arange(l_max + 1)
        num = k * special.spherical_jn(l, ka, True) - zeta * special.spherical_jn(l, ka)
        den = k * _h1(l, ka, True) - zeta * _h1(l, ka)
        if np.any(den == 0) or np.any(~np.isfinite(den)):
            bad = int(np.flatnonzero((den == 0) | ~np.isfinite(den))[0])
            raise ImpedanceResonance(f"modal denominator vanishes at l = {bad}")
        coeffs = -(1j**l) * (2 * l + 1) * num / den
        series = SphereScatteringSeries(a, zeta, k, l_max, coeffs)
        if series.truncation_ratio() <= 1e-12 or l_max > 400:
            return series
        l_max *= 2


def extract_monopole_charge(series: SphereScatteringSeries) -> complex:
    """Charge ``Q`` whose monopole ``G(x, 0) Q`` reproduces the scattered l = 0 part.

    With ``G = exp(ikr) / (4 pi r)`` and ``h_0(kr) = exp(ikr) / (ikr)``,
    ``A_0 h_0(kr) = G Q`` gives ``Q = 4 pi A_0 / (ik)``.
    """
    return complex(4 * np.pi * series.coefficients[0] / (1j * series.k))


def monopole_by_projection(series: SphereScatteringSeries, radius: float, order: int = 64) -> complex:
    """Same charge obtained by averaging the scattered field over a sphere of given radius."""
    x, w = leggauss(order)
    avg = 0.5 * np.sum(w * series.scattered(np.full_like(x, radius), x))
    g = np.exp(1j * series.k * radius) / (4 * np.pi * radius)
    return complex(avg / g)


# ---------------------------------------------------------------------------
# Surface identities
# ---------------------------------------------------------------------------
def _frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``n`` to an orthonormal frame."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def _sphere_rule(order: int):
    """Gauss-Legendre in ``theta`` on [0, pi] times uniform azimuth; returns (theta, phi, weight)."""
    x, w = leggauss(order)
    theta = 0.5 * np.pi * (x + 1)
    wt = 0.5 * np.pi * w
    n_phi = 2 * order
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = (wt * np.sin(theta))[:, None] * np.full(n_phi, 2 * np.pi / n_phi)[None, :]
    return T.ravel(), P.ravel(), W.ravel()


def _rotated_sphere(a: float, pole: np.ndarray, order: int):
    """Quadrature nodes on the sphere of radius ``a`` (centre 0) with the rule's pole at ``pole``."""
    n = pole / np.linalg.norm(pole)
    e1, e2 = _frame(n)
    T, P, W = _sphere_rule(order)
    dirs = (np.cos(T)[:, None] * n + np.sin(T)[:, None] * (np.cos(P)[:, None] * e1 + np.sin(P)[:, None] * e2))
    return a * dirs, a * a * W


def single_layer_sphere_identity(a: float, t, order: int = 16) -> float:
    """Numerical value of ``int_S ds / (4 pi |s - t|)`` for ``t`` on the sphere ``|t| = a``.

    The quadrature pole is rotated onto ``t`` so the integrand stays bounded.
    """
    t = np.asarray(t, dtype=float)
    if not np.isclose(np.linalg.norm(t), a, rtol=1e-12, atol=0.0):
        raise InputError("t must lie on the sphere of radius a")
    s, w = _rotated_sphere(a, t, order)
    r = np.linalg.norm(s - t, axis=-1)
    return float(np.sum(w / (4 * np.pi * r)))


def normal_derivative_double_integral(a: float, density=1.0, order: int = 16, c_m: float = 1.0,
                                      outer_order: int | None = None) -> float:
    """``(2 / c_m) int_S ds int_S d/dN_s (1 / (4 pi r_st)) sigma(t) dt`` on a sphere of radius ``a``.

    The factor 2 makes the exterior normal-derivative jump read
    ``(A sigma - sigma / c) / 2``; the direct value of the inner integral
    is ``-sigma / 2`` per unit density on a sphere.
    """
    sigma = density if callable(density) else (lambda pts, v=density: np.full(len(pts), float(v)))
    outer_order = order if outer_order is None else outer_order
    s_nodes, s_w = _rotated_sphere(a, np.array([0.0, 0.0, a]), outer_order)
    total = 0.0
    for s, ws in zip(s_nodes, s_w):
        n_s = s / a
        t_nodes, t_w = _rotated_sphere(a, s, order)
        d = s - t_nodes
        r = np.linalg.norm(d, axis=-1)
        dkernel = -(d @ n_s) / (4 * np.pi * r**3)
        total += ws * np.sum(t_w * dkernel * sigma(t_nodes))
    return 2.0 * total / c_m


def normal_derivative_layer_identity(a: float, density: float = 1.0, order: int = 16, c_m: float = 1.0) -> float:
    """Ratio of the double integral to ``-Q / c_m`` with ``Q = 4 pi a^2 sigma``; tends to 1."""
    q = 4 * np.pi * a * a * float(density)
    return normal_derivative_double_integral(a, density, order, c_m) / (-q / c_m)
