"""Green's function of ``L0 = div(c^2 grad) + omega^2`` and its local forms.

For a constant speed ``c0`` everywhere the distributional solution of
``L0 G = -delta`` is

    G(x, y) = exp(ik|x-y|) / (4 pi c0^2 |x-y|),

while the near-singularity law used for variable speed carries strength
``1 / (4 pi |x-y| c(x))``.  Both normalisations are available; they agree
when ``c0 = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .medium import InputError, Medium, ScalarGridField, as_points, sample_speed

FOUR_PI = 4.0 * np.pi
MODES = ("constant", "singular", "table")
NORMALIZATIONS = ("distributional", "inverse-speed")


class SingularityError(ValueError):
    """Kernel evaluated at coincident points."""


@dataclass(frozen=True)
class KernelTable:
    """Translation-invariant kernel sampled on a grid of displacements ``x - y``."""

    samples: ScalarGridField

    def __post_init__(self):
        axes = self.samples.grid.axes()
        interp = RegularGridInterpolator(axes, self.samples.values, method="linear", bounds_error=True)
        object.__setattr__(self, "_interp", interp)

    @property
    def min_distance(self) -> float:
        return 2.0 * max(self.samples.grid.spacing)

    def __call__(self, d: np.ndarray) -> np.ndarray:
        try:
            return self._interp(d.reshape(-1, 3)).reshape(d.shape[:-1])
        except ValueError as exc:
            raise InputError(f"displacement outside the kernel table: {exc}") from None

    @classmethod
    def load(cls, path) -> "KernelTable":
        return cls(ScalarGridField.from_binary(path))


@dataclass(frozen=True)
class GreensKernel:
    """Evaluates ``G(x, y)``.

    Modes
    -----
    constant
        Closed form for constant background speed ``c0``.
    singular
        Leading near-field law ``exp(ikr) / (4 pi r c(x))`` with ``c``
        sampled from ``speed`` (defaults to ``c0``).
    table
        Trilinear interpolation of a sampled translation-invariant kernel;
        below twice the sample spacing the leading near-field law is used.
    """

    k: float
    c0: float = 1.0
    mode: str = "constant"
    normalization: str = "distributional"
    speed: Optional[Callable] = None
    table: Optional[KernelTable] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown kernel mode {self.mode!r}")
        if self.normalization not in NORMALIZATIONS:
            raise InputError(f"unknown normalization {self.normalization!r}")
        if not (self.k >= 0 and self.c0 > 0):
            raise InputError("kernel needs k >= 0 and c0 > 0")
        if self.mode == "table" and self.table is None:
            raise InputError("table mode requires a KernelTable")

    @classmethod
    def from_medium(cls, medium: Medium, mode: str = "constant", normalization: str = "distributional",
                    table: Optional[KernelTable] = None) -> "GreensKernel":
        speed = None
        if mode == "singular":
            speed = lambda x: sample_speed(medium, x)  # noqa: E731
        return cls(medium.k, medium.c0, mode, normalization, speed, table)

    @property
    def strength(self) -> float:
        """Coefficient of ``1 / (4 pi r)`` in the constant-speed form."""
        return 1.0 / self.c0**2 if self.normalization == "distributional" else 1.0 / self.c0

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = x - y
        r = np.linalg.norm(d, axis=-1)
        if np.any(r == 0):
            raise SingularityError("G(x, y) evaluated at x = y")
        return self._from_displacement(x, d, r)

    def _from_displacement(self, x, d, r):
        if self.mode == "constant":
            return self.strength * np.exp(1j * self.k * r) / (FOUR_PI * r)
        if self.mode == "singular":
            c = self.c0 if self.speed is None else self.speed(np.broadcast_to(x, d.shape))
            scale = 1.0 / c**2 if self.normalization == "distributional" else 1.0 / c
            return scale * np.exp(1j * self.k * r) / (FOUR_PI * r)
        near = r < self.table.min_distance
        out = np.empty(r.shape, dtype=complex)
        out[near] = self.strength / (FOUR_PI * r[near])
        if np.any(~near):
            out[~near] = self.table(d[~near])
        return out

    def matrix(self, xs, ys=None) -> np.ndarray:
        """Dense ``G(xs[i], ys[j])``; with ``ys`` omitted the diagonal is zero and never evaluated."""
        xs = np.asarray(xs, dtype=float)
        same = ys is None
        ys = xs if same else np.asarray(ys, dtype=float)
        d = xs[:, None, :] - ys[None, :, :]
        r = np.linalg.norm(d, axis=-1)
        if same:
            np.fill_diagonal(r, 1.0)
        if np.any(r == 0):
            raise SingularityError("coincident points in kernel matrix")
        g = self._from_displacement(np.broadcast_to(xs[:, None, :], d.shape), d, r)
        if same:
            np.fill_diagonal(g, 0.0)
        return g


def green_eval(kernel: GreensKernel, x, y) -> np.ndarray:
    return kernel(x, y)


def green_near_singularity(kernel: GreensKernel, x, y, c_at_x) -> np.ndarray:
    """Leading term ``1 / (4 pi |x-y| c(x))`` of the Green's function."""
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    if np.any(r == 0):
        raise SingularityError("near-singularity form evaluated at x = y")
    c = np.asarray(c_at_x, dtype=float)
    if np.any(c <= 0):
        raise InputError("speed must be positive")
    return 1.0 / (FOUR_PI * r * c)


# ---------------------------------------------------------------------------
# Interface asymptotics near a discontinuity surface of c
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class InterfaceAsymptotics:
    """Local two-sided law near a point of the discontinuity surface.

    Coordinates are in the local frame: origin on the surface, third axis
    along the normal, the domain ``D`` on the side ``x3 > 0``.
    """

    c_plus: float
    c_minus: float

    def __post_init__(self):
        if not (self.c_plus > 0 and self.c_minus > 0):
            raise InputError("interface speeds must be positive")

    @property
    def b(self) -> float:
        # reflection coefficient; see notes on the printed (degenerate) ratio
        return (self.c_plus - self.c_minus) / (self.c_plus + self.c_minus)

    @staticmethod
    def distances(x, y) -> tuple[np.ndarray, np.ndarray]:
        """``(r_xy, R)`` with ``R = sqrt(rho^2 + (|x3| + |y3|)^2)``."""
        x = as_points(x)
        y = as_points(y)
        rho2 = (x[..., 0] - y[..., 0]) ** 2 + (x[..., 1] - y[..., 1]) ** 2
        r = np.sqrt(rho2 + (x[..., 2] - y[..., 2]) ** 2)
        big_r = np.sqrt(rho2 + (np.abs(x[..., 2]) + np.abs(y[..., 2])) ** 2)
        return r, big_r


def green_interface(asym: InterfaceAsymptotics, x, y, side: str) -> np.ndarray:
    """Leading two-sided asymptotics; ``side`` says whether ``y`` is ``inside`` D or ``outside``."""
    r, big_r = asym.distances(x, y)
    if np.any(r == 0):
        raise SingularityError("interface form evaluated at x = y")
    if side == "inside":
        return (1.0 / r + asym.b / big_r) / (FOUR_PI * asym.c_plus)
    if side == "outside":
        return (1.0 / r - asym.b / big_r) / (FOUR_PI * asym.c_minus)
    raise InputError(f"side must be 'inside' or 'outside', got {side!r}")


# ---------------------------------------------------------------------------
# Static box potential
# ---------------------------------------------------------------------------
def _log_sum(u, r, rest2):
    """``log(u + r)`` with ``r = sqrt(u^2 + rest2)``, stable for negative ``u``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = np.log(np.where(u >= 0, u + r, 1.0))
        neg = np.log(np.where(u < 0, rest2 / (r - u), 1.0))
    return np.where(u >= 0, pos, neg)


def _corner_primitive(x, y, z):
    r = np.sqrt(x * x + y * y + z * z)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (
            np.where(x * y != 0, x * y * _log_sum(z, r, x * x + y * y), 0.0)
            + np.where(y * z != 0, y * z * _log_sum(x, r, y * y + z * z), 0.0)
            + np.where(z * x != 0, z * x * _log_sum(y, r, z * z + x * x), 0.0)
            - np.where(x != 0, 0.5 * x * x * np.arctan(y * z / (x * r)), 0.0)
            - np.where(y != 0, 0.5 * y * y * np.arctan(z * x / (y * r)), 0.0)
            - np.where(z != 0, 0.5 * z * z * np.arctan(x * y / (z * r)), 0.0)
        )
    return t


def box_inverse_distance_integral(x, lo, hi) -> np.ndarray:
    """Exact ``int_box dy / |x - y|`` for axis-aligned boxes ``[lo, hi]``.

    ``x`` may lie inside, on, or outside the box; arguments broadcast.
    """
    x = np.asarray(x, dtype=float)
    lo = np.asarray(lo, dtype=float) - x
    hi = np.asarray(hi, dtype=float) - x
    total = 0.0
    for ix, sx in ((hi[..., 0], 1), (lo[..., 0], -1)):
        for iy, sy in ((hi[..., 1], 1), (lo[..., 1], -1)):
            for iz, sz in ((hi[..., 2], 1), (lo[..., 2], -1)):
                total = total + sx * sy * sz * _corner_primitive(ix, iy, iz)
    return total


CUBE_SELF_INTEGRAL = 3.0 * np.log(2.0 + np.sqrt(3.0)) - np.pi / 2.0
"""``int dy / |y|`` over the unit cube centred at the origin."""
