"""Background medium, incident fields and grid-sampled scalar fields.

The medium is described by a bounded domain ``D``, the exterior speed
``c0``, an interior speed profile ``c(x)`` and the angular frequency
``omega``.  The wave number is always derived, ``k = omega / c0``.

All point arguments are arrays whose last axis has length 3; functions
broadcast over the leading axes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class InputError(ValueError):
    """Raised for malformed or non-finite inputs."""


def as_points(x) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.shape[-1:] != (3,):
        raise InputError(f"points must have a trailing axis of length 3, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InputError("non-finite coordinate")
    return pts


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------
class Domain:
    """Base class for bounded convex domains."""

    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    def volume(self) -> float:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def depth(self, x) -> np.ndarray:
        """Distance from ``x`` to the boundary, positive inside, negative outside."""
        raise NotImplementedError

    def ray_interval(self, origin, direction) -> tuple[np.ndarray, np.ndarray]:
        """Parameters ``(t0, t1)`` where ``origin + t * direction`` is inside.

        Empty intersections are returned with ``t0 > t1``.
        """
        raise NotImplementedError

    def diameter(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def center(self) -> np.ndarray:
        lo, hi = self.bounds()
        return 0.5 * (lo + hi)

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Box(Domain):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise InputError("box corners must be 3-vectors")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise InputError("non-finite box corner")
        if np.any(hi <= lo):
            raise InputError(f"box corners not strictly ordered: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", tuple(lo.tolist()))
        object.__setattr__(self, "hi", tuple(hi.tolist()))

    def contains(self, x) -> np.ndarray:
        x = as_points(x)
        lo, hi = self.bounds()
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def volume(self) -> float:
        lo, hi = self.bounds()
        return float(np.prod(hi - lo))

    def bounds(self):
        return np.array(self.lo), np.array(self.hi)

    def depth(self, x) -> np.ndarray:
        x = as_points(x)
        lo, hi = self.bounds()
        inner = np.minimum(x - lo, hi - x)
        inside = np.all(inner >= 0, axis=-1)
        outside = np.linalg.norm(np.maximum(0.0, np.maximum(lo - x, x - hi)), axis=-1)
        return np.where(inside, inner.min(axis=-1), -outside)

    def ray_interval(self, origin, direction):
        origin = np.asarray(origin, dtype=float)
        direction = np.asarray(direction, dtype=float)
        lo, hi = self.bounds()
        with np.errstate(divide="ignore", invalid="ignore"):
            t_a = (lo - origin) / direction
            t_b = (hi - origin) / direction
        t_min = np.minimum(t_a, t_b)
        t_max = np.maximum(t_a, t_b)
        # axis-parallel rays: inside the slab -> unbounded, outside -> empty
        par = direction == 0
        in_slab = (origin >= lo) & (origin <= hi)
        t_min = np.where(par, np.where(in_slab, -np.inf, np.inf), t_min)
        t_max = np.where(par, np.where(in_slab, np.inf, -np.inf), t_max)
        return t_min.max(axis=-1), t_max.min(axis=-1)

    def to_config(self) -> dict:
        return {"box": {"lo": list(self.lo), "hi": list(self.hi)}}


@dataclass(frozen=True)
class Ball(Domain):
    center_point: tuple
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center_point, dtype=float)
        if c.shape != (3,) or not np.all(np.isfinite(c)):
            raise InputError("ball center must be a finite 3-vector")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InputError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center_point", tuple(c.tolist()))
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, x) -> np.ndarray:
        x = as_points(x)
        return np.linalg.norm(x - np.array(self.center_point), axis=-1) <= self.radius

    def volume(self) -> float:
        return 4.0 / 3.0 * np.pi * self.radius**3

    def bounds(self):
        c = np.array(self.center_point)
        return c - self.radius, c + self.radius

    def diameter(self) -> float:
        return 2.0 * self.radius

    def depth(self, x) -> np.ndarray:
        x = as_points(x)
        return self.radius - np.linalg.norm(x - np.array(self.center_point), axis=-1)

    def ray_interval(self, origin, direction):
        origin = np.asarray(origin, dtype=float)
        direction = np.asarray(direction, dtype=float)
        oc = origin - np.array(self.center_point)
        a = np.sum(direction * direction, axis=-1)
        b = np.sum(oc * direction, axis=-1)
        c = np.sum(oc * oc, axis=-1) - self.radius**2
        disc = b * b - a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        t0 = np.where(disc >= 0, (-b - root) / a, np.inf)
        t1 = np.where(disc >= 0, (-b + root) / a, -np.inf)
        return t0, t1

    def to_config(self) -> dict:
        return {"ball": {"center": list(self.center_point), "radius": self.radius}}


def domain_from_config(cfg: dict) -> Domain:
    if not isinstance(cfg, dict) or len(cfg) != 1:
        raise InputError("domain must be a mapping with exactly one of 'box' or 'ball'")
    (kind, params), = cfg.items()
    if kind == "box":
        return Box(tuple(params["lo"]), tuple(params["hi"]))
    if kind == "ball":
        return Ball(tuple(params.get("center", (0.0, 0.0, 0.0))), float(params["radius"]))
    raise InputError(f"unknown domain kind {kind!r}")


# ---------------------------------------------------------------------------
# Scalar fields (speed profiles, densities, impedance functions)
# ---------------------------------------------------------------------------
class Field:
    """A scalar function of position, evaluated vectorised over points."""

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def maximum_abs(self, domain: Domain, n: int = 24) -> float:
        pts = sample_points(domain, n)
        return float(np.max(np.abs(self(pts)))) if len(pts) else 0.0

    def to_config(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Field):
    value: complex

    def __call__(self, x):
        x = as_points(x)
        v = self.value
        dtype = complex if isinstance(v, complex) else float
        return np.full(x.shape[:-1], v, dtype=dtype)

    def to_config(self):
        return _scalar_to_config(self.value)


@dataclass(frozen=True)
class Piecewise(Field):
    """Piecewise-constant field: the first region containing ``x`` wins."""

    regions: tuple  # ((Box, value), ...)
    default: complex = 0.0

    def __call__(self, x):
        x = as_points(x)
        values = [v for _, v in self.regions] + [self.default]
        dtype = complex if any(isinstance(v, complex) for v in values) else float
        out = np.full(x.shape[:-1], self.default, dtype=dtype)
        done = np.zeros(x.shape[:-1], dtype=bool)
        for box, value in self.regions:
            hit = box.contains(x) & ~done
            out[hit] = value
            done |= hit
        return out

    def to_config(self):
        return {
            "piecewise": {
                "regions": [
                    {"lo": list(b.lo), "hi": list(b.hi), "value": _scalar_to_config(v)}
                    for b, v in self.regions
                ],
                "default": _scalar_to_config(self.default),
            }
        }


_EXPR_NAMESPACE = {
    name: getattr(np, name)
    for name in (
        "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "arctan",
        "arctan2", "where", "minimum", "maximum", "pi", "real", "imag", "heaviside",
    )
}


@dataclass(frozen=True)
class Expression(Field):
    """Closed-form field written in terms of ``x, y, z`` (and ``r = |x|``)."""

    expr: str

    def __post_init__(self):
        try:
            code = compile(self.expr, "<field>", "eval")
        except SyntaxError as exc:
            raise InputError(f"bad field expression {self.expr!r}: {exc}") from None
        for name in code.co_names:
            if name not in _EXPR_NAMESPACE and name not in ("x", "y", "z", "r", "j"):
                raise InputError(f"unknown name {name!r} in field expression {self.expr!r}")
        object.__setattr__(self, "_code", code)

    def __call__(self, x):
        x = as_points(x)
        env = dict(_EXPR_NAMESPACE)
        env.update(x=x[..., 0], y=x[..., 1], z=x[..., 2], r=np.linalg.norm(x, axis=-1))
        val = eval(self._code, {"__builtins__": {}}, env)  # noqa: S307 - names whitelisted above
        return np.broadcast_to(np.asarray(val), x.shape[:-1]).copy()

    def to_config(self):
        return {"expr": self.expr}


@dataclass(frozen=True)
class FunctionField(Field):
    """Wraps a user callable ``f(points) -> values``; not serialisable."""

    func: Callable
    label: str = "callable"

    def __call__(self, x):
        x = as_points(x)
        return np.asarray(self.func(x))

    def to_config(self):
        return {"callable": self.label}


def _scalar_to_config(v):
    if isinstance(v, complex):
        return repr(v).strip("()") if v.imag else float(v.real)
    return float(v)


def parse_scalar(v) -> complex | float:
    """Parse a config scalar; strings such as ``"-0.05j"`` become complex."""
    if isinstance(v, bool):
        raise InputError(f"expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, complex):
        return v
    if isinstance(v, str):
        try:
            c = complex(v.replace(" ", ""))
        except ValueError:
            raise InputError(f"cannot parse number {v!r}") from None
        return c if c.imag else float(c.real)
    raise InputError(f"expected a number, got {v!r}")


def field_from_config(cfg) -> Field:
    """Build a field from a scalar, ``{expr: ...}`` or ``{piecewise: ...}``."""
    if isinstance(cfg, Field):
        return cfg
    if callable(cfg):
        return FunctionField(cfg)
    if not isinstance(cfg, dict):
        return Constant(parse_scalar(cfg))
    if set(cfg) == {"constant"}:
        return Constant(parse_scalar(cfg["constant"]))
    if set(cfg) == {"expr"}:
        return Expression(str(cfg["expr"]))
    if set(cfg) == {"piecewise"}:
        p = cfg["piecewise"]
        unknown = set(p) - {"regions", "default"}
        if unknown:
            raise InputError(f"unknown piecewise keys {sorted(unknown)}")
        regions = tuple(
            (Box(tuple(r["lo"]), tuple(r["hi"])), parse_scalar(r["value"])) for r in p.get("regions", [])
        )
        return Piecewise(regions, parse_scalar(p.get("default", 0.0)))
    raise InputError(f"cannot interpret field description {cfg!r}")


def sample_points(domain: Domain, n: int) -> np.ndarray:
    """Cell-centred ``n**3`` lattice over the bounding box, restricted to ``domain``."""
    lo, hi = domain.bounds()
    axes = [lo[i] + (np.arange(n) + 0.5) * (hi[i] - lo[i]) / n for i in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return pts[domain.contains(pts)]


def integrate_field(f: Field, domain: Domain, n: int = 64) -> float:
    """Integral of a field over ``domain``.

    Constants are integrated exactly; anything else uses a midpoint rule
    on an ``n**3`` lattice.
    """
    if isinstance(f, Constant):
        return float(np.real(f.value)) * domain.volume()
    lo, hi = domain.bounds()
    cell = np.prod((hi - lo) / n)
    pts = sample_points(domain, n)
    return float(np.real(np.sum(f(pts)))) * cell


# ---------------------------------------------------------------------------
# Medium
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Medium:
    """Domain, exterior speed ``c0``, interior speed profile and frequency."""

    domain: Domain
    c0: float = 1.0
    speed: Field = field(default_factory=lambda: Constant(1.0))
    omega: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.c0) and self.c0 > 0):
            raise InputError(f"c0 must be positive, got {self.c0}")
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise InputError(f"omega must be positive, got {self.omega}")

    @property
    def k(self) -> float:
        return self.omega / self.c0

    @property
    def is_homogeneous(self) -> bool:
        return isinstance(self.speed, Constant) and float(np.real(self.speed.value)) == self.c0

    def to_config(self) -> dict:
        return {
            "domain": self.domain.to_config(),
            "c0": self.c0,
            "speed": self.speed.to_config(),
            "omega": self.omega,
        }


def sample_speed(medium: Medium, x) -> np.ndarray:
    """Sound speed ``c(x)``; equals ``c0`` outside the domain."""
    x = as_points(x)
    inside = medium.domain.contains(x)
    c = np.full(x.shape[:-1], medium.c0, dtype=float)
    if np.any(inside):
        vals = np.real(np.asarray(medium.speed(x[inside]), dtype=complex))
        if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
            raise InputError("speed profile must be finite and strictly positive")
        c[inside] = vals
    return c


# ---------------------------------------------------------------------------
# Incident fields
# ---------------------------------------------------------------------------
class IncidentField:
    """Incident field ``u0``; evaluated with the exterior wave number ``k``."""

    def __call__(self, x, k: float) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x, k: float) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PlaneWave(IncidentField):
    direction: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(d)
        if d.shape != (3,) or not np.isfinite(norm) or norm == 0:
            raise InputError("plane-wave direction must be a nonzero 3-vector")
        object.__setattr__(self, "direction", tuple((d / norm).tolist()))

    def __call__(self, x, k):
        x = as_points(x)
        return np.exp(1j * k * (x @ np.array(self.direction)))

    def gradient(self, x, k):
        alpha = np.array(self.direction)
        return 1j * k * alpha * self(x, k)[..., None]

    def to_config(self):
        return {"plane_wave": {"direction": list(self.direction)}}


@dataclass(frozen=True)
class PointSource(IncidentField):
    """Outgoing spherical wave ``exp(ik|x-y0|) / (4 pi |x-y0|)``."""

    source: tuple

    def __call__(self, x, k):
        x = as_points(x)
        r = np.linalg.norm(x - np.array(self.source), axis=-1)
        if np.any(r == 0):
            raise InputError("point source evaluated at its own location")
        return np.exp(1j * k * r) / (4 * np.pi * r)

    def gradient(self, x, k):
        x = as_points(x)
        d = x - np.array(self.source)
        r = np.linalg.norm(d, axis=-1)
        g = np.exp(1j * k * r) / (4 * np.pi * r)
        return (g * (1j * k - 1 / r) / r)[..., None] * d

    def to_config(self):
        return {"point_source": {"position": list(self.source)}}


@dataclass(frozen=True)
class SampledIncident(IncidentField):
    """User-supplied incident field ``func(points, k)``."""

    func: Callable
    grad: Optional[Callable] = None

    def __call__(self, x, k):
        return np.asarray(self.func(as_points(x), k), dtype=complex)

    def gradient(self, x, k):
        if self.grad is None:
            raise NotImplementedError("no gradient supplied for this incident field")
        return np.asarray(self.grad(as_points(x), k), dtype=complex)

    def to_config(self):
        return {"sampled": "callable"}


def incident_eval(u0: IncidentField, medium: Medium, x) -> np.ndarray:
    return u0(x, medium.k)


def incident_from_config(cfg: dict) -> IncidentField:
    if not isinstance(cfg, dict) or len(cfg) != 1:
        raise InputError("incident must have exactly one of 'plane_wave' or 'point_source'")
    (kind, p), = cfg.items()
    if kind == "plane_wave":
        return PlaneWave(tuple(p.get("direction", (0.0, 0.0, 1.0))))
    if kind == "point_source":
        return PointSource(tuple(p["position"]))
    raise InputError(f"unknown incident kind {kind!r}")


# ---------------------------------------------------------------------------
# Grids and grid fields
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid: node ``(i, j, l)`` sits at ``origin + (i, j, l) * spacing``."""

    origin: tuple
    spacing: tuple
    shape: tuple

    def __post_init__(self):
        sp = np.asarray(self.spacing, dtype=float)
        if np.any(sp <= 0):
            raise InputError(f"grid spacing must be positive, got {sp}")
        if len(self.shape) != 3 or any(int(n) < 1 for n in self.shape):
            raise InputError(f"bad grid shape {self.shape}")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in sp))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))

    @classmethod
    def cell_centred(cls, domain: Domain, n) -> "Grid":
        """Nodes at the centres of an ``n``-per-axis partition of the bounding box."""
        n = np.broadcast_to(np.asarray(n, dtype=int), (3,))
        lo, hi = domain.bounds()
        h = (hi - lo) / n
        return cls(tuple(lo + h / 2), tuple(h), tuple(n))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [self.origin[i] + np.arange(self.shape[i]) * self.spacing[i] for i in range(3)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (3,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def subgrid(self, pad: int) -> "Grid":
        shape = tuple(n - 2 * pad for n in self.shape)
        if min(shape) < 1:
            raise InputError("grid too small for the requested padding")
        origin = tuple(o + pad * h for o, h in zip(self.origin, self.spacing))
        return Grid(origin, self.spacing, shape)


_DUMP_MAGIC = b"SBGF"


@dataclass(frozen=True)
class ScalarGridField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.size != self.grid.size:
            raise InputError(f"{v.size} values for a grid of {self.grid.size} nodes")
        object.__setattr__(self, "values", v.reshape(self.grid.shape))

    def to_csv(self, path) -> None:
        pts = self.grid.nodes().reshape(-1, 3)
        vals = self.values.reshape(-1)
        write_point_csv(path, pts, vals)

    @classmethod
    def from_csv(cls, path) -> "ScalarGridField":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        pts, vals = data[:, :3], data[:, 3] + 1j * data[:, 4]
        axes = [np.unique(pts[:, i]) for i in range(3)]
        shape = tuple(len(a) for a in axes)
        spacing = tuple((a[1] - a[0]) if len(a) > 1 else 1.0 for a in axes)
        grid = Grid(tuple(a[0] for a in axes), spacing, shape)
        # rows were written in C order over (i, j, l)
        return cls(grid, vals.reshape(shape))

    def to_binary(self, path) -> None:
        """Little-endian dump: magic, 3 x int64 dims, origin, spacing, then (re, im) pairs."""
        header = _DUMP_MAGIC + struct.pack("<3q", *self.grid.shape)
        header += struct.pack("<6d", *self.grid.origin, *self.grid.spacing)
        body = np.ascontiguousarray(self.values.reshape(-1)).astype("<c16").tobytes()
        with open(path, "wb") as fh:
            fh.write(header + body)

    @classmethod
    def from_binary(cls, path) -> "ScalarGridField":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != _DUMP_MAGIC:
            raise InputError(f"{path}: not a grid-field dump")
        shape = struct.unpack_from("<3q", raw, 4)
        geom = struct.unpack_from("<6d", raw, 28)
        vals = np.frombuffer(raw, dtype="<c16", offset=76)
        return cls(Grid(geom[:3], geom[3:], shape), vals.copy())


def write_point_csv(path, points, values, valid=None) -> None:
    """CSV with columns ``x,y,z,re,im`` (plus ``valid`` when given); ``%.17g`` keeps values bit-exact."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    values = np.asarray(values, dtype=complex).reshape(-1)
    flags = None if valid is None else np.asarray(valid, dtype=bool).reshape(-1)
    with open(path, "w") as fh:
        fh.write("x,y,z,re,im" + (",valid" if flags is not None else "") + "\n")
        for i, (p, v) in enumerate(zip(points, values)):
            line = f"{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{v.real:.17g},{v.imag:.17g}"
            if flags is not None:
                line += f",{int(flags[i])}"
            fh.write(line + "\n")
