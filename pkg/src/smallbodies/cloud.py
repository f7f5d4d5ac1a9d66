"""Particle clouds obeying the counting law ``#(Delta) ~ a^(kappa-2) int_Delta N``.

Centres are placed on a near-uniform lattice whose cells have volume
about ``a^(2-kappa) / N``; cell occupancy is chosen by systematic
rounding of the expected counts along a Hilbert curve through the
lattice, so the total is exactly ``round(a^(kappa-2) int_D N)`` and empty
cells are spread evenly in every neighbourhood.  By default each centre
is then moved by a seeded offset of at most a quarter cell per axis;
pure-lattice and Poisson-disk modes are also available.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .medium import Constant, Domain, Field, InputError, Medium, field_from_config, integrate_field

logger = logging.getLogger(__name__)

PLACEMENTS = ("lattice", "jitter", "poisson")


class RegimeViolation(ValueError):
    """The requested configuration cannot keep the balls disjoint."""


@dataclass(frozen=True)
class ParticleCloud:
    centers: np.ndarray
    a: float
    kappa: float
    h_values: np.ndarray
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        h = np.asarray(self.h_values, dtype=complex).reshape(-1)
        if len(c) != len(h):
            raise InputError("one impedance value per centre is required")
        if not self.a > 0:
            raise InputError(f"radius must be positive, got {self.a}")
        if np.any(h.imag > 0):
            raise InputError("impedance must satisfy Im h <= 0")
        c.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "h_values", h)

    @property
    def M(self) -> int:
        return len(self.centers)

    @property
    def zeta(self) -> np.ndarray:
        return self.h_values / self.a**self.kappa

    @property
    def weight(self) -> float:
        """Riemann weight ``a^(2 - kappa)`` carried by each particle."""
        return self.a ** (2.0 - self.kappa)

    def min_distance(self) -> float:
        if self.M < 2:
            return np.inf
        d, _ = cKDTree(self.centers).query(self.centers, k=2)
        return float(d[:, 1].min())

    def permuted(self, perm) -> "ParticleCloud":
        perm = np.asarray(perm)
        return ParticleCloud(self.centers[perm], self.a, self.kappa, self.h_values[perm], self.params)

    def to_csv(self, path, sidecar: bool = True) -> None:
        """Columns ``m,x,y,z,re_h,im_h``; a JSON sidecar records generation parameters."""
        with open(path, "w") as fh:
            fh.write("m,x,y,z,re_h,im_h\n")
            for m, (p, h) in enumerate(zip(self.centers, self.h_values)):
                fh.write(f"{m},{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{h.real:.17g},{h.imag:.17g}\n")
        if sidecar:
            meta = {"a": self.a, "kappa": self.kappa, "M": self.M, **self.params}
            with open(str(path) + ".json", "w") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True, default=str)

    @classmethod
    def from_csv(cls, path) -> "ParticleCloud":
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        a, kappa = meta.pop("a"), meta.pop("kappa")
        meta.pop("M", None)
        return cls(data[:, 1:4], a, kappa, data[:, 4] + 1j * data[:, 5], meta)


def _check_kappa(kappa: float) -> None:
    if not 0.0 <= kappa <= 1.0:
        raise InputError(f"kappa must lie in (0, 1), got {kappa}")
    if kappa in (0.0, 1.0):
        warnings.warn(f"kappa = {kappa} is an endpoint value; the asymptotic regime needs 0 < kappa < 1",
                      stacklevel=3)


def expected_count(domain: Domain, N: Field, a: float, kappa: float) -> float:
    return a ** (kappa - 2.0) * integrate_field(N, domain)


def _hilbert_index(coords: np.ndarray, bits: int) -> np.ndarray:
    """Position along a 3-D Hilbert curve of nonnegative integer coordinates (Skilling's transpose)."""
    X = np.array(coords, dtype=np.int64).T.copy()
    q = 1 << (bits - 1)
    while q > 1:
        p = q - 1
        for i in range(3):
            hi = (X[i] & q) != 0
            X[0] = np.where(hi, X[0] ^ p, X[0])
            t = np.where(hi, 0, (X[0] ^ X[i]) & p)
            X[0] ^= t
            X[i] ^= t
        q >>= 1
    for i in range(1, 3):
        X[i] ^= X[i - 1]
    t = np.zeros_like(X[0])
    q = 1 << (bits - 1)
    while q > 1:
        t = np.where((X[2] & q) != 0, t ^ (q - 1), t)
        q >>= 1
    X ^= t
    index = np.zeros(X.shape[1], dtype=np.int64)
    for b in range(bits - 1, -1, -1):
        for i in range(3):
            index = (index << 1) | ((X[i] >> b) & 1)
    return index


def _hilbert_order(shape) -> np.ndarray:
    """Flat indices of a lattice of the given shape, sorted along a Hilbert curve."""
    idx = np.stack(np.meshgrid(*(np.arange(n) for n in shape), indexing="ij"), axis=-1).reshape(-1, 3)
    bits = max(1, int(np.ceil(np.log2(max(shape)))))
    return np.argsort(_hilbert_index(idx, bits), kind="stable")


def _lattice_cells(domain: Domain, N: Field, a: float, cell_volume: float, target: int):
    """Find a lattice whose occupancy weights all stay <= 1 and pick occupied cells."""
    lo, hi = domain.bounds()
    ext = hi - lo
    n = np.maximum(1, np.floor(ext / cell_volume ** (1.0 / 3.0))).astype(int)
    for _ in range(10_000):
        h = ext / n
        if h.min() < 2 * a:
            raise RegimeViolation(
                f"lattice spacing {h.min():.3g} below particle diameter {2 * a:.3g}; "
                "radius too large for the requested density"
            )
        axes = [lo[i] + (np.arange(n[i]) + 0.5) * h[i] for i in range(3)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        pts = pts[_hilbert_order(tuple(n))]
        pts = pts[domain.depth(pts) >= a]
        dens = np.clip(np.real(N(pts)), 0.0, None) if len(pts) else np.zeros(0)
        total = dens.sum()
        if total == 0 or target == 0:
            return pts[:0], h
        w = dens * target / total
        if w.max() <= 1.0 + 1e-12:
            cum = np.cumsum(w)
            picks = np.floor(cum + 0.5) > np.floor(np.concatenate([[0.0], cum[:-1]]) + 0.5)
            return pts[picks], h
        n[np.argmax(h)] += 1
    raise RegimeViolation("could not build a lattice for the requested density")


def _poisson_disk(domain: Domain, N: Field, a: float, target: int, spacing: float, rng,
                  max_attempts: int) -> np.ndarray:
    """Dart throwing with density-proportional acceptance."""
    lo, hi = domain.bounds()
    n_max = N.maximum_abs(domain)
    r_min = max(2 * a, 0.6 * spacing)
    cell = r_min / np.sqrt(3)
    buckets: dict = {}
    pts = []
    attempts = 0
    while len(pts) < target:
        attempts += 1
        if attempts > max_attempts:
            raise RegimeViolation(f"Poisson-disk placement stalled after {len(pts)} of {target} particles")
        p = lo + rng.random(3) * (hi - lo)
        if domain.depth(p) < a:
            continue
        if rng.random() * n_max > float(np.real(N(p))):
            continue
        key = tuple((p // cell).astype(int))
        reach = int(np.ceil(r_min / cell))
        ok = True
        for di in range(-reach, reach + 1):
            for dj in range(-reach, reach + 1):
                for dk in range(-reach, reach + 1):
                    q = buckets.get((key[0] + di, key[1] + dj, key[2] + dk))
                    if q is not None and np.linalg.norm(q - p) < r_min:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            buckets[key] = p
            pts.append(p)
    return np.array(pts).reshape(-1, 3)


def generate_cloud(domain: Domain, N, h, a: float, kappa: float, placement: str = "jitter",
                   jitter: float = 0.25, seed: int = 0) -> ParticleCloud:
    """Place ``round(a^(kappa-2) int_D N)`` balls of radius ``a`` in ``domain``.

    Parameters
    ----------
    domain : Domain
    N : Field or config value
        Nonnegative density.
    h : Field, callable or config value
        Impedance function with ``Im h <= 0``; sampled at the centres.
    a, kappa : float
        Radius and exponent; ``zeta_m = h(x_m) / a^kappa``.
    placement : {"lattice", "jitter", "poisson"}
    jitter : float
        Maximum jitter as a fraction of the local cell size (``<= 0.25``),
        used by the ``jitter`` placement.
    seed : int
        Seed for jitter and Poisson-disk placement.
    """
    N = field_from_config(N)
    h = field_from_config(h)
    _check_kappa(kappa)
    if not a > 0:
        raise InputError(f"radius must be positive, got {a}")
    if placement not in PLACEMENTS:
        raise InputError(f"unknown placement {placement!r}")
    if not 0 <= jitter <= 0.25:
        raise InputError("jitter fraction must lie in [0, 0.25]")

    n_peak = N.maximum_abs(domain)
    target = int(round(expected_count(domain, N, a, kappa)))
    params = {"placement": placement, "seed": seed, "target_M": target,
              "jitter": jitter if placement == "jitter" else 0.0}
    if target == 0 or n_peak == 0:
        return ParticleCloud(np.zeros((0, 3)), a, kappa, np.zeros(0, complex), params)
    cell_volume = a ** (2.0 - kappa) / n_peak
    rng = np.random.default_rng(seed)

    if placement == "poisson":
        centers = _poisson_disk(domain, N, a, target, cell_volume ** (1 / 3), rng, 200 * target + 10_000)
    else:
        centers, spacing = _lattice_cells(domain, N, a, cell_volume, target)
        if placement == "jitter" and jitter > 0:
            offsets = (rng.random(centers.shape) * 2 - 1) * jitter * spacing
            moved = centers + offsets
            # keep balls inside D; undo offsets that would push a ball out
            bad = domain.depth(moved) < a
            moved[bad] = centers[bad]
            # lattice sites are disjoint, so reverting clashing pairs terminates
            while len(moved) > 1:
                pairs = cKDTree(moved).query_pairs(2 * a, output_type="ndarray")
                if not len(pairs):
                    break
                clash = np.unique(pairs)
                moved[clash] = centers[clash]
            centers = moved
    if len(centers) != target:
        logger.debug("placed %d of %d particles", len(centers), target)

    h_vals = np.asarray(h(centers), dtype=complex) if len(centers) else np.zeros(0, complex)
    cloud = ParticleCloud(centers, a, kappa, h_vals, params)
    if cloud.min_distance() < 2 * a:
        raise RegimeViolation("generated balls overlap")
    return cloud


def count_in_subdomain(cloud: ParticleCloud, delta: Domain) -> int:
    if cloud.M == 0:
        return 0
    return int(np.count_nonzero(delta.contains(cloud.centers)))


@dataclass
class RegimeReport:
    ka: float
    min_distance: float
    d_scale: float
    spacing_ratio: float
    max_zeta_a: float
    ka_ok: bool
    disjoint: bool
    spacing_ok: bool
    zeta_a_ok: bool
    impedance_sign_ok: bool

    @property
    def passed(self) -> bool:
        return self.ka_ok and self.disjoint and self.spacing_ok and self.zeta_a_ok and self.impedance_sign_ok

    def as_dict(self) -> dict:
        out = {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in vars(self).items()}
        out["passed"] = self.passed
        return out


def audit_regime(cloud: ParticleCloud, medium: Medium, ka_threshold: float = 0.1,
                 spacing_constant: float = 0.25, zeta_a_threshold: float = 0.5) -> RegimeReport:
    """Check ``ka << 1``, disjointness, ``d >= c_d a^((2-kappa)/3)`` and ``|zeta| a = o(1)``.

    Failures are reported in the returned record, never raised.
    """
    ka = medium.k * cloud.a
    d_min = cloud.min_distance()
    d_scale = cloud.a ** ((2.0 - cloud.kappa) / 3.0)
    ratio = d_min / d_scale
    zeta_a = float(np.max(np.abs(cloud.h_values))) * cloud.a ** (1.0 - cloud.kappa) if cloud.M else 0.0
    return RegimeReport(
        ka=ka,
        min_distance=d_min,
        d_scale=d_scale,
        spacing_ratio=ratio,
        max_zeta_a=zeta_a,
        ka_ok=ka < ka_threshold,
        disjoint=d_min >= 2 * cloud.a,
        spacing_ok=ratio >= spacing_constant,
        zeta_a_ok=zeta_a < zeta_a_threshold,
        impedance_sign_ok=bool(np.all(cloud.h_values.imag <= 0)),
    )
