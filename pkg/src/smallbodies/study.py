"""Particle field versus limiting continuum field, over a sequence of radii."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from . import foldy
from .cloud import ParticleCloud, audit_regime, generate_cloud
from .continuum import ContinuumProblem, ContinuumSolution, solve_limit_equation
from .greens import GreensKernel
from .medium import Domain, IncidentField, Medium, field_from_config

logger = logging.getLogger(__name__)


def probe_points(domain: Domain, n_interior: int = 64, n_exterior: int = 16) -> np.ndarray:
    """Unscrambled Halton points inside ``domain`` followed by an exterior ring.

    The ring lies in the horizontal plane through the domain centre at
    0.75 times the bounding-box diagonal.
    """
    lo, hi = domain.bounds()
    sampler = qmc.Halton(d=3, scramble=False)
    sampler.fast_forward(1)
    pts = np.zeros((0, 3))
    while len(pts) < n_interior:
        cand = lo + sampler.random(4 * n_interior) * (hi - lo)
        pts = np.vstack([pts, cand[domain.depth(cand) > 0]])
    pts = pts[:n_interior]
    angles = 2 * np.pi * np.arange(n_exterior) / max(n_exterior, 1)
    radius = 0.75 * domain.diameter()
    ring = domain.center() + radius * np.stack([np.cos(angles), np.sin(angles), np.zeros_like(angles)], axis=-1)
    return np.vstack([pts, ring])


def usable_probes(points: np.ndarray, cloud: ParticleCloud, clearance: float = 3.0) -> np.ndarray:
    """Mask of probes farther than ``clearance * a`` from every centre."""
    if cloud.M == 0:
        return np.ones(len(points), dtype=bool)
    dist, _ = cKDTree(cloud.centers).query(points)
    return dist > clearance * cloud.a


@dataclass
class CompareRow:
    a: float
    M: int
    n_probes: int
    max_rel_discrepancy: float
    mean_rel_discrepancy: float
    audit_passed: bool
    runtime: float = field(default=0.0, compare=False)


@dataclass
class CompareResult:
    rows: list
    probes: np.ndarray
    continuum: Optional[ContinuumSolution] = None
    particle_fields: dict = field(default_factory=dict)

    def discrepancies(self) -> list:
        return [r.max_rel_discrepancy for r in self.rows]

    def monotone(self, noise: float = 0.0) -> bool:
        d = self.discrepancies()
        return all(b <= a * (1 + noise) for a, b in zip(d, d[1:]))

    def to_csv(self, path) -> None:
        # runtimes are kept out of the table so reruns are byte-identical
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "M", "n_probes", "max_rel_discrepancy", "mean_rel_discrepancy", "audit_passed"])
            for r in self.rows:
                w.writerow([f"{r.a:.17g}", r.M, r.n_probes, f"{r.max_rel_discrepancy:.17g}",
                            f"{r.mean_rel_discrepancy:.17g}", int(r.audit_passed)])


def compare_limit(medium: Medium, kernel: GreensKernel, u0: IncidentField, h, N, kappa: float,
                  a_sequence: Sequence[float], grid_n: int = 24, continuum_method: str = "krylov",
                  solver: str = "direct", placement: str = "jitter", jitter: float = 0.25, seed: int = 0,
                  n_interior: int = 64, n_exterior: int = 16, jobs: int = 1,
                  probes: Optional[np.ndarray] = None) -> CompareResult:
    """For each ``a``: cloud, Foldy solve, field at probes, compared with the continuum solution."""
    h = field_from_config(h)
    N = field_from_config(N)
    probes = probe_points(medium.domain, n_interior, n_exterior) if probes is None else np.asarray(probes)
    problem = ContinuumProblem(medium, kernel, h, N, u0, grid_n)
    cont = solve_limit_equation(problem, continuum_method)
    cont_values = cont.evaluate(probes)

    def one(a):
        t0 = time.perf_counter()
        cloud = generate_cloud(medium.domain, N, h, a, kappa, placement=placement, jitter=jitter, seed=seed)
        system = foldy.assemble(cloud, medium, kernel, u0)
        sol = foldy.solve(system, solver)
        mask = usable_probes(probes, cloud)
        ev = foldy.evaluate_field(sol, cloud, kernel, u0, probes[mask])
        rel = np.abs(ev.values - cont_values[mask]) / np.abs(cont_values[mask])
        audit = audit_regime(cloud, medium)
        row = CompareRow(a, cloud.M, int(mask.sum()), float(rel.max()) if len(rel) else 0.0,
                         float(rel.mean()) if len(rel) else 0.0, audit.passed, time.perf_counter() - t0)
        logger.info("a=%g M=%d max rel discrepancy %.3e", a, cloud.M, row.max_rel_discrepancy)
        return row, (mask, ev.values)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, a_sequence))
    else:
        results = [one(a) for a in a_sequence]
    return CompareResult([r for r, _ in results], probes, cont,
                         {a: fv for a, (_, fv) in zip(a_sequence, results)})
