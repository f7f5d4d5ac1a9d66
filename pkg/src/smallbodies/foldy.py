"""Foldy-type linear system for the effective field at particle centres.

The unknowns ``u_m`` (effective field at ``x_m``) solve

    u_m + 4 pi a^(2-kappa) sum_{m' != m} G(x_m, x_m') h_m' c_m' u_m' = u0(x_m),

the charges follow from ``Q_m = -4 pi h_m c_m a^(2-kappa) u_m`` (or the
refined form with the ``1 + zeta_m a`` denominator) and the field away
from the particles is ``u(x) = u0(x) + sum_m G(x, x_m) Q_m``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, gmres

from .cloud import ParticleCloud
from .greens import GreensKernel
from .medium import IncidentField, InputError, Medium, as_points, sample_speed

logger = logging.getLogger(__name__)

DIRECT_LIMIT = 8000
BLOCK_ROWS = 512


class AssemblyError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateImpedance(ZeroDivisionError):
    pass


@dataclass
class FoldySystem:
    """``(I + G W) u = rhs`` with ``W = diag(4 pi a^(2-kappa) h c)`` and zero-diagonal ``G``.

    ``matrix`` is ``None`` for matrix-free systems; products then
    re-evaluate the kernel block by block.
    """

    centers: np.ndarray
    coupling: np.ndarray
    rhs: np.ndarray
    kernel: GreensKernel
    speeds: np.ndarray
    matrix: Optional[np.ndarray] = None

    @property
    def M(self) -> int:
        return len(self.rhs)

    @property
    def matrix_free(self) -> bool:
        return self.matrix is None

    def matvec(self, u: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ u
        wu = self.coupling * u
        out = np.array(u, dtype=complex)
        for start in range(0, self.M, BLOCK_ROWS):
            stop = min(start + BLOCK_ROWS, self.M)
            out[start:stop] += _kernel_block(self.kernel, self.centers, start, stop) @ wu
        return out

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return np.eye(self.M, dtype=complex) + self.kernel.matrix(self.centers) * self.coupling[None, :]


def _kernel_block(kernel, centers, start, stop):
    xs = centers[start:stop]
    d = xs[:, None, :] - centers[None, :, :]
    r = np.linalg.norm(d, axis=-1)
    rows = np.arange(stop - start)
    r[rows, rows + start] = 1.0
    g = kernel._from_displacement(np.broadcast_to(xs[:, None, :], d.shape), d, r)
    g[rows, rows + start] = 0.0
    return g


@dataclass(frozen=True)
class FoldySolution:
    u: np.ndarray
    Q: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("m,re_u,im_u,re_Q,im_Q\n")
            for m, (u, q) in enumerate(zip(self.u, self.Q)):
                fh.write(f"{m},{u.real:.17g},{u.imag:.17g},{q.real:.17g},{q.imag:.17g}\n")

    @classmethod
    def from_csv(cls, path) -> "FoldySolution":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4])


def assemble(cloud: ParticleCloud, medium: Medium, kernel: GreensKernel, u0: IncidentField,
             matrix_free: Optional[bool] = None, direct_limit: int = DIRECT_LIMIT) -> FoldySystem:
    """Build the Foldy system for ``cloud``; dense up to ``direct_limit`` particles."""
    centers = cloud.centers
    if cloud.M > 1 and cloud.min_distance() == 0:
        raise AssemblyError("coincident particle centres")
    speeds = sample_speed(medium, centers) if cloud.M else np.zeros(0)
    coupling = 4 * np.pi * cloud.weight * cloud.h_values * speeds
    rhs = u0(centers, medium.k) if cloud.M else np.zeros(0, complex)
    if matrix_free is None:
        matrix_free = cloud.M > direct_limit
    system = FoldySystem(centers, coupling, np.asarray(rhs, dtype=complex), kernel, speeds)
    if not matrix_free and cloud.M:
        system.matrix = system.dense()
    return system


def _residual(system, u):
    norm_b = np.linalg.norm(system.rhs)
    r = np.linalg.norm(system.matvec(u) - system.rhs)
    return r / norm_b if norm_b > 0 else r


def solve(system: FoldySystem, method: str = "direct", tol: Optional[float] = None,
          maxiter: int = 500, precondition: bool = False) -> FoldySolution:
    """Solve the Foldy system.

    ``direct`` uses a dense LU factorisation; ``iterative`` runs GMRES on
    the (possibly matrix-free) operator.  The default relative residual
    tolerance is ``1e-10`` for direct and ``1e-8`` for iterative solves.
    """
    M = system.M
    if M == 0:
        return FoldySolution(np.zeros(0, complex), np.zeros(0, complex), {"method": method, "residual": 0.0})
    if method == "direct":
        tol = 1e-10 if tol is None else tol
        A = system.dense()
        if not np.all(system.coupling == 0):
            lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
            diag = np.abs(np.diag(lu))
            pivot_ratio = float(diag.min() / diag.max())
            if pivot_ratio < 1e-14:
                cond = float(np.linalg.cond(A))
                raise SolverError("Foldy matrix is numerically singular",
                                  {"pivot_ratio": pivot_ratio, "condition": cond})
            u = scipy.linalg.lu_solve((lu, piv), system.rhs)
        else:
            pivot_ratio = 1.0
            u = system.rhs.copy()
        diagnostics = {"method": "direct", "pivot_ratio": pivot_ratio}
    elif method == "iterative":
        tol = 1e-8 if tol is None else tol
        history: list[float] = []
        op = LinearOperator((M, M), matvec=system.matvec, dtype=complex)
        prec = None
        if precondition:
            # diagonal is identically one for this system; kept for interface parity
            prec = LinearOperator((M, M), matvec=lambda v: v, dtype=complex)
        u, info = gmres(op, system.rhs, rtol=tol * 0.1, atol=0.0, restart=min(M, 100), maxiter=maxiter,
                        M=prec, callback=lambda pr: history.append(float(pr)), callback_type="pr_norm")
        diagnostics = {"method": "iterative", "iterations": len(history), "residual_history": history}
        if info != 0:
            raise SolverError(f"GMRES did not converge (info={info})", diagnostics)
    else:
        raise InputError(f"unknown solve method {method!r}")

    res = _residual(system, u)
    diagnostics["residual"] = float(res)
    diagnostics["omitted"] = "laplacian of effective field times |D_m| (O(a^3))"
    if not res <= tol:
        raise SolverError(f"relative residual {res:.3e} exceeds tolerance {tol:.1e}", diagnostics)
    Q = -system.coupling * u
    return FoldySolution(u, Q, diagnostics)


def charges(solution: FoldySolution, cloud: ParticleCloud, medium: Medium,
            mode: str = "asymptotic") -> np.ndarray:
    """Charges ``Q_m`` from the effective field values.

    asymptotic: ``Q_m = -4 pi h_m c_m a^(2-kappa) u_m``
    refined:    ``Q_m = -4 pi zeta_m c_m a^2 u_m / (1 + zeta_m a)``
    """
    if cloud.M == 0:
        return np.zeros(0, complex)
    c = sample_speed(medium, cloud.centers)
    u = solution.u
    if mode == "asymptotic":
        return -4 * np.pi * cloud.h_values * c * cloud.weight * u
    if mode == "refined":
        zeta = cloud.zeta
        denom = 1 + zeta * cloud.a
        if np.any(denom == 0):
            bad = int(np.flatnonzero(denom == 0)[0])
            raise DegenerateImpedance(f"1 + zeta a vanishes at particle {bad}")
        return -4 * np.pi * zeta * c * cloud.a**2 * u / denom
    raise InputError(f"unknown charge mode {mode!r}")


@dataclass(frozen=True)
class FieldEvaluation:
    values: np.ndarray
    valid: np.ndarray

    @property
    def rejected(self) -> np.ndarray:
        return np.flatnonzero(~self.valid)


def evaluate_field(solution: FoldySolution, cloud: ParticleCloud, kernel: GreensKernel,
                   u0: IncidentField, points, Q: Optional[np.ndarray] = None) -> FieldEvaluation:
    """``u(x) = u0(x) + sum_m G(x, x_m) Q_m`` at points farther than ``a`` from every centre.

    Points inside a particle (distance ``<= a``) get ``nan`` and
    ``valid = False``; the others are still evaluated.
    """
    pts = as_points(points).reshape(-1, 3)
    Q = solution.Q if Q is None else Q
    values = np.full(len(pts), np.nan + 0j)
    if cloud.M:
        from scipy.spatial import cKDTree

        dist, _ = cKDTree(cloud.centers).query(pts)
        valid = dist > cloud.a
    else:
        valid = np.ones(len(pts), dtype=bool)
    good = pts[valid]
    u = u0(good, kernel.k) if len(good) else np.zeros(0, complex)
    for start in range(0, len(good), BLOCK_ROWS):
        chunk = good[start:start + BLOCK_ROWS]
        if cloud.M:
            u[start:start + len(chunk)] += kernel.matrix(chunk, cloud.centers) @ Q
    values[valid] = u
    return FieldEvaluation(values, valid)


def neglected_term_bound(cloud: ParticleCloud, solution: FoldySolution, kernel: GreensKernel, point,
                         m: Optional[int] = None) -> float:
    """Diagnostic proxy ``(a / |x - x_m|) |G(x, x_m) Q_m|`` for the discarded surface term.

    ``m`` defaults to the particle nearest to ``point``.
    """
    x = as_points(point)
    if m is None:
        m = int(np.argmin(np.linalg.norm(cloud.centers - x, axis=-1)))
    r = float(np.linalg.norm(x - cloud.centers[m]))
    if r <= 2 * cloud.a:
        raise InputError("probe point must be farther than 2a from the particle")
    return float(cloud.a / r * abs(kernel(x, cloud.centers[m]) * solution.Q[m]))
