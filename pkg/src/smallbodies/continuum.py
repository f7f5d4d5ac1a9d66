"""Limiting volume integral equation and the effective medium it describes.

Solves

    u(x) = u0(x) - 4 pi int_D G(x, y) h(y) c(y) N(y) u(y) dy

by a Nystrom scheme on a cell-centred grid.  Each cell integral of the
kernel is split into the static part ``1 / (4 pi r)``, integrated exactly
over the cube, and the smooth remainder ``(exp(ikr) - 1) / (4 pi r)``,
integrated by the midpoint rule.  The grid is translation invariant, so
operator products go through FFT convolution.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, gmres

from .greens import GreensKernel, box_inverse_distance_integral
from .medium import (
    Field, Grid, IncidentField, InputError, Medium, ScalarGridField, as_points, field_from_config,
    sample_speed,
)

logger = logging.getLogger(__name__)

NEAR_CELLS = 3
DIRECT_LIMIT = 6000
NODES_PER_WAVELENGTH = 8


class BornDivergence(RuntimeError):
    pass


class ContinuumSolveError(RuntimeError):
    pass


@dataclass
class ContinuumProblem:
    medium: Medium
    kernel: GreensKernel
    h: Field
    N: Field
    u0: IncidentField
    n: int = 16

    def __post_init__(self):
        self.h = field_from_config(self.h)
        self.N = field_from_config(self.N)
        if self.kernel.mode != "constant":
            raise InputError("the continuum solver needs a translation-invariant constant-speed kernel")
        self.grid = Grid.cell_centred(self.medium.domain, self.n)
        nodes = self.grid.nodes()
        self.active = self.medium.domain.contains(nodes)
        h_vals = np.zeros(self.grid.shape, dtype=complex)
        n_vals = np.zeros(self.grid.shape)
        h_vals[self.active] = self.h(nodes[self.active])
        n_vals[self.active] = np.real(self.N(nodes[self.active]))
        if np.any(h_vals.imag > 0):
            raise InputError("impedance must satisfy Im h <= 0 on the grid")
        if np.any(n_vals < 0):
            raise InputError("density must be nonnegative on the grid")
        self.speeds = sample_speed(self.medium, nodes)
        # c(y) is frozen at cell centres
        self.q = 4 * np.pi * h_vals * self.speeds * n_vals
        self.u0_values = self.u0(nodes, self.medium.k)

    @property
    def cell_fraction_error(self) -> float:
        """Relative mismatch between the covered cell volume and |D|."""
        covered = np.count_nonzero(self.active) * self.grid.cell_volume
        return abs(covered - self.medium.domain.volume()) / self.medium.domain.volume()


def cell_integrals(kernel: GreensKernel, spacing, offsets: np.ndarray) -> np.ndarray:
    """``int_cell G(0, y) dy`` for cells centred at ``offsets * spacing``."""
    spacing = np.asarray(spacing, dtype=float)
    centres = offsets * spacing
    r = np.linalg.norm(centres, axis=-1)
    vol = float(np.prod(spacing))
    near = np.max(np.abs(offsets), axis=-1) <= NEAR_CELLS
    static = np.empty(r.shape)
    static[near] = box_inverse_distance_integral(np.zeros(3), centres[near] - spacing / 2,
                                                 centres[near] + spacing / 2)
    far = ~near
    static[far] = vol / r[far]
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = np.where(r > 0, (np.exp(1j * kernel.k * r) - 1) / np.where(r > 0, r, 1), 1j * kernel.k)
    return kernel.strength * (static + vol * smooth) / (4 * np.pi)


class VolumeOperator:
    """``v -> int_D G(x_i, y) v(y) dy`` at every grid node, via FFT convolution."""

    def __init__(self, kernel: GreensKernel, grid: Grid):
        self.grid = grid
        shape = np.array(grid.shape)
        rng = [np.arange(-(n - 1), n) for n in shape]
        offs = np.stack(np.meshgrid(*rng, indexing="ij"), axis=-1)
        kvals = cell_integrals(kernel, grid.spacing, offs)
        self.fft_shape = tuple(2 * shape)
        padded = np.zeros(self.fft_shape, dtype=complex)
        idx = np.ix_(*[np.mod(r, 2 * n) for r, n in zip(rng, shape)])
        padded[idx] = kvals
        self._kernel_hat = scipy.fft.fftn(padded)
        self._kvals = kvals
        self._kernel = kernel

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = v.reshape(self.grid.shape)
        vhat = scipy.fft.fftn(v, s=self.fft_shape)
        conv = scipy.fft.ifftn(vhat * self._kernel_hat)
        nx, ny, nz = self.grid.shape
        return conv[:nx, :ny, :nz]

    def dense(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Explicit matrix between flat node indices ``rows`` and ``cols``."""
        shape = self.grid.shape
        ri = np.array(np.unravel_index(rows, shape)).T
        ci = np.array(np.unravel_index(cols, shape)).T
        diff = ri[:, None, :] - ci[None, :, :] + (np.array(shape) - 1)
        return self._kvals[diff[..., 0], diff[..., 1], diff[..., 2]]


@dataclass
class ContinuumSolution:
    u: ScalarGridField
    diagnostics: dict = field(default_factory=dict)
    quadrature: str = "exact static cell integrals + midpoint smooth remainder"
    problem: Optional[ContinuumProblem] = field(default=None, repr=False)

    def evaluate(self, points) -> np.ndarray:
        """Evaluate the integral representation at arbitrary points."""
        return represent(self.problem, self.u.values, points)


def represent(problem: ContinuumProblem, u: np.ndarray, points) -> np.ndarray:
    pts = as_points(points).reshape(-1, 3)
    grid = problem.grid
    act = problem.active & (problem.q != 0)
    nodes = grid.nodes()[act]
    dens = (problem.q * u.reshape(grid.shape))[act]
    sp = np.array(grid.spacing)
    vol = grid.cell_volume
    kernel = problem.kernel
    out = np.asarray(problem.u0(pts, problem.medium.k), dtype=complex).copy()
    if len(nodes) == 0:
        return out
    for start in range(0, len(pts), 64):
        chunk = pts[start:start + 64]
        d = nodes[None, :, :] - chunk[:, None, :]
        r = np.linalg.norm(d, axis=-1)
        near = np.max(np.abs(d) / sp, axis=-1) <= NEAR_CELLS + 0.5
        static = np.empty(r.shape)
        static[~near] = vol / r[~near]
        if np.any(near):
            ii, jj = np.nonzero(near)
            static[ii, jj] = box_inverse_distance_integral(chunk[ii], nodes[jj] - sp / 2, nodes[jj] + sp / 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            smooth = np.where(r > 0, (np.exp(1j * kernel.k * r) - 1) / np.where(r > 0, r, 1), 1j * kernel.k)
        g = kernel.strength * (static + vol * smooth) / (4 * np.pi)
        out[start:start + len(chunk)] -= g @ dens
    return out


def _check_resolution(problem: ContinuumProblem, nodes_per_wavelength: int) -> None:
    # local wave number of div(c^2 grad u) + (omega^2 - q) u = 0
    k_eff = float(np.max(np.sqrt(np.abs(problem.medium.omega**2 - problem.q)) / problem.speeds))
    per_wl = 2 * np.pi / (k_eff * max(problem.grid.spacing)) if k_eff > 0 else np.inf
    if per_wl < nodes_per_wavelength:
        warnings.warn(f"grid resolves only {per_wl:.1f} nodes per wavelength "
                      f"(< {nodes_per_wavelength})", stacklevel=3)


def solve_limit_equation(problem: ContinuumProblem, method: str = "direct", tol: float = 1e-10,
                         maxiter: int = 200, nodes_per_wavelength: int = NODES_PER_WAVELENGTH
                         ) -> ContinuumSolution:
    """Solve the limiting integral equation on the problem grid.

    Methods
    -------
    direct
        Dense LU on the nodes inside ``D`` (limited to a few thousand nodes).
    born
        Fixed-point iteration ``u <- u0 - K u``; stops at relative update
        ``tol`` or ``maxiter`` steps and raises on divergence.
    krylov
        GMRES with FFT-accelerated products.
    """
    _check_resolution(problem, nodes_per_wavelength)
    grid = problem.grid
    u0 = problem.u0_values.reshape(-1)
    q = problem.q.reshape(-1)
    op = VolumeOperator(problem.kernel, grid)
    diag: dict = {"method": method, "n": grid.shape, "cell_fraction_error": problem.cell_fraction_error}

    def apply_k(v):
        return op(q * v).reshape(-1)

    if not np.any(q):
        u = u0.copy()
        diag["residual"] = 0.0
    elif method == "direct":
        act = np.flatnonzero(q != 0)
        if len(act) > DIRECT_LIMIT:
            raise ContinuumSolveError(f"{len(act)} active nodes exceed the direct limit {DIRECT_LIMIT}; "
                                      "use method='krylov'")
        K = op.dense(act, act)
        A = np.eye(len(act), dtype=complex) + K * q[act][None, :]
        ua = scipy.linalg.solve(A, u0[act])
        u = u0.copy()
        u[act] = ua
        rest = np.setdiff1d(np.arange(grid.size), act)
        if len(rest):
            u[rest] = u0[rest] - op.dense(rest, act) @ (q[act] * ua)
    elif method == "born":
        u = u0.copy()
        prev = np.inf
        growth = 0
        history = []
        for it in range(1, maxiter + 1):
            new = u0 - apply_k(u)
            upd = np.linalg.norm(new - u) / max(np.linalg.norm(new), 1e-300)
            history.append(float(upd))
            u = new
            if upd <= tol:
                break
            growth = growth + 1 if upd > prev else 0
            if growth >= 5 or not np.isfinite(upd) or upd > 1e8:
                raise BornDivergence("Born iteration diverges (operator is not a contraction); "
                                     "use method='direct' or 'krylov'")
            prev = upd
        diag.update(iterations=it, update_history=history)
    elif method == "krylov":
        n = grid.size
        A = LinearOperator((n, n), matvec=lambda v: v + apply_k(v), dtype=complex)
        history: list = []
        u, info = gmres(A, u0, rtol=tol, atol=0.0, restart=60, maxiter=maxiter,
                        callback=lambda pr: history.append(float(pr)), callback_type="pr_norm")
        diag.update(iterations=len(history))
        if info != 0:
            raise ContinuumSolveError(f"GMRES did not converge (info={info})")
    else:
        raise InputError(f"unknown method {method!r}")

    res = np.linalg.norm(u + apply_k(u) - u0) / np.linalg.norm(u0)
    diag["residual"] = float(res)
    return ContinuumSolution(ScalarGridField(grid, u.reshape(grid.shape)), diag, problem=problem)


def effective_refraction(n0sq, h, N, k: float, x) -> np.ndarray:
    """``n^2(x) = n0^2(x) - 4 pi h(x) N(x) / k^2``.

    Each of ``n0sq, h, N`` may be a field (or config value) or an array of
    values already sampled at ``x``.
    """
    if not k > 0:
        raise InputError("wave number must be positive")
    x = as_points(x)
    vals = [f if isinstance(f, np.ndarray) else field_from_config(f)(x) for f in (n0sq, h, N)]
    return vals[0] - 4 * np.pi * vals[1] * vals[2] / k**2


# ---------------------------------------------------------------------------
# Differential operators on grid fields
# ---------------------------------------------------------------------------
def _node_speeds_sq(grid: Grid, medium: Medium) -> np.ndarray:
    return sample_speed(medium, grid.nodes()) ** 2


def apply_L0(gf: ScalarGridField, medium: Medium) -> ScalarGridField:
    """``div(c^2 grad u) + omega^2 u`` by conservative central differences.

    Face coefficients are harmonic means of the nodal ``c^2``; the result
    lives on the interior subgrid (one node trimmed per side).
    """
    grid = gf.grid
    if min(grid.shape) < 3:
        raise InputError("apply_L0 needs at least 3 nodes per axis")
    u = gf.values
    c2 = _node_speeds_sq(grid, medium)
    inner = (slice(1, -1),) * 3
    out = medium.omega**2 * u[inner]
    for ax in range(3):
        h2 = grid.spacing[ax] ** 2
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        mid = [slice(1, -1)] * 3
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        lo, hi, mid = tuple(lo), tuple(hi), tuple(mid)
        c_plus = 2 * c2[mid] * c2[hi] / (c2[mid] + c2[hi])
        c_minus = 2 * c2[mid] * c2[lo] / (c2[mid] + c2[lo])
        out = out + (c_plus * (u[hi] - u[mid]) - c_minus * (u[mid] - u[lo])) / h2
    return ScalarGridField(grid.subgrid(1), out)


def apply_L0_expanded(gf: ScalarGridField, medium: Medium) -> ScalarGridField:
    """Same operator written as ``c^2 lap u + grad(c^2) . grad u + omega^2 u``."""
    grid = gf.grid
    if min(grid.shape) < 3:
        raise InputError("apply_L0 needs at least 3 nodes per axis")
    u = gf.values
    c2 = _node_speeds_sq(grid, medium)
    inner = (slice(1, -1),) * 3
    lap = np.zeros(tuple(n - 2 for n in grid.shape), dtype=complex)
    grad_term = np.zeros_like(lap)
    for ax in range(3):
        h = grid.spacing[ax]
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        lo, hi = tuple(lo), tuple(hi)
        lap += (u[hi] - 2 * u[inner] + u[lo]) / h**2
        grad_term += (c2[hi] - c2[lo]) / (2 * h) * (u[hi] - u[lo]) / (2 * h)
    out = c2[inner] * lap + grad_term + medium.omega**2 * u[inner]
    return ScalarGridField(grid.subgrid(1), out)


def stencil_mask(problem: ContinuumProblem, margin: float = 0.0) -> np.ndarray:
    """Interior nodes whose 7-point stencil lies in D and that sit ``margin`` deep."""
    act = problem.active
    ok = act[1:-1, 1:-1, 1:-1].copy()
    for ax in range(3):
        for shift in (0, 2):
            sl = [slice(1, -1)] * 3
            sl[ax] = slice(shift, shift + act.shape[ax] - 2)
            ok &= act[tuple(sl)]
    if margin > 0:
        depth = problem.medium.domain.depth(problem.grid.subgrid(1).nodes())
        ok &= depth >= margin
    return ok


def pde_residual(solution: ContinuumSolution, problem: ContinuumProblem, margin: float = 0.0,
                 u: Optional[np.ndarray] = None) -> float:
    """RMS over interior nodes of ``div(c^2 grad u) + omega^2 u - 4 pi h c N u``."""
    values = solution.u.values if u is None else u.reshape(problem.grid.shape)
    mask = stencil_mask(problem, margin)
    if not np.any(mask):
        raise InputError("grid too coarse: no node has its stencil inside the domain")
    lu = apply_L0(ScalarGridField(problem.grid, values), problem.medium).values
    inner = (slice(1, -1),) * 3
    res = lu - problem.q[inner] * values[inner]
    return float(np.sqrt(np.mean(np.abs(res[mask]) ** 2)))
