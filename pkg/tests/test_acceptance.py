"""Acceptance gate: one test per criterion, each logging a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed in the "acceptance criteria" section at the end of the session.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from smallbodies import oracle
from smallbodies.cli import main as cli_main
from smallbodies.cloud import ParticleCloud, generate_cloud
from smallbodies.continuum import ContinuumProblem, effective_refraction, pde_residual, solve_limit_equation
from smallbodies.design import design_material, feasibility_samples
from smallbodies.foldy import assemble, solve
from smallbodies.greens import GreensKernel
from smallbodies.limits import PointSet, SingularFunction, limit_study, reference_integral
from smallbodies.medium import Ball, Box, Constant, Expression, Medium, PlaneWave
from smallbodies.study import compare_limit

UNIT_CUBE = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def _log(log, number, name, ok, detail, elapsed, budget):
    ok = ok and elapsed < budget
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} {name}: {detail} ({elapsed:.1f} s of {budget:g} s)"
    log.append(line)
    print(line)
    return ok


def test_criterion_1_surface_identities(acceptance_log):
    t0 = time.perf_counter()
    single = {a: oracle.single_layer_sphere_identity(a, np.array([0.0, 0.0, a])) for a in (1.0, 0.5)}
    normal = oracle.normal_derivative_layer_identity(1.0)
    ok = all(abs(v / a - 1) <= 1e-3 for a, v in single.items()) and abs(normal - 1) <= 1e-3
    detail = (", ".join(f"S(a={a:g})={v:.12f}" for a, v in single.items())
              + f", normal-derivative ratio={normal:.12f}")
    assert _log(acceptance_log, 1, "quadrature identities", ok, detail, time.perf_counter() - t0, 10)


def test_criterion_2_riemann_sums_on_ball(acceptance_log):
    t0 = time.perf_counter()
    f = SingularFunction(lambda x: 1.0 / np.linalg.norm(x, axis=-1), PointSet((0.0, 0.0, 0.0)), nu=1.0, c=1.0)
    ball = Ball((0.0, 0.0, 0.0), 1.0)
    quadrature = reference_integral(f, 1.0, ball)
    study = limit_study(f, 1.0, ball, 0.5, [0.04, 0.02, 0.01], reference_full=2 * np.pi)
    errors = [r.error_full / (2 * np.pi) for r in study.rows]
    strictly = all(b < a for a, b in zip(errors, errors[1:]))
    quad_ok = abs(quadrature - 2 * np.pi) <= 1e-6 * 2 * np.pi
    ok = strictly and errors[-1] <= 0.05 and quad_ok
    detail = (f"relative errors {', '.join(f'{e:.4f}' for e in errors)}; "
              f"adaptive reference {quadrature.real:.9f} vs 2 pi")
    assert _log(acceptance_log, 2, "Riemann-sum limit", ok, detail, time.perf_counter() - t0, 120)


def test_criterion_3_single_sphere_charge(acceptance_log):
    t0 = time.perf_counter()
    h, kappa, k = 1.0, 0.5, 1.0
    devs = []
    for a in (1e-2, 5e-3, 2.5e-3):
        zeta = h / a**kappa
        q_exact = oracle.extract_monopole_charge(oracle.solve_sphere_exact(a, zeta, k))
        q_refined = -4 * np.pi * zeta * a * a / (1 + zeta * a)
        devs.append(abs(q_exact / q_refined - 1))
    ok = all(b < a for a, b in zip(devs, devs[1:])) and devs[-1] <= 0.02
    detail = "deviations " + ", ".join(f"{d:.3e}" for d in devs)
    assert _log(acceptance_log, 3, "single-sphere charge", ok, detail, time.perf_counter() - t0, 30)


@pytest.mark.slow
def test_criterion_4_limit_equation_convergence(acceptance_log):
    t0 = time.perf_counter()
    medium = Medium(UNIT_CUBE)
    kernel = GreensKernel.from_medium(medium)
    result = compare_limit(medium, kernel, PlaneWave((0.0, 0.0, 1.0)), -0.05j, 1.0, 0.5, [0.02, 0.01, 0.005],
                           solver="direct")
    d = result.discrepancies()
    probes = min(r.n_probes for r in result.rows)
    ok = result.monotone() and d[-1] <= 0.05 and probes >= 50
    detail = (f"M={[r.M for r in result.rows]}, probes>={probes}, "
              f"max rel discrepancy {', '.join(f'{x:.5f}' for x in d)}")
    assert _log(acceptance_log, 4, "limit-equation convergence", ok, detail, time.perf_counter() - t0, 600)


def test_criterion_5_continuum_self_consistency(acceptance_log):
    t0 = time.perf_counter()
    medium = Medium(UNIT_CUBE)
    kernel = GreensKernel.from_medium(medium)
    u0 = PlaneWave((0.0, 0.0, 1.0))
    residuals = []
    for n in (8, 16, 32):
        problem = ContinuumProblem(medium, kernel, Constant(-0.05j), Constant(1.0), u0, n)
        residuals.append(pde_residual(solve_limit_equation(problem, "krylov"), problem, margin=0.2))
    orders = np.log2(np.array(residuals[:-1]) / np.array(residuals[1:]))

    problem = ContinuumProblem(medium, kernel, Constant(-0.05j), Constant(1.0), u0, 12)
    direct = solve_limit_equation(problem, "direct").u.values
    born = solve_limit_equation(problem, "born", tol=1e-13, maxiter=500).u.values
    gap = float(np.max(np.abs(born - direct)) / np.max(np.abs(direct)))

    ok = bool(np.all(orders >= 1)) and gap <= 1e-8
    detail = (f"residuals {', '.join(f'{r:.3e}' for r in residuals)}, orders "
              f"{', '.join(f'{o:.2f}' for o in orders)}, Born vs direct {gap:.1e}")
    assert _log(acceptance_log, 5, "continuum self-consistency", ok, detail, time.perf_counter() - t0, 120)


def test_criterion_6_design_round_trip(acceptance_log):
    t0 = time.perf_counter()
    domain = UNIT_CUBE
    pts = feasibility_samples(domain, 10_000)
    worst = 0.0
    cases = [
        ("fixed-density", dict(N0=3.0), Constant(1.0), Expression("1 + 0.3*sin(3*x) + 0.2j*(1 + y*y)")),
        ("fixed-density", dict(), Expression("1 + 0.5*z"), Expression("0.8 + 0.5*z + 0.1j*exp(-x)")),
        ("fixed-h", dict(h0=-0.5j), Constant(1.0), Expression("1 + 0.25j*(1 + x*y*z)")),
    ]
    for strategy, extra, n0sq, target in cases:
        recipe = design_material(n0sq, target, 1.7, domain, strategy, **extra)
        achieved = effective_refraction(n0sq, recipe.h_values(pts), recipe.N_values(pts), recipe.k, pts)
        worst = max(worst, float(np.max(np.abs(achieved - target(pts)))))
    ok = worst <= 1e-12
    detail = f"max pointwise error {worst:.2e} over {len(pts)} samples and {len(cases)} targets"
    assert _log(acceptance_log, 6, "design round-trip", ok, detail, time.perf_counter() - t0, 5)


def _mirror_cloud(rng, h):
    # mirror across the plane z = 0.5 of the unit cube
    half = np.column_stack([rng.uniform(0.1, 0.9, 20), rng.uniform(0.1, 0.9, 20), rng.uniform(0.1, 0.4, 20)])
    centers = np.vstack([half, half * [1, 1, -1] + [0, 0, 1]])
    return ParticleCloud(centers, 0.01, 0.5, np.full(len(centers), h))


def test_criterion_7_invariant_suites(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    medium = Medium(UNIT_CUBE)
    kernel = GreensKernel.from_medium(medium)
    checks = {}

    # zero coupling
    u0 = PlaneWave((0.3, -0.2, 1.0))
    cloud0 = generate_cloud(UNIT_CUBE, 1.0, 0.0, 0.02, 0.5)
    sol0 = solve(assemble(cloud0, medium, kernel, u0))
    prob0 = ContinuumProblem(medium, kernel, Constant(0.0), Constant(1.0), u0, 10)
    cont0 = solve_limit_equation(prob0, "direct")
    checks["zero coupling"] = (np.array_equal(sol0.u, u0(cloud0.centers, medium.k))
                               and np.array_equal(cont0.u.values, prob0.u0_values))

    # permutation equivariance
    cloud = generate_cloud(UNIT_CUBE, 1.0, Expression("-0.3j - 0.1j*x"), 0.04, 0.5)
    sol = solve(assemble(cloud, medium, kernel, u0))
    perm = rng.permutation(cloud.M)
    sol_p = solve(assemble(cloud.permuted(perm), medium, kernel, u0))
    perm_err = max(np.max(np.abs(sol_p.u - sol.u[perm])), np.max(np.abs(sol_p.Q - sol.Q[perm])))
    checks["permutation"] = perm_err <= 1e-11

    # mirror symmetry, incident field travelling along x is even in z - 0.5
    mcloud = _mirror_cloud(rng, -0.4j)
    msol = solve(assemble(mcloud, medium, kernel, PlaneWave((1.0, 0.0, 0.0))))
    mirror_err = float(np.max(np.abs(msol.u[:20] - msol.u[20:])))
    checks["mirror"] = mirror_err <= 1e-11

    # reciprocity
    x = rng.uniform(-2, 2, (100, 3))
    y = rng.uniform(-2, 2, (100, 3))
    gxy, gyx = kernel(x, y), kernel(y, x)
    recip = float(np.max(np.abs(gxy - gyx) / np.abs(gxy)))
    checks["reciprocity"] = recip <= 1e-13

    # byte-identical reruns through the CLI
    cfg = tmp_path / "particles.yaml"
    cfg.write_text("kind: solve-particles\n"
                   "medium: {domain: {box: {lo: [0, 0, 0], hi: [1, 1, 1]}}}\n"
                   "particles: {N: 1.0, h: '-0.1j', kappa: 0.5, a: 0.03}\n"
                   "probes: {n_interior: 16, n_exterior: 4}\n")
    outs = [tmp_path / "run1", tmp_path / "run2"]
    codes = [cli_main(["run", "--config", str(cfg), "--out", str(o), "--quiet"]) for o in outs]
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    checks["determinism"] = codes == [0, 0] and len(names) >= 3 and same

    ok = all(checks.values())
    detail = (f"permutation {perm_err:.1e}, mirror {mirror_err:.1e}, reciprocity {recip:.1e}; "
              + ", ".join(f"{k}={'ok' if v else 'broken'}" for k, v in checks.items()))
    assert _log(acceptance_log, 7, "invariant suites", ok, detail, time.perf_counter() - t0, 60)
