"""Command-line front end: ``smallbodies {run,validate,audit} --config FILE``.

Exit codes: 0 success, 2 configuration error, 3 solver or stage failure,
4 an acceptance threshold was not met.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from . import foldy, oracle
from .cloud import audit_regime, generate_cloud
from .config import ConfigError, ExperimentConfig, Violation, parse_text, validate
from .continuum import ContinuumProblem, pde_residual, solve_limit_equation
from .design import design_material, verify_design
from .greens import GreensKernel, KernelTable
from .limits import Plane, PointSet, Segment, SingularFunction, limit_study
from .medium import (Medium, domain_from_config, field_from_config, incident_from_config, parse_scalar,
                     write_point_csv)
from .study import compare_limit, probe_points

logger = logging.getLogger("smallbodies")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_THRESHOLD = 0, 2, 3, 4


class StageFailure(RuntimeError):
    def __init__(self, stage: str, error: BaseException):
        super().__init__(f"{stage}: {type(error).__name__}: {error}")
        self.stage = stage
        self.error = error


class _Stage:
    """Context manager labelling exceptions with the stage that raised them."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, (StageFailure, ConfigError)):
            raise StageFailure(self.name, exc) from exc
        return False


# ---------------------------------------------------------------------------
# Builders from resolved configuration sections
# ---------------------------------------------------------------------------
def build_medium(cfg: ExperimentConfig) -> Medium:
    m = cfg["medium"]
    return Medium(domain_from_config(m["domain"]), float(m["c0"]), field_from_config(m["speed"]), float(m["omega"]))


def build_kernel(cfg: ExperimentConfig, medium: Medium) -> GreensKernel:
    k = cfg["kernel"]
    table = KernelTable.load(k["table"]) if k["table"] else None
    return GreensKernel.from_medium(medium, k["mode"], k["normalization"], table)


def build_singular_function(section: dict) -> SingularFunction:
    f = field_from_config(section["f"])
    s = section["singular"]
    sset = None
    if s:
        if not isinstance(s, dict) or len(s) != 1:
            raise ConfigError([Violation("riemann.singular", "expected one of point, segment, plane")])
        (kind, spec), = s.items()
        if kind == "point":
            sset = PointSet(tuple(spec))
        elif kind == "segment":
            sset = Segment(tuple(spec["start"]), tuple(spec["end"]))
        elif kind == "plane":
            sset = Plane(tuple(spec["point"]), tuple(spec["normal"]))
        else:
            raise ConfigError([Violation("riemann.singular", f"unknown singular set {kind!r}")])
    return SingularFunction(f, sset, float(section["nu"]), float(section["c"]))


# ---------------------------------------------------------------------------
# Experiment kinds; each returns (report dict, thresholds_met)
# ---------------------------------------------------------------------------
def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


def _probes(cfg, medium, out):
    pr = cfg["probes"]
    if pr["points"] is not None:
        pts = np.asarray(pr["points"], dtype=float).reshape(-1, 3)
    else:
        pts = probe_points(medium.domain, int(pr["n_interior"]), int(pr["n_exterior"]))
    _write_csv(out / "probes.csv", ["x", "y", "z"], pts.tolist())
    return pts


def run_solve_particles(cfg, out, jobs):
    p = cfg["particles"]
    with _Stage("setup"):
        medium = build_medium(cfg)
        kernel = build_kernel(cfg, medium)
        u0 = incident_from_config(cfg["incident"])
    with _Stage("cloud"):
        cloud = generate_cloud(medium.domain, p["N"], p["h"], float(p["a"]), float(p["kappa"]),
                               placement=p["placement"], jitter=float(p["jitter"]), seed=cfg["seed"])
        cloud.to_csv(out / "cloud.csv")
        audit = audit_regime(cloud, medium)
    with _Stage("foldy"):
        s = cfg["solver"]
        system = foldy.assemble(cloud, medium, kernel, u0)
        sol = foldy.solve(system, s["method"], s["tol"], int(s["maxiter"]))
        Q = foldy.charges(sol, cloud, medium, p["charges"])
        foldy.FoldySolution(sol.u, Q).to_csv(out / "foldy_solution.csv")
    with _Stage("evaluate"):
        pts = _probes(cfg, medium, out)
        ev = foldy.evaluate_field(sol, cloud, kernel, u0, pts, Q=Q)
        write_point_csv(out / "field.csv", pts, ev.values, valid=ev.valid)
    diag = {k: v for k, v in sol.diagnostics.items() if k != "residual_history"}
    return {"M": cloud.M, "audit": audit.as_dict(), "solver": diag, "rejected_probes": ev.rejected.tolist()}, True


def run_solve_continuum(cfg, out, jobs):
    p, c = cfg["particles"], cfg["continuum"]
    with _Stage("setup"):
        medium = build_medium(cfg)
        kernel = build_kernel(cfg, medium)
        u0 = incident_from_config(cfg["incident"])
        problem = ContinuumProblem(medium, kernel, field_from_config(p["h"]), field_from_config(p["N"]), u0,
                                   int(c["n"]))
    with _Stage("continuum"):
        sol = solve_limit_equation(problem, c["method"], float(c["tol"]), int(c["maxiter"]))
        sol.u.to_binary(out / "field.sbgf")
    with _Stage("residual"):
        residual = pde_residual(sol, problem, float(c["margin"]))
    with _Stage("evaluate"):
        pts = _probes(cfg, medium, out)
        write_point_csv(out / "field.csv", pts, sol.evaluate(pts))
    diag = {k: v for k, v in sol.diagnostics.items() if isinstance(v, (int, float, str, bool))}
    return {"grid_shape": list(sol.u.grid.shape), "pde_residual": float(residual), "diagnostics": diag}, True


def run_compare_limit(cfg, out, jobs):
    p, c, pr, th = cfg["particles"], cfg["continuum"], cfg["probes"], cfg["thresholds"]
    with _Stage("setup"):
        medium = build_medium(cfg)
        kernel = build_kernel(cfg, medium)
        u0 = incident_from_config(cfg["incident"])
        pts = _probes(cfg, medium, out)
    with _Stage("compare"):
        result = compare_limit(medium, kernel, u0, p["h"], p["N"], float(p["kappa"]), list(p["a_sequence"]),
                               grid_n=int(c["n"]), continuum_method=c["method"], solver=cfg["solver"]["method"],
                               placement=p["placement"], jitter=float(p["jitter"]), seed=cfg["seed"], jobs=jobs,
                               probes=pts)
        result.to_csv(out / "convergence.csv")
    d = result.discrepancies()
    monotone = result.monotone(float(th["monotone_noise"]))
    final_ok = d[-1] <= float(th["max_discrepancy"])
    ok = final_ok and (monotone or not th["require_monotone"])
    with open(out / "runtimes.json", "w") as fh:
        json.dump([{"a": r.a, "runtime": r.runtime} for r in result.rows], fh, indent=2)
    return {"discrepancies": d, "monotone": monotone, "final_within_threshold": final_ok,
            "probe_clearance": "3a"}, ok


def run_riemann_study(cfg, out, jobs):
    r, th = cfg["riemann"], cfg["thresholds"]
    with _Stage("setup"):
        f = build_singular_function(r)
        domain = domain_from_config(r["domain"])
    with _Stage("riemann"):
        ref = r["reference"]
        study = limit_study(f, r["N"], domain, float(r["kappa"]), list(r["a_sequence"]), list(r["delta_sequence"]),
                            h=r["h"], placement=cfg["particles"]["placement"], seed=cfg["seed"], tol=float(r["tol"]),
                            reference_full=None if ref is None else complex(ref))
        study.to_csv(out / "riemann.csv")
    final = study.rows[-1]
    rel = final.error_full / abs(study.reference_full) if study.reference_full else final.error_full
    full_rows = [row.error_full for row in study.rows if row.delta == study.rows[0].delta]
    decreasing = all(b < a for a, b in zip(full_rows, full_rows[1:]))
    ok = rel <= float(th["riemann_max_rel_error"])
    return {"reference_full": [study.reference_full.real, study.reference_full.imag],
            "final_relative_error": float(rel), "strictly_decreasing": decreasing}, ok


def run_design(cfg, out, jobs):
    d = cfg["design"]
    with _Stage("setup"):
        medium = build_medium(cfg)
        k = float(d["k"]) if d["k"] is not None else medium.k
    with _Stage("design"):
        recipe = design_material(d["n0sq"], d["target"], k, medium.domain, d["strategy"], N0=d["N0"], h0=d["h0"],
                                 a=d["a"], kappa=float(d["kappa"]))
        recipe.save(out / "recipe.yaml")
        achieved = recipe.achieved(recipe.samples)
        target = np.asarray(recipe.target(recipe.samples), dtype=complex)
        roundtrip = float(np.max(np.abs(achieved - target)))
    report = {"strategy": recipe.strategy, "predicted_M": recipe.predicted_M, "a": recipe.a,
              "roundtrip_max_error": roundtrip}
    ok = roundtrip <= 1e-12
    if d["verify"]:
        with _Stage("verify"):
            u0 = incident_from_config(cfg["incident"])
            vr = verify_design(recipe, medium, u0, list(d["verify_a_sequence"]), grid_n=int(cfg["continuum"]["n"]),
                               placement=cfg["particles"]["placement"], seed=cfg["seed"], jobs=jobs)
            vr.to_csv(out / "verification.csv")
            vr.write_runtimes(out / "runtimes.json")
        report["verification"] = vr.result.discrepancies()
        report["monotone"] = vr.result.monotone(float(cfg["thresholds"]["monotone_noise"]))
        ok = ok and report["monotone"] and vr.result.discrepancies()[-1] <= cfg["thresholds"]["max_discrepancy"]
    return report, ok


def run_oracle_check(cfg, out, jobs):
    o = cfg["oracle"]
    h, kappa, k = complex(parse_scalar(o["h"])), float(o["kappa"]), float(o["k"])
    rows = []
    with _Stage("charges"):
        for a in o["a_sequence"]:
            zeta = h / a**kappa
            series = oracle.solve_sphere_exact(a, zeta, k)
            q_exact = oracle.extract_monopole_charge(series)
            q_ref = -4 * np.pi * zeta * a * a / (1 + zeta * a)
            ratio = q_exact / q_ref
            rows.append([float(a), q_exact.real, q_exact.imag, q_ref.real, q_ref.imag, abs(ratio - 1)])
        _write_csv(out / "charges.csv", ["a", "re_Q_exact", "im_Q_exact", "re_Q_refined", "im_Q_refined",
                                         "deviation"], rows)
    with _Stage("identities"):
        single = []
        for a in o["identity_radii"]:
            t = np.array([0.0, 0.0, float(a)])
            single.append(oracle.single_layer_sphere_identity(float(a), t, int(o["order"])) / float(a))
        normal = oracle.normal_derivative_layer_identity(1.0, 1.0, int(o["order"]))
    devs = [r[-1] for r in rows]
    decreasing = all(b < a for a, b in zip(devs, devs[1:]))
    ok = decreasing and devs[-1] <= float(cfg["thresholds"]["oracle_max_deviation"])
    ok = ok and all(abs(s - 1) <= 1e-3 for s in single) and abs(normal - 1) <= 1e-3
    return {"charge_deviation": devs, "deviation_decreasing": decreasing,
            "single_layer_ratio": single, "normal_derivative_ratio": normal}, ok


def run_audit(cfg, out, jobs):
    p = cfg["particles"]
    with _Stage("setup"):
        medium = build_medium(cfg)
    reports = {}
    with _Stage("audit"):
        for a in [p["a"]] + [x for x in p["a_sequence"] if x != p["a"]]:
            cloud = generate_cloud(medium.domain, p["N"], p["h"], float(a), float(p["kappa"]),
                                   placement=p["placement"], jitter=float(p["jitter"]), seed=cfg["seed"])
            reports[repr(float(a))] = {"M": cloud.M, **audit_regime(cloud, medium).as_dict()}
    ok = all(r["passed"] for r in reports.values())
    with open(out / "audit.json", "w") as fh:
        json.dump(reports, fh, indent=2, sort_keys=True)
    return {"audits": reports}, ok


RUNNERS = {
    "solve-particles": run_solve_particles,
    "solve-continuum": run_solve_continuum,
    "compare-limit": run_compare_limit,
    "riemann-study": run_riemann_study,
    "design": run_design,
    "oracle-check": run_oracle_check,
    "audit": run_audit,
}


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------
def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_provenance(cfg: ExperimentConfig, out: Path) -> None:
    record = {
        "toolkit": "smallbodies",
        "version": __version__,
        "seed": cfg["seed"],
        "kind": cfg.kind,
        "config": _jsonable(cfg.data),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    with open(out / "provenance.json", "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)


def run(cfg: ExperimentConfig, out: Optional[os.PathLike] = None, jobs: Optional[int] = None,
        verb: str = "run") -> int:
    """Execute ``cfg`` and write its artifacts under ``out``; returns the exit status."""
    out = Path(out if out is not None else (cfg["out"] or "results"))
    out.mkdir(parents=True, exist_ok=True)
    failed = out / "FAILED"
    if failed.exists():
        failed.unlink()
    jobs = int(jobs if jobs is not None else cfg["jobs"])
    write_provenance(cfg, out)
    runner = run_audit if verb == "audit" else RUNNERS[cfg.kind]
    try:
        report, ok = runner(cfg, out, jobs)
    except ConfigError as exc:
        for v in exc.violations:
            logger.error("config error: %s", v)
        return EXIT_CONFIG
    except StageFailure as exc:
        logger.error("%s", exc)
        with open(failed, "w") as fh:
            fh.write(f"stage: {exc.stage}\nerror: {type(exc.error).__name__}: {exc.error}\n")
        return EXIT_SOLVER
    report = {"kind": cfg.kind if verb == "run" else "audit", "thresholds_met": bool(ok), **report}
    with open(out / "report.json", "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
    logger.info("wrote %s", out)
    return EXIT_OK if ok else EXIT_THRESHOLD


def _load(path, seed, jobs):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([Violation("--config", str(exc))]) from None
    raw, lines = parse_text(text)
    if isinstance(raw, dict):
        if seed is not None:
            raw["seed"] = seed
        if jobs is not None:
            raw["jobs"] = jobs
    data, violations = validate(raw, lines)
    return ExperimentConfig(data, lines), violations


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smallbodies", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_text in (("run", "run the configured experiment"),
                            ("validate", "check a configuration without running solvers"),
                            ("audit", "generate the clouds and report the regime audit")):
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment file")
        p.add_argument("--out", default=None, help="output directory (default: config 'out' or ./results)")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--jobs", type=int, default=None, help="worker threads for independent radii")
        p.add_argument("--quiet", action="store_true", help="only print warnings and errors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, violations = _load(args.config, args.seed, args.jobs)
    except ConfigError as exc:
        violations = exc.violations
        cfg = None
    if violations:
        for v in violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    if args.verb == "validate":
        if not args.quiet:
            print("configuration is valid")
        return EXIT_OK
    return run(cfg, args.out, args.jobs, verb=args.verb)


if __name__ == "__main__":
    sys.exit(main())
