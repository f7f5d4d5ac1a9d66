"""Experiment configuration: YAML schema, defaults and validation.

A configuration is a mapping with a ``kind`` and optional named
sections.  Every key is checked against :data:`SCHEMA`; unknown keys are
errors, and missing keys take the defaults listed there so that the
resolved configuration (written to ``provenance.json``) names every value
that was used.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from .medium import InputError, domain_from_config, field_from_config, sample_points

KINDS = ("solve-particles", "solve-continuum", "compare-limit", "riemann-study", "design", "oracle-check",
         "audit")

# ``None`` marks an optional value without a default; nested dicts are sections.
SCHEMA: dict = {
    "kind": None,
    "seed": 0,
    "jobs": 1,
    "out": None,
    "medium": {
        "domain": {"box": {"lo": [0.0, 0.0, 0.0], "hi": [1.0, 1.0, 1.0]}},
        "c0": 1.0,
        "speed": 1.0,
        "omega": 1.0,
    },
    "kernel": {"mode": "constant", "normalization": "distributional", "table": None},
    "incident": {"plane_wave": {"direction": [0.0, 0.0, 1.0]}},
    "particles": {
        "N": 1.0,
        "h": 0.0,
        "kappa": 0.5,
        "a": 0.01,
        "a_sequence": [0.02, 0.01, 0.005],
        "placement": "jitter",
        "jitter": 0.25,
        "charges": "asymptotic",
    },
    "solver": {"method": "direct", "tol": None, "maxiter": 500},
    "continuum": {"n": 24, "method": "krylov", "tol": 1e-10, "maxiter": 200, "margin": 0.2},
    "probes": {"n_interior": 64, "n_exterior": 16, "points": None},
    "riemann": {
        "f": {"expr": "1/r"},
        "singular": {"point": [0.0, 0.0, 0.0]},
        "nu": 1.0,
        "c": 1.0,
        "N": 1.0,
        "domain": {"ball": {"center": [0.0, 0.0, 0.0], "radius": 1.0}},
        "kappa": 0.5,
        "a_sequence": [0.04, 0.02, 0.01],
        "delta_sequence": [0.0],
        "h": 0.0,
        "tol": 1e-6,
        "reference": None,
    },
    "design": {
        "n0sq": 1.0,
        "target": "1+0.5j",
        "k": None,
        "strategy": "fixed-density",
        "N0": None,
        "h0": None,
        "a": None,
        "kappa": 0.5,
        "verify": False,
        "verify_a_sequence": [0.02, 0.01, 0.005],
    },
    "oracle": {
        "h": 1.0,
        "kappa": 0.5,
        "k": 1.0,
        "a_sequence": [0.01, 0.005, 0.0025],
        "identity_radii": [1.0, 0.5],
        "order": 16,
    },
    "thresholds": {
        "max_discrepancy": 0.05,
        "require_monotone": True,
        "monotone_noise": 0.0,
        "riemann_max_rel_error": 0.05,
        "oracle_max_deviation": 0.02,
    },
}

# sections whose value is a free-form mapping (one-of choices), not a keyed section
OPAQUE = {("medium", "domain"), ("incident",), ("riemann", "f"), ("riemann", "singular"), ("riemann", "domain"),
          ("medium", "speed"), ("particles", "N"), ("particles", "h"), ("riemann", "N"), ("riemann", "h"),
          ("design", "n0sq"), ("design", "target")}


class ConfigError(InputError):
    """Configuration problems, each with a key path and (if known) a line number."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class Violation:
    key: str
    message: str
    line: Optional[int] = None

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.key}: {self.message}"


def _line_map(text: str) -> dict:
    """Map dotted key paths to 1-based source lines using the YAML node tree."""
    lines: dict = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                lines[p] = k.start_mark.line + 1
                walk(v, p)

    walk(root, "")
    return lines


@dataclass
class ExperimentConfig:
    """A validated configuration with every default filled in."""

    data: dict
    lines: dict = field(default_factory=dict, repr=False)

    @property
    def kind(self) -> str:
        return self.data["kind"]

    def section(self, name: str) -> dict:
        return self.data[name]

    def __getitem__(self, key):
        return self.data[key]


def parse_text(text: str) -> tuple[Any, dict]:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError([Violation("<document>", f"invalid YAML: {getattr(exc, 'problem', exc)}",
                                     mark.line + 1 if mark else None)]) from None
    return raw, _line_map(text)


def _merge(schema: dict, raw: dict, path: tuple, lines: dict, out: list) -> dict:
    resolved = {}
    for key, value in raw.items():
        dotted = ".".join(path + (str(key),))
        if key not in schema:
            out.append(Violation(dotted, "unknown key", lines.get(dotted)))
    for key, default in schema.items():
        sub = path + (key,)
        if isinstance(default, dict) and sub not in OPAQUE:
            given = raw.get(key, {})
            if given is None:
                given = {}
            if not isinstance(given, dict):
                dotted = ".".join(sub)
                out.append(Violation(dotted, "expected a mapping", lines.get(dotted)))
                given = {}
            resolved[key] = _merge(default, given, sub, lines, out)
        else:
            resolved[key] = copy.deepcopy(raw[key]) if key in raw else copy.deepcopy(default)
    return resolved


def resolve(raw, lines: Optional[dict] = None) -> tuple[dict, list]:
    """Fill defaults and collect schema violations (unknown keys, bad kind)."""
    lines = lines or {}
    violations: list = []
    if not isinstance(raw, dict):
        return {}, [Violation("<document>", "configuration must be a mapping")]
    data = _merge(SCHEMA, raw, (), lines, violations)
    if data["kind"] not in KINDS:
        violations.append(Violation("kind", f"must be one of {', '.join(KINDS)}; got {data['kind']!r}",
                                    lines.get("kind")))
    return data, violations


def _check_number(data, path, lines, out, positive=False, integer=False):
    node = data
    for p in path:
        node = node[p]
    dotted = ".".join(path)
    if node is None:
        return
    ok = isinstance(node, (int, float)) and not isinstance(node, bool)
    if ok and integer:
        ok = float(node).is_integer()
    if ok and positive:
        ok = node > 0
    if not ok:
        kind = "positive " if positive else ""
        kind += "integer" if integer else "number"
        out.append(Violation(dotted, f"expected a {kind}, got {node!r}", lines.get(dotted)))


def _check_sequence(data, path, lines, out):
    node = data[path[0]][path[1]]
    dotted = ".".join(path)
    if not isinstance(node, list) or not node or not all(isinstance(v, (int, float)) and v > 0 for v in node):
        out.append(Violation(dotted, "expected a nonempty list of positive numbers", lines.get(dotted)))


def regime_violations(data: dict, lines: Optional[dict] = None) -> list:
    """Physics pre-checks that need no solver: kappa range, Im h <= 0, ka < 1."""
    lines = lines or {}
    out: list = []
    kind = data.get("kind")
    p = data["particles"]
    kappa = p["kappa"]
    if isinstance(kappa, (int, float)) and not 0.0 <= kappa <= 1.0:
        out.append(Violation("particles.kappa", f"kappa = {kappa} lies outside (0, 1)", lines.get("particles.kappa")))
    rk = data["riemann"]["kappa"]
    if kind == "riemann-study" and isinstance(rk, (int, float)) and not 0.0 <= rk <= 1.0:
        out.append(Violation("riemann.kappa", f"kappa = {rk} lies outside (0, 1)", lines.get("riemann.kappa")))
    try:
        domain = domain_from_config(data["medium"]["domain"])
    except (InputError, KeyError, TypeError, ValueError) as exc:
        out.append(Violation("medium.domain", str(exc), lines.get("medium.domain")))
        return out
    for name in ("h", "N", "speed"):
        section = "medium" if name == "speed" else "particles"
        dotted = f"{section}.{name}"
        try:
            fld = field_from_config(data[section][name])
            pts = sample_points(domain, 12)
            vals = np.asarray(fld(pts))
        except (InputError, KeyError, TypeError, ValueError, NameError, ZeroDivisionError) as exc:
            out.append(Violation(dotted, f"cannot evaluate: {exc}", lines.get(dotted)))
            continue
        if name == "h":
            bad = np.flatnonzero(np.imag(vals) > 0)
            if len(bad):
                x = pts[bad[0]].tolist()
                out.append(Violation(dotted, f"Im h > 0 at x = {x} (h = {vals[bad[0]]})", lines.get(dotted)))
        elif name == "N":
            bad = np.flatnonzero((np.real(vals) < 0) | (np.imag(vals) != 0))
            if len(bad):
                x = pts[bad[0]].tolist()
                out.append(Violation(dotted, f"N must be real and nonnegative; N = {vals[bad[0]]} at x = {x}",
                                     lines.get(dotted)))
        else:
            bad = np.flatnonzero(~(np.real(vals) > 0) | (np.imag(vals) != 0))
            if len(bad):
                out.append(Violation(dotted, f"speed must be positive; got {vals[bad[0]]} at x = "
                                             f"{pts[bad[0]].tolist()}", lines.get(dotted)))
    m = data["medium"]
    if isinstance(m["omega"], (int, float)) and isinstance(m["c0"], (int, float)) and m["c0"] > 0:
        k = m["omega"] / m["c0"]
        radii = [p["a"]] + (list(p["a_sequence"]) if isinstance(p["a_sequence"], list) else [])
        for a in radii:
            if isinstance(a, (int, float)) and k * a >= 1.0:
                out.append(Violation("particles.a", f"ka = {k * a:.3g} is not small", lines.get("particles.a")))
    return out


def validate(raw, lines: Optional[dict] = None) -> tuple[dict, list]:
    """Schema and regime checks; returns the resolved data and every violation found."""
    lines = lines or {}
    data, out = resolve(raw, lines)
    if not data:
        return data, out
    for path in (("seed",),):
        _check_number(data, path, lines, out, integer=True)
    _check_number(data, ("jobs",), lines, out, positive=True, integer=True)
    for path in (("medium", "c0"), ("medium", "omega"), ("particles", "a"), ("continuum", "n"),
                 ("probes", "n_interior"), ("oracle", "k"), ("oracle", "order")):
        _check_number(data, path, lines, out, positive=True, integer=path[-1] in ("n", "n_interior", "order"))
    for path in (("particles", "a_sequence"), ("riemann", "a_sequence"), ("oracle", "a_sequence")):
        _check_sequence(data, path, lines, out)
    choices = {
        ("particles", "placement"): ("lattice", "jitter", "poisson"),
        ("particles", "charges"): ("asymptotic", "refined"),
        ("solver", "method"): ("direct", "iterative"),
        ("continuum", "method"): ("direct", "born", "krylov"),
        ("kernel", "mode"): ("constant", "singular", "table"),
        ("kernel", "normalization"): ("distributional", "inverse-speed"),
        ("design", "strategy"): ("fixed-density", "fixed-h"),
    }
    for (sec, key), allowed in choices.items():
        if data[sec][key] not in allowed:
            dotted = f"{sec}.{key}"
            out.append(Violation(dotted, f"must be one of {', '.join(allowed)}; got {data[sec][key]!r}",
                                 lines.get(dotted)))
    out.extend(regime_violations(data, lines))
    return data, out


def load_config(path) -> ExperimentConfig:
    """Read, resolve and validate a YAML file; raises :class:`ConfigError` on any violation."""
    with open(path) as fh:
        text = fh.read()
    raw, lines = parse_text(text)
    data, violations = validate(raw, lines)
    if violations:
        raise ConfigError(violations)
    return ExperimentConfig(data, lines)


def config_from_dict(raw: dict) -> ExperimentConfig:
    data, violations = validate(raw)
    if violations:
        raise ConfigError(violations)
    return ExperimentConfig(data)
