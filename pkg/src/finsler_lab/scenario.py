"""Declarative scenario runner.

A scenario is a JSON file naming a domain, a metric, vector fields, scalar
test functions and a list of checks.  Running it produces a JSON report whose
bytes depend only on the config, the seed and the tool version.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import __version__, expressions
from .affine import affine_diagnostics, parallel_residual, reversibility
from .errors import ConfigError, FinslerError
from .geodesics import FlowMap, affine_transformation_defect, integrate_geodesic
from .metric import (
    ChartDomain,
    CustomAnalytic,
    EuclideanQuadratic,
    FiberPoint,
    MetricSpec,
    Randers,
    Riemannian,
    random_fiber_points,
    stereographic_sphere,
    validate_metric,
)
from .sphere_bundle import (
    SMGrid,
    dot_energy,
    global_norm,
    integrate_SM,
    stokes_integral,
    rigidity_identity_check,
    total_ricci,
)
from .spray import VectorFieldDef, bracket_identities, curvature_bundle, metric_compatibility_check

log = logging.getLogger(__name__)

THREADS_ENV = "FINSLER_LAB_THREADS"

_EXPR = {"type": ["string", "number"]}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _EXPR}}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "finsler-lab scenario",
    "type": "object",
    "required": ["seed", "domain", "metric", "checks"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "domain": {
            "type": "object",
            "required": ["dim"],
            "additionalProperties": False,
            "properties": {
                "dim": {"type": "integer", "minimum": 2},
                "periods": {"type": "array", "items": {"anyOf": [_EXPR, {"type": "null"}]}},
                "bounds": {
                    "type": "array",
                    "items": {"anyOf": [{"type": "null"}, {"type": "array", "items": _EXPR, "minItems": 2, "maxItems": 2}]},
                },
            },
        },
        "metric": {
            "type": "object",
            "required": ["family"],
            "properties": {
                "family": {"enum": ["euclidean", "riemannian", "randers", "custom", "round-sphere"]},
                "A": _MATRIX,
                "a": _MATRIX,
                "b": {"type": "array", "items": _EXPR},
                "F": {"type": "string"},
                "radius": _EXPR,
            },
            "additionalProperties": False,
        },
        "fields": {"type": "object", "additionalProperties": {"type": "array", "items": _EXPR}},
        "functions": {"type": "object", "additionalProperties": {"type": "string"}},
        "checks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["type"],
                "properties": {"type": {"type": "string"}, "name": {"type": "string"}},
            },
        },
    },
}

_NUM = {"type": ["number", "null"]}
REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "finsler-lab report",
    "type": "object",
    "required": ["tool", "version", "scenario", "seed", "domain", "metric", "grid_sign", "checks", "passed"],
    "properties": {
        "tool": {"const": "finsler-lab"},
        "version": {"type": "string"},
        "scenario": {"type": "string"},
        "seed": {"type": "integer"},
        "domain": {"type": "object"},
        "metric": {"type": "object"},
        "grid_sign": {"type": ["integer", "null"]},
        "passed": {"type": "boolean"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "type", "inputs", "results", "tolerance", "passed", "error"],
                "properties": {
                    "name": {"type": "string"},
                    "type": {"type": "string"},
                    "inputs": {"type": "object"},
                    "results": {"type": "object"},
                    "worst": {
                        "type": "object",
                        "properties": {"value": _NUM, "x": {"type": "array"}, "y": {"type": "array"}},
                    },
                    "tolerance": {"type": ["number", "object", "null"]},
                    "passed": {"type": "boolean"},
                    "error": {"type": ["string", "null"]},
                },
            },
        },
    },
}


# ---------------------------------------------------------------------------
# scenario model


@dataclass
class Scenario:
    name: str
    seed: int
    domain: ChartDomain
    metric: MetricSpec
    fields: dict[str, VectorFieldDef]
    functions: dict[str, expressions.Expression]
    checks: list[dict]
    raw: dict = field(repr=False, default_factory=dict)
    _grids: dict = field(default_factory=dict, repr=False)
    _grid_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def grid(self, resolution: int) -> SMGrid:
        """Shared, lazily built sphere-bundle grid (one build per resolution)."""
        with self._grid_lock:
            entry = self._grids.get(resolution)
            if entry is None:
                entry = self._grids[resolution] = [threading.Lock(), None]
        with entry[0]:
            if entry[1] is None:
                entry[1] = SMGrid.build(self.metric, self.domain, resolution)
            return entry[1]

    def points(self, count: int, seed: int) -> FiberPoint:
        return random_fiber_points(self.domain, count, seed)

    def field_def(self, name: str) -> VectorFieldDef:
        return self.fields[name]

    def check_named(self, name: str) -> dict:
        for c in self.checks:
            if c["name"] == name:
                return c
        raise ConfigError(f"no check named {name!r}", path="checks")


def _constant(value, path: str) -> float:
    try:
        return expressions.constant(value)
    except ValueError as exc:
        raise ConfigError(str(exc), path=path) from exc


def _build_metric(spec: dict, dim: int) -> MetricSpec:
    fam = spec["family"]
    required = {"euclidean": ["A"], "riemannian": ["a"], "randers": ["a", "b"], "custom": ["F"], "round-sphere": []}[fam]
    for key in required:
        if key not in spec:
            raise ConfigError(f"metric family {fam!r} requires {key!r}", path=f"metric.{key}")
    try:
        if fam == "euclidean":
            A = [[_constant(e, "metric.A") for e in row] for row in spec["A"]]
            metric = EuclideanQuadratic(np.array(A))
        elif fam == "riemannian":
            metric = Riemannian.from_expressions(spec["a"])
        elif fam == "randers":
            metric = Randers.from_expressions(spec["a"], spec["b"])
        elif fam == "custom":
            metric = CustomAnalytic.from_expression(spec["F"], dim)
        else:
            if dim != 2:
                raise ConfigError("round-sphere preset is 2-dimensional", path="metric.family")
            metric = stereographic_sphere(_constant(spec.get("radius", 1.0), "metric.radius"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), path="metric") from exc
    if metric.dim != dim:
        raise ConfigError(f"metric dimension {metric.dim} does not match domain dimension {dim}", path="metric")
    return metric


def load_scenario(path: str | os.PathLike) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    return parse_scenario(text, source=str(path))


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON: {exc.msg}", line=exc.lineno) from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{source}: {exc.message}", path=where) from exc

    d = raw["domain"]
    dim = d["dim"]
    periods = None
    if "periods" in d:
        if len(d["periods"]) != dim:
            raise ConfigError("one period per axis required", path="domain.periods")
        periods = tuple(None if p is None else _constant(p, "domain.periods") for p in d["periods"])
    bounds = None
    if "bounds" in d:
        if len(d["bounds"]) != dim:
            raise ConfigError("one bounds entry per axis required", path="domain.bounds")
        bounds = tuple(None if b is None else tuple(_constant(e, "domain.bounds") for e in b) for b in d["bounds"])
    try:
        domain = ChartDomain(dim, periods, bounds)
    except ValueError as exc:
        raise ConfigError(str(exc), path="domain") from exc

    metric = _build_metric(raw["metric"], dim)
    fields = {}
    for name, entries in raw.get("fields", {}).items():
        try:
            fields[name] = VectorFieldDef.from_expressions(entries, dim)
        except ValueError as exc:
            raise ConfigError(str(exc), path=f"fields.{name}") from exc
    functions = {}
    for name, src in raw.get("functions", {}).items():
        try:
            functions[name] = expressions.parse(src, dim)
        except ValueError as exc:
            raise ConfigError(str(exc), path=f"functions.{name}") from exc

    checks = []
    seen = set()
    for k, spec in enumerate(raw["checks"]):
        checks.append(_normalise_check(spec, k, raw, fields, functions, domain))
        if checks[-1]["name"] in seen:
            raise ConfigError(f"duplicate check name {checks[-1]['name']!r}", path=f"checks.{k}.name")
        seen.add(checks[-1]["name"])
    scenario = Scenario(raw.get("name", Path(source).stem), raw["seed"], domain, metric, fields, functions, checks, raw)
    for k, c in enumerate(checks):
        if c["type"] == "convergence":
            target = scenario.check_named(c["target"])
            if target["type"] not in CONVERGENCE_KEYS:
                raise ConfigError(f"check type {target['type']!r} has no resolution axis", path=f"checks.{k}.target")
    return scenario


# ---------------------------------------------------------------------------
# checks


def _worst(values: np.ndarray, p: FiberPoint) -> dict:
    values = np.asarray(values, dtype=float).reshape(-1)
    k = int(np.argmax(values))
    x = p.x.reshape(p.dim, -1)[:, k]
    y = p.y.reshape(p.dim, -1)[:, k]
    return {"value": float(values[k]), "x": [float(v) for v in x], "y": [float(v) for v in y]}


def _scaled(arr: np.ndarray, scale: np.ndarray, tensor_axes: int) -> np.ndarray:
    """Max over tensor axes of ``|arr| / scale`` (per batch element)."""
    a = np.abs(arr) / scale
    return a.reshape((-1,) + scale.shape).max(axis=0) if tensor_axes else a


def _check_validate(sc: Scenario, c: dict) -> dict:
    rep = validate_metric(sc.metric, sc.domain, c["samples"], c["seed"], rtol=c["tol"])
    expect_valid = c["expect"] == "valid"
    return {"results": rep.as_dict(), "passed": rep.passed == expect_valid}


def _check_curvature_oracle(sc: Scenario, c: dict) -> dict:
    p = sc.points(c["samples"], c["seed"])
    b = curvature_bundle(sc.metric, p)
    F2 = b.F**2
    n = p.dim
    if c["oracle"] == "flat":
        oracle = np.zeros_like(b.R)
        resid = np.abs(b.R).reshape(n * n, -1).max(axis=0)
    else:
        k = _constant(c.get("curvature", 1.0), "curvature")
        yl = np.einsum("kj...,j...->k...", b.g, p.y)
        eye = np.eye(n).reshape((n, n) + (1,) * (p.y.ndim - 1))
        oracle = k * (F2 * eye - np.einsum("i...,k...->ik...", p.y, yl))
        resid = (np.abs(b.R - oracle) / F2).reshape(n * n, -1).max(axis=0)
    worst = _worst(resid, p)
    return {"results": {"max_residual": worst["value"]}, "worst": worst, "passed": worst["value"] <= c["tol"]}


def _check_brackets(sc: Scenario, c: dict) -> dict:
    p = sc.points(c["samples"], c["seed"])
    bi = bracket_identities(sc.metric, p)
    from .metric import eval_F

    F = eval_F(sc.metric, p)
    power = {
        "vertical_bracket_horizontal": 0,
        "vertical_bracket_vertical": 1,
        "horizontal_bracket_horizontal": 1,
        "horizontal_bracket_vertical": 2,
    }
    results = {}
    total = np.zeros(p.batch_shape)
    for key, arr in bi.residuals().items():
        r = (np.abs(arr) / F ** power[key]).reshape(-1, *p.batch_shape).max(axis=0)
        results[key] = float(r.max())
        total = np.maximum(total, r)
    worst = _worst(total, p)
    return {"results": results, "worst": worst, "passed": worst["value"] <= c["tol"]}


def _check_compatibility(sc: Scenario, c: dict) -> dict:
    p = sc.points(c["samples"], c["seed"])
    out = metric_compatibility_check(sc.metric, p)
    b = curvature_bundle(sc.metric, p)
    scale = np.abs(b.g).reshape(p.dim**2, -1).max(axis=0) * b.F
    resid = (np.abs(out) / scale).reshape(p.dim**2, -1).max(axis=0)
    worst = _worst(resid, p)
    return {"results": {"max_residual": worst["value"]}, "worst": worst, "passed": worst["value"] <= c["tol"]}


def _check_affine(sc: Scenario, c: dict) -> dict:
    p = sc.points(c["samples"], c["seed"])
    d = affine_diagnostics(sc.metric, sc.field_def(c["field"]), p)
    res = d.summary()
    res["certified_affine"] = d.jacobi_norm < c["certify_tol"]
    passed = d.equivalence_defect <= c["tol"] and d.horizontal_leak <= c["leak_tol"]
    if c.get("expect") == "affine":
        passed = passed and res["certified_affine"]
    elif c.get("expect") == "not-affine":
        passed = passed and not res["certified_affine"]
    return {"results": res, "passed": passed, "tolerance": {"equivalence": c["tol"], "leak": c["leak_tol"], "certify": c["certify_tol"]}}


def _check_parallel(sc: Scenario, c: dict) -> dict:
    p = sc.points(c["samples"], c["seed"])
    r = parallel_residual(sc.metric, sc.field_def(c["field"]), p)
    passed = r < c["tol"] if c["expect"] == "parallel" else r >= c["tol"]
    return {"results": {"parallel_residual": r}, "passed": passed}


def _check_flow_affinity(sc: Scenario, c: dict) -> dict:
    V = sc.field_def(c["field"])
    if "x0" in c:
        starts = FiberPoint(np.array([_constant(v, "x0") for v in c["x0"]]), np.array([_constant(v, "y0") for v in c["y0"]]))
    else:
        starts = sc.points(c["geodesics"], c["seed"])
    domain = sc.domain if sc.domain.periods is not None else None
    defects = []
    for t in c["times"]:
        flow = FlowMap(V, t, c["flow_step"], domain)
        defects.append(affine_transformation_defect(sc.metric, flow, starts, c["t_end"], c["steps"], domain))
    floor = affine_transformation_defect(sc.metric, FlowMap(V, 0.0, c["flow_step"], domain), starts, c["t_end"], c["steps"], domain)
    defect = max(defects)
    if c["expect"] == "affine":
        passed = defect < c["tol"]
    else:
        passed = defect > c["margin"] * c["tol"]
    return {"results": {"defects": defects, "max_defect": defect, "identity_floor": floor}, "passed": passed}


def _check_geodesic(sc: Scenario, c: dict) -> dict:
    p = FiberPoint(np.array([_constant(v, "x0") for v in c["x0"]]), np.array([_constant(v, "y0") for v in c["y0"]]))
    domain = sc.domain if (sc.domain.periods is not None or sc.domain.bounds is not None) else None
    traj = integrate_geodesic(sc.metric, p, c["t_end"], c["steps"], domain)
    drift = traj.norm_drift()
    res = {"norm_drift": drift, "endpoint": [float(v) for v in traj.x[-1]], "steps": c["steps"]}
    passed = drift < c["tol"]
    if "exact_endpoint" in c:
        exact = np.array([_constant(v, "exact_endpoint") for v in c["exact_endpoint"]])
        res["endpoint_error"] = float(np.linalg.norm(traj.x[-1] - exact))
    return {"results": res, "passed": passed}


def _grid_results(grid: SMGrid) -> dict:
    return {
        "resolution": list(grid.counts),
        "density_sign": grid.sign,
        "omega_xi_error": grid.omega_xi_error,
        "domega_xi_error": grid.domega_xi_error,
    }


def _compare_expected(value: float, c: dict) -> bool:
    if "expected" not in c:
        return bool(np.isfinite(value))
    exp = _constant(c["expected"], "expected")
    if exp == 0:
        return abs(value) <= c["tol"]
    return abs(value - exp) <= c["tol"] * abs(exp)


def _check_contact(sc: Scenario, c: dict) -> dict:
    grid = sc.grid(c["resolution"])
    res = _grid_results(grid)
    return {
        "results": res,
        "passed": grid.omega_xi_error < c["tol_omega"] and grid.domega_xi_error < c["tol_domega"],
        "tolerance": {"omega_xi": c["tol_omega"], "domega_xi": c["tol_domega"]},
    }


def _check_volume(sc: Scenario, c: dict) -> dict:
    grid = sc.grid(c["resolution"])
    value = integrate_SM(sc.metric, grid, lambda x, y: np.ones(np.shape(x[0])))
    return {"results": {"value": value, **_grid_results(grid)}, "passed": _compare_expected(value, c)}


def _function(sc: Scenario, name: str) -> Callable:
    return sc.functions[name]


def _check_stokes(sc: Scenario, c: dict) -> dict:
    grid = sc.grid(c["resolution"])
    value = stokes_integral(sc.metric, grid, _function(sc, c["function"]))
    return {"results": {"value": value, "abs_value": abs(value), **_grid_results(grid)}, "passed": abs(value) < c["tol"]}


def _check_total_ricci(sc: Scenario, c: dict) -> dict:
    grid = sc.grid(c["resolution"])
    value = total_ricci(sc.metric, grid, sc.field_def(c["field"]))
    return {"results": {"value": value, **_grid_results(grid)}, "passed": _compare_expected(value, c)}


def _check_global_norm(sc: Scenario, c: dict) -> dict:
    grid = sc.grid(c["resolution"])
    value = global_norm(sc.metric, grid, sc.field_def(c["field"]))
    return {"results": {"value": value, **_grid_results(grid)}, "passed": value >= 0 and _compare_expected(value, c)}


def _check_identity(sc: Scenario, c: dict) -> dict:
    p = sc.points(c["samples"], c["seed"])
    ic = rigidity_identity_check(sc.metric, sc.field_def(c["field"]), p)
    prod = ic.product_rule_defect / ic.scale
    corrected = ic.corrected_defect / ic.scale
    curv = ic.curvature_form_defect / ic.scale
    worst = _worst(prod, p)
    res = {
        "product_rule_defect": float(prod.max()),
        "corrected_curvature_form_defect": float(corrected.max()),
        "curvature_form_defect": float(curv.max()),
        "max_jacobi_term": float(np.max(np.abs(ic.jacobi_term) / ic.scale)),
    }
    return {"results": res, "worst": worst, "passed": res["product_rule_defect"] <= c["tol"] and res["corrected_curvature_form_defect"] <= c["tol"]}


def _check_rigidity(sc: Scenario, c: dict) -> dict:
    grid = sc.grid(c["resolution"])
    p = sc.points(c["samples"], c["seed"])
    rows = {}
    passed = True
    for name in c["fields"]:
        V = sc.field_def(name)
        d = affine_diagnostics(sc.metric, V, p)
        row = {
            "jacobi_norm": d.jacobi_norm,
            "certified_affine": d.jacobi_norm < c["certify_tol"],
            "total_ricci": total_ricci(sc.metric, grid, V),
            "dot_energy": dot_energy(sc.metric, grid, V),
            "parallel_residual": parallel_residual(sc.metric, V, p),
        }
        if row["certified_affine"] and row["total_ricci"] <= c["ricci_tol"]:
            row["conclusion"] = "parallel" if (row["parallel_residual"] < c["parallel_tol"] and row["dot_energy"] < c["energy_tol"]) else "violated"
            passed = passed and row["conclusion"] == "parallel"
        else:
            row["conclusion"] = "hypotheses not met"
        rows[name] = row
    return {"results": {"fields": rows, **_grid_results(grid)}, "passed": passed}


def _check_reversibility(sc: Scenario, c: dict) -> dict:
    lam = reversibility(sc.metric, sc.domain, c["resolution"], c["angular_resolution"], c["seed"])
    passed = lam >= 1.0 - 1e-12 and _compare_expected(lam, c)
    return {"results": {"lambda": lam}, "passed": passed}


def _check_convergence(sc: Scenario, c: dict) -> dict:
    rows = convergence_rows(sc, c["target"], c["factors"])
    diffs = [r["self_difference"] for r in rows if r["self_difference"] is not None]
    passed = True
    if c.get("decreasing", True) and len(diffs) >= 2:
        passed = all(b < a or b < c["floor"] for a, b in zip(diffs, diffs[1:]))
    if "ratio_range" in c:
        lo, hi = c["ratio_range"]
        ratios = [a / b for a, b in zip(diffs, diffs[1:]) if b > 0]
        passed = passed and bool(ratios) and all(lo <= r <= hi for r in ratios)
    if "max_self_difference" in c and diffs:
        passed = passed and diffs[-1] <= c["max_self_difference"]
    return {"results": {"rows": rows}, "passed": passed}


_COMMON = {"name": None, "type": None, "tol": None, "seed": None}

CHECKS: dict[str, tuple[Callable, dict]] = {
    "validate": (_check_validate, {"samples": 64, "tol": 1e-9, "expect": "valid"}),
    "curvature-oracle": (_check_curvature_oracle, {"samples": 64, "oracle": "constant-curvature", "curvature": 1.0, "tol": 1e-6}),
    "brackets": (_check_brackets, {"samples": 64, "tol": 1e-7}),
    "compatibility": (_check_compatibility, {"samples": 64, "tol": 1e-8}),
    "affine": (_check_affine, {"field": None, "samples": 256, "tol": 1e-7, "leak_tol": 1e-8, "certify_tol": 1e-7, "expect": None}),
    "parallel": (_check_parallel, {"field": None, "samples": 64, "tol": 1e-6, "expect": "parallel"}),
    "flow-affinity": (
        _check_flow_affinity,
        {"field": None, "times": [0.25, 0.5, 1.0], "geodesics": 4, "t_end": 1.0, "steps": 100,
         "flow_step": 1e-3, "tol": 1e-7, "margin": 100.0, "expect": "affine", "x0": None, "y0": None},
    ),
    "geodesic": (_check_geodesic, {"x0": None, "y0": None, "t_end": 1.0, "steps": 1000, "tol": 1e-7, "exact_endpoint": None}),
    "contact": (_check_contact, {"resolution": 16, "tol_omega": 1e-9, "tol_domega": 1e-8}),
    "volume": (_check_volume, {"resolution": 32, "tol": 1e-10, "expected": None}),
    "stokes": (_check_stokes, {"function": None, "resolution": 48, "tol": 1e-8}),
    "total-ricci": (_check_total_ricci, {"field": None, "resolution": 16, "tol": 1e-6, "expected": None}),
    "global-norm": (_check_global_norm, {"field": None, "resolution": 16, "tol": 1e-10, "expected": None}),
    "identity": (_check_identity, {"field": None, "samples": 256, "tol": 1e-8}),
    "rigidity": (
        _check_rigidity,
        {"fields": None, "resolution": 16, "samples": 256, "certify_tol": 1e-7, "ricci_tol": 1e-10,
         "parallel_tol": 1e-6, "energy_tol": 1e-8},
    ),
    "reversibility": (_check_reversibility, {"resolution": 8, "angular_resolution": 1024, "tol": 1e-6, "expected": None}),
    "convergence": (
        _check_convergence,
        {"target": None, "factors": [1, 2, 4], "decreasing": True, "floor": 1e-13,
         "ratio_range": None, "max_self_difference": None},
    ),
}

# which key scales with the refinement factor
CONVERGENCE_KEYS = {
    "volume": "resolution",
    "stokes": "resolution",
    "total-ricci": "resolution",
    "global-norm": "resolution",
    "contact": "resolution",
    "geodesic": "steps",
}

_REQUIRED = {
    "affine": ["field"],
    "parallel": ["field"],
    "flow-affinity": ["field"],
    "geodesic": ["x0", "y0"],
    "stokes": ["function"],
    "total-ricci": ["field"],
    "global-norm": ["field"],
    "identity": ["field"],
    "rigidity": ["fields"],
    "convergence": ["target"],
}


def _normalise_check(spec: dict, k: int, raw: dict, fields: dict, functions: dict, domain: ChartDomain) -> dict:
    kind = spec["type"]
    path = f"checks.{k}"
    if kind not in CHECKS:
        raise ConfigError(f"unknown check type {kind!r}", path=f"{path}.type")
    defaults = CHECKS[kind][1]
    unknown = set(spec) - set(defaults) - set(_COMMON)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} for check type {kind!r}", path=path)
    c = {key: val for key, val in defaults.items() if val is not None}
    c.update({key: val for key, val in spec.items()})
    c.setdefault("name", f"{kind}-{k}")
    c.setdefault("seed", raw["seed"])
    for key in _REQUIRED.get(kind, []):
        if key not in c:
            raise ConfigError(f"check type {kind!r} requires {key!r}", path=f"{path}.{key}")
    for key in ("field",):
        if key in c and c[key] not in fields:
            raise ConfigError(f"unknown field name {c[key]!r}", path=f"{path}.{key}")
    if "fields" in c:
        for name in c["fields"]:
            if name not in fields:
                raise ConfigError(f"unknown field name {name!r}", path=f"{path}.fields")
    if "function" in c and c["function"] not in functions:
        raise ConfigError(f"unknown function name {c['function']!r}", path=f"{path}.function")
    if "resolution" in c and (not isinstance(c["resolution"], int) or c["resolution"] < 8):
        raise ConfigError("resolution must be an integer >= 8", path=f"{path}.resolution")
    if "samples" in c and (not isinstance(c["samples"], int) or c["samples"] < 1):
        raise ConfigError("samples must be a positive integer", path=f"{path}.samples")
    if CONVERGENCE_KEYS.get(kind) == "resolution" or kind in ("rigidity",):
        if not domain.is_torus:
            raise ConfigError(f"check type {kind!r} needs a torus domain", path=path)
    if "x0" in c and len(c["x0"]) != domain.dim:
        raise ConfigError("x0 has the wrong dimension", path=f"{path}.x0")
    return c


def run_check(sc: Scenario, c: dict) -> tuple[dict, float]:
    func = CHECKS[c["type"]][0]
    inputs = {k: v for k, v in c.items() if k not in ("name", "type")}
    entry = {"name": c["name"], "type": c["type"], "inputs": inputs}
    start = time.perf_counter()
    try:
        out = func(sc, c)
        entry["results"] = _jsonable(out["results"])
        if "worst" in out:
            entry["worst"] = _jsonable(out["worst"])
        entry["tolerance"] = out.get("tolerance", c.get("tol"))
        entry["passed"] = bool(out["passed"])
        entry["error"] = None
    except (FinslerError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.warning("check %s failed with %s", c["name"], exc)
        entry["results"] = {}
        entry["tolerance"] = c.get("tol")
        entry["passed"] = False
        entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry, time.perf_counter() - start


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return min(4, os.cpu_count() or 1)


@dataclass
class Report:
    data: dict
    timings: dict

    @property
    def passed(self) -> bool:
        return self.data["passed"]

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, allow_nan=False) + "\n"


def run(sc: Scenario, threads: int | None = None) -> Report:
    workers = thread_count(threads)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(lambda c: run_check(sc, c), sc.checks))
    entries = [o[0] for o in outcomes]
    signs = sorted({g[1].sign for g in sc._grids.values() if g[1] is not None})
    data = {
        "tool": "finsler-lab",
        "version": __version__,
        "scenario": sc.name,
        "seed": sc.seed,
        "domain": _jsonable({"dim": sc.domain.dim, "periods": sc.domain.periods, "bounds": sc.domain.bounds}),
        "metric": _jsonable(sc.metric.describe()),
        "grid_sign": signs[0] if len(signs) == 1 else None,
        "checks": entries,
        "passed": all(e["passed"] for e in entries),
    }
    timings = {e["name"]: o[1] for e, o in zip(entries, outcomes)}
    return Report(data, timings)


def run_scenario(config_path: str | os.PathLike, out_dir: str | os.PathLike | None = None, threads: int | None = None) -> Report:
    """Load, run and (optionally) write ``report.json`` and ``timings.json`` to ``out_dir``."""
    sc = load_scenario(config_path)
    report = run(sc, threads)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "timings.json").write_text(json.dumps(report.timings, indent=2) + "\n", encoding="utf-8")
    return report


# ---------------------------------------------------------------------------
# convergence tables


def _scalar_and_vector(entry: dict, kind: str):
    res = entry["results"]
    if kind == "geodesic":
        end = np.array(res["endpoint"])
        return float(np.linalg.norm(end)), end
    if kind == "contact":
        v = max(res["omega_xi_error"], res["domega_xi_error"])
        return v, np.array([v])
    if kind == "stokes":
        return res["value"], np.array([res["value"]])
    return res["value"], np.array([res["value"]])


def convergence_rows(sc: Scenario, check_name: str, factors) -> list[dict]:
    target = sc.check_named(check_name)
    kind = target["type"]
    if kind not in CONVERGENCE_KEYS:
        raise ConfigError(f"check type {kind!r} has no resolution axis", path=check_name)
    key = CONVERGENCE_KEYS[kind]
    rows = []
    prev_vec = None
    prev_diff = None
    prev_factor = None
    for f in factors:
        c = dict(target)
        c[key] = int(round(target[key] * f))
        c["name"] = f"{check_name}@{c[key]}"
        entry, _ = run_check(sc, c)
        if entry["error"]:
            raise FinslerError(f"convergence run at {key}={c[key]} failed: {entry['error']}")
        value, vec = _scalar_and_vector(entry, kind)
        diff = None if prev_vec is None else float(np.max(np.abs(vec - prev_vec)))
        order = None
        if diff is not None and prev_diff is not None and diff > 0 and prev_diff > 0:
            order = math.log(prev_diff / diff) / math.log(f / prev_factor)
        rows.append({"resolution": c[key], "value": value, "self_difference": diff, "observed_order": order})
        prev_vec, prev_diff, prev_factor = vec, diff, f
    return rows


def convergence_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["resolution", "value", "self_difference", "observed_order"])
    for r in rows:
        w.writerow([r["resolution"]] + ["" if r[k] is None else repr(float(r[k])) for k in ("value", "self_difference", "observed_order")])
    return buf.getvalue()


def convergence_study(config_path: str | os.PathLike, check: str, factors) -> str:
    """CSV table of (resolution, value, self_difference, observed_order)."""
    sc = load_scenario(config_path)
    return convergence_csv(convergence_rows(sc, check, factors))
