"""Scenario runner: ``qzeno <command> --config <path> [--out <path>] [--format csv|json] [--workers N]``.

Configs are YAML documents validated against a strict schema. Every default
is materialized into the resolved config, which is echoed in the output
metadata.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import jsonschema
import numpy as np
import yaml

from . import __version__, charfunc, fock, verification, zeno
from ._backend import BACKEND
from .detector import DetectorParams, gamma_up_from_nbar, nbar_of_temperature
from .errors import (ConfigParseError, ConfigValidationError, GateError, OutputError, ParameterError,
                     QZenoError)
from .system import MeasuredSystemSpec

COMMANDS = ("decoherence", "lineshape", "jump", "rate-scan", "verify")
CONSISTENCY_TOL = 1e-9

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_pos = {"type": "number", "exclusiveMinimum": 0}
_label = {"type": ["integer", "string"]}
_state = {"type": "array", "prefixItems": [{"type": "integer"}, _label], "minItems": 2, "maxItems": 2}
_times = {"type": "array", "items": _nonneg, "minItems": 1}


def _obj(props, required=(), **kw):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False, **kw}


SCHEMA = _obj({
    "command": {"enum": list(COMMANDS)},
    "detector": _obj({
        "omega": _pos,
        "gamma_phase": {**_nonneg, "default": 0.0},
        "gamma_down": {**_nonneg, "default": 0.0},
        "gamma_up": _nonneg,
        "nbar": _nonneg,
        "T": _nonneg,
        "nbar_cap": _nonneg,
    }, required=["omega"], anyOf=[{"required": ["nbar"]}, {"required": ["T"]}]),
    "system": _obj({
        "levels": {"type": "array", "minItems": 1, "items": _obj({
            "index": {"type": "integer"},
            "omega": _num,
            "sublevels": {"type": "array", "minItems": 1, "default": [{"label": 0, "energy": 0.0}],
                          "items": _obj({"label": _label, "energy": _num}, required=["label", "energy"])},
        }, required=["index", "omega"])},
        "couplings": {"type": "array", "default": [], "items": _obj({
            "initial": _state, "final": _state, "re": _num, "im": {**_num, "default": 0.0},
        }, required=["initial", "final", "re"])},
    }, required=["levels"]),
    "lambda": _nonneg,
    "transition": _obj({"initial": _state, "final": _state}, required=["initial", "final"]),
    "times": _times,
    "pairs": {"type": "array", "minItems": 1,
              "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}},
    "t": _pos,
    "omega_grid": {"default": None, "oneOf": [
        {"type": "null"},
        {"type": "array", "items": _num, "minItems": 2},
        _obj({"start": _num, "stop": _num, "num": {"type": "integer", "minimum": 2}},
             required=["start", "stop", "num"]),
    ]},
    "nbar_list": {"type": "array", "items": _nonneg, "minItems": 1},
    "lambda_list": {"type": "array", "items": _nonneg, "minItems": 1},
    "gate": {**_pos, "default": zeno.FAST_GATE},
    "quadrature": _obj({
        "rtol": {**_pos, "default": 1e-8},
        "limit": {"type": "integer", "minimum": 1, "default": 200},
        "omega_points": {"type": "integer", "minimum": 3, "default": 400},
    }, default={}),
    "integrator": _obj({
        "rtol": {**_pos, "default": verification.VERIFY_CONTROLS.rtol},
        "atol": {**_pos, "default": verification.VERIFY_CONTROLS.atol},
        "max_step": {"type": ["number", "null"], "default": None},
    }, default={}),
    "verify": _obj({
        "checks": {"type": "array", "uniqueItems": True, "default": ["relaxation", "decoherence", "two_time", "jump"],
                   "items": {"enum": ["relaxation", "decoherence", "two_time", "jump"]}},
        "tolerance": {**_pos, "default": verification.DEFAULT_TOL},
        "nbar0": {**_nonneg, "default": 3.0},
        "relaxation_times": {**_times, "default": [0.5, 1.0, 2.0, 5.0]},
        "times": {**_times, "default": [0.05, 0.1, 0.15, 0.2, 0.25]},
        "xis": {"type": "array", "default": [[0.0, 0.0], [0.3, 0.0], [0.0, 0.2]],
                "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
        "pairs": {"type": "array", "default": [[0.05, 0.0], [0.1, 0.0], [0.15, 0.0], [0.15, 0.1], [0.2, 0.1],
                                               [0.25, 0.1], [0.25, 0.2], [0.3, 0.2], [0.35, 0.2]],
                  "items": {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2}},
        "jump_times": {**_times, "default": [1.0]},
        "dimension": {"type": ["integer", "null"], "minimum": 2, "default": None},
    }, default={}),
    "output": _obj({
        "path": {"type": ["string", "null"], "default": None},
        "format": {"enum": ["csv", "json"], "default": "csv"},
    }, default={}),
}, required=["detector", "system", "lambda"])

REQUIRED_BY_COMMAND = {
    "decoherence": ["times", "pairs"],
    "lineshape": ["transition", "t"],
    "jump": ["transition", "times"],
    "rate-scan": ["transition"],
    "verify": ["transition"],
}


def _fill_defaults(node, schema):
    if not isinstance(node, dict) or schema.get("type") != "object":
        if isinstance(node, list) and isinstance(schema.get("items"), dict):
            for item in node:
                _fill_defaults(item, schema["items"])
        return
    for key, sub in schema.get("properties", {}).items():
        if key not in node and "default" in sub:
            node[key] = copy.deepcopy(sub["default"])
        if key in node:
            _fill_defaults(node[key], sub)


def _validation_error(path, msg):
    where = "/".join(str(p) for p in path) or "<root>"
    return ConfigValidationError(f"{where}: {msg}")


def _check_detector(d):
    if "T" in d:
        T = float(d["T"])
        n_from_T = nbar_of_temperature(d["omega"], T, d.get("nbar_cap"))
        if "nbar" in d:
            if abs(n_from_T - d["nbar"]) > CONSISTENCY_TOL * max(1.0, abs(d["nbar"])):
                raise _validation_error(["detector"], f"T={T} gives nbar={n_from_T!r} but nbar={d['nbar']!r} "
                                                      "was also given; give one or make them agree")
        else:
            d["nbar"] = n_from_T
    if "gamma_up" in d:
        expected = gamma_up_from_nbar(d["gamma_down"], d["nbar"])
        if abs(d["gamma_up"] - expected) > CONSISTENCY_TOL * max(abs(expected), 1e-300):
            if not (expected == 0 and d["gamma_up"] == 0):
                raise _validation_error(["detector", "gamma_up"],
                                        f"{d['gamma_up']!r} violates detailed balance "
                                        f"(gamma_down * nbar / (nbar + 1) = {expected!r})")


def load_config(path: str, command: Optional[str] = None) -> Dict[str, Any]:
    """Read, validate and fully resolve a scenario config."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path!r}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"config {path!r} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigParseError(f"config {path!r} must be a mapping at top level")
    return resolve_config(raw, command)


def resolve_config(raw: Dict[str, Any], command: Optional[str] = None) -> Dict[str, Any]:
    cfg = copy.deepcopy(raw)
    if command is not None:
        if cfg.get("command", command) != command:
            raise _validation_error(["command"], f"config is for {cfg['command']!r}, invoked as {command!r}")
        cfg["command"] = command
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise _validation_error(list(e.absolute_path), e.message)
    if "command" not in cfg:
        raise _validation_error(["command"], "no command given")
    _fill_defaults(cfg, SCHEMA)
    for key in REQUIRED_BY_COMMAND[cfg["command"]]:
        if key not in cfg:
            raise _validation_error([key], f"required for {cfg['command']!r}")
    if cfg["command"] == "rate-scan" and ("nbar_list" in cfg) == ("lambda_list" in cfg):
        raise _validation_error(["nbar_list"], "rate-scan needs exactly one of nbar_list, lambda_list")
    _check_detector(cfg["detector"])
    try:
        det = build_detector(cfg)
        spec = build_system(cfg)
        if "transition" in cfg:
            spec.index(cfg["transition"]["initial"])
            spec.index(cfg["transition"]["final"])
        for m, n in cfg.get("pairs", []):
            if m not in spec.levels or n not in spec.levels:
                raise ParameterError(f"pair {[m, n]} names an unknown level")
        zeno.QuadratureControls(**cfg["quadrature"])
        build_controls(cfg)
    except ParameterError as exc:
        raise ConfigValidationError(str(exc)) from None
    cfg["derived"] = {"nbar": det.nbar, "gamma_up": det.gamma_up, "gamma_eff": det.gamma_eff}
    return cfg


def build_detector(cfg) -> DetectorParams:
    d = cfg["detector"]
    return DetectorParams(d["omega"], d["gamma_phase"], d["gamma_down"], d["nbar"])


def build_system(cfg) -> MeasuredSystemSpec:
    s = cfg["system"]
    levels, sub = {}, {}
    for lv in s["levels"]:
        if lv["index"] in levels:
            raise ParameterError(f"duplicate level index {lv['index']}")
        levels[lv["index"]] = float(lv["omega"])
        sub[lv["index"]] = {x["label"]: float(x["energy"]) for x in lv["sublevels"]}
    v = {(tuple(c["initial"]), tuple(c["final"])): complex(c["re"], c["im"]) for c in s["couplings"]}
    return MeasuredSystemSpec(levels=levels, v_elements=v, lam=float(cfg["lambda"]), sublevels=sub)


def build_controls(cfg) -> fock.IntegratorControls:
    i = cfg["integrator"]
    return fock.IntegratorControls(i["rtol"], i["atol"], math.inf if i["max_step"] is None else i["max_step"])


# --- results ----------------------------------------------------------------

@dataclass
class ResultTable:
    columns: List[str]
    rows: List[tuple] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError(f"row {r!r} does not match {len(self.columns)} columns")


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _csv_cell(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def render(table: ResultTable, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table.columns)
        for r in table.rows:
            w.writerow([_csv_cell(x) for x in r])
        return buf.getvalue()
    if fmt == "json":
        doc = {"columns": table.columns, "rows": _plain(table.rows), "metadata": _plain(table.metadata)}
        return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"
    raise ParameterError(f"unknown format {fmt!r}")


def emit(table: ResultTable, fmt: str, path: Optional[str]) -> None:
    text = render(table, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path!r}: {exc}") from None


# --- commands -----------------------------------------------------------------

def _run_decoherence(cfg, det, spec, workers):
    times = np.asarray(cfg["times"], dtype=float)
    rows = []
    for m, n in cfg["pairs"]:
        pair = charfunc.LevelPair(m, n, spec.levels[m], spec.levels[n])
        c00 = charfunc.c00_measurement(pair, spec.lam, times, det)
        for t, c in zip(times, c00):
            rows.append((m, n, float(t), float(np.exp(c.real)), float(c.real), float(c.imag)))
    meta = {"decoherence_rates": {f"{m},{n}": charfunc.decoherence_rate(
        charfunc.LevelPair(m, n, spec.levels[m], spec.levels[n]), spec.lam, det) for m, n in cfg["pairs"]}}
    return ResultTable(["m", "n", "t", "abs_exp_c00", "re_c00", "im_c00"], rows, meta)


def _run_lineshape(cfg, det, spec, workers):
    tr = cfg["transition"]
    grid = cfg["omega_grid"]
    if isinstance(grid, dict):
        grid = np.linspace(grid["start"], grid["stop"], grid["num"])
    q = zeno.QuadratureControls(**cfg["quadrature"])
    line = zeno.line_shape(spec.omega(tr["initial"]), spec.omega(tr["final"]), det, spec.lam, cfg["t"],
                           grid, q, cfg["gate"])
    rows = list(zip(line.omega_grid.tolist(), line.p_values.tolist()))
    flags = []
    if line.metadata["grid_warning"]:
        flags.append(line.metadata["grid_warning"])
    if line.metadata["negative_flag"]:
        flags.append(f"line shape dips to {line.metadata['min_p']:.3e}")
    return ResultTable(["omega", "p"], rows, {"line_shape": line.metadata, "flags": flags})


def _jump_point(args):
    spec, det, i, f, t, q, gate = args
    wg, info = zeno.jump_probability_general(spec, det, i, f, t, q, full_output=True)
    try:
        wf = zeno.jump_probability_fast_dissipation(spec, det, i, f, t, q, gate)
    except GateError:
        wf = math.nan
    return (t, wg, wf, info["imag_residue"])


def _run_jump(cfg, det, spec, workers):
    tr = cfg["transition"]
    q = zeno.QuadratureControls(**cfg["quadrature"])
    jobs = [(spec, det, tuple(tr["initial"]), tuple(tr["final"]), float(t), q, cfg["gate"]) for t in cfg["times"]]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_jump_point, jobs))
    else:
        rows = [_jump_point(j) for j in jobs]
    gated_in = det.omega <= cfg["gate"] * det.gamma_eff
    flags = [] if gated_in else [f"fast-dissipation path gated out (Omega/gamma_eff = {det.omega / det.gamma_eff:.4g})"]
    return ResultTable(["t", "w_general", "w_fast", "residual_imag"], rows, {"flags": flags,
                                                                              "fast_path": gated_in})


def _run_rate_scan(cfg, det, spec, workers):
    tr = cfg["transition"]
    i, f = tuple(tr["initial"]), tuple(tr["final"])
    if "nbar_list" in cfg:
        table = zeno.rate_temperature_scan(spec, det, i, f, cfg["nbar_list"])
        cols = ["nbar", "rate", "rate_lambda_sqrt"]
    else:
        table = zeno.rate_lambda_scan(spec, det, i, f, cfg["lambda_list"])
        cols = ["lambda", "rate", "rate_lambda_sqrt"]
    _, audit = zeno.asymptotic_rate(spec, det, i, f, full_output=True) if spec.lam > 0 else (None, None)
    return ResultTable(cols, [tuple(r) for r in table.tolist()], {"validity_audit": audit})


def _run_verify(cfg, det, spec, workers):
    v = cfg["verify"]
    tr = cfg["transition"]
    i, f = tuple(tr["initial"]), tuple(tr["final"])
    wi, wf = spec.omega(i), spec.omega(f)
    controls = build_controls(cfg)
    tol, N = v["tolerance"], v["dimension"]
    checks, dims = [], {}
    if "relaxation" in v["checks"]:
        checks += verification.relaxation_checks(det, v["nbar0"], v["relaxation_times"], N, tol, controls)
    if "decoherence" in v["checks"]:
        xis = [complex(a, b) for a, b in v["xis"]]
        checks += verification.decoherence_checks(det, spec.lam, wi, wf, v["times"], xis, N, tol, controls)
    if "two_time" in v["checks"]:
        checks += verification.two_time_checks(det, spec.lam, wi, wf, [tuple(p) for p in v["pairs"]], N, tol,
                                               controls)
    if "jump" in v["checks"]:
        q = zeno.QuadratureControls(**{**cfg["quadrature"], "rtol": min(cfg["quadrature"]["rtol"], 1e-10)})
        checks += verification.jump_checks(spec, det, i, f, v["jump_times"], N, tol, q, controls)
    rows = []
    for c in checks:
        rows.append((c.name, c.analytic.real, c.analytic.imag, c.oracle.real, c.oracle.imag, c.rel_error,
                     c.tolerance, "pass" if c.passed else "fail"))
        kind = c.name.split(" ")[0]
        dims[kind] = c.dimension
    failed = [c.name for c in checks if not c.passed]
    meta = {"audit_dimension": dims, "failed": failed, "flags": [f"{len(failed)} check(s) failed"] if failed else []}
    cols = ["check", "analytic_re", "analytic_im", "oracle_re", "oracle_im", "rel_error", "tolerance", "status"]
    return ResultTable(cols, rows, meta)


RUNNERS = {
    "decoherence": _run_decoherence,
    "lineshape": _run_lineshape,
    "jump": _run_jump,
    "rate-scan": _run_rate_scan,
    "verify": _run_verify,
}


def run_scenario(cfg: Dict[str, Any], workers: int = 1) -> ResultTable:
    det = build_detector(cfg)
    spec = build_system(cfg)
    table = RUNNERS[cfg["command"]](cfg, det, spec, workers)
    meta = {"config": cfg, "version": __version__, "backend": BACKEND}
    meta.update(table.metadata)
    meta.setdefault("flags", [])
    table.metadata = meta
    return table


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qzeno", description="Continuous-measurement Zeno scenarios.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML scenario file")
    p.add_argument("--out", default=None, help="output file (default: config output.path, else stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--workers", type=int, default=1)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigValidationError("--workers must be >= 1")
        cfg = load_config(args.config, args.command)
        if args.out is not None:
            cfg["output"]["path"] = args.out
        if args.format is not None:
            cfg["output"]["format"] = args.format
        table = run_scenario(cfg, args.workers)
        emit(table, cfg["output"]["format"], cfg["output"]["path"])
    except QZenoError as exc:
        print(f"qzeno: error: {exc}", file=sys.stderr)
        return exc.exit_code
    if cfg["command"] == "verify" and table.metadata["failed"]:
        print(f"qzeno: {len(table.metadata['failed'])} verification check(s) failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
