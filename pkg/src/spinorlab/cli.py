"""``spinorlab`` command line: run one experiment and write CSV and JSON reports.

Exit codes: 0 when every check passes, 1 on a tolerance or upstream failure,
2 on a configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from . import experiments
from .errors import ConfigInvalid, SpinorLabError, UpstreamFailure
from .montecarlo import GHOST_MOVES, resolve_threads

SCHEMA_VERSION = 1
CSV_COLUMNS = ("label", "delta", "points", "quantity", "discrete", "target", "abs_err", "rel_err", "stderr", "tol", "pass")

_MC = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_therm": {"type": "integer", "minimum": 0},
        "n_clusters": {"type": "integer", "minimum": 8},
        "batch": {"type": "integer", "minimum": 1},
        "chains": {"type": "integer", "minimum": 1},
        "ghost_move": {"enum": list(GHOST_MOVES)},
    },
}
_TOL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "exact": {"type": "number", "exclusiveMinimum": 0},
        "equivalence": {"type": "number", "exclusiveMinimum": 0},
        "asymptotic": {"type": "number", "exclusiveMinimum": 0},
        "decorrelation": {"type": "number", "exclusiveMinimum": 0},
        "stderr_multiple": {"type": "number", "exclusiveMinimum": 0},
    },
}
_DELTA = {"oneOf": [{"type": "string", "pattern": r"^\s*1\s*/\s*[1-9][0-9]*\s*$"}, {"type": "number", "exclusiveMinimum": 0, "maximum": 1}]}
_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_PAIR = {"type": "array", "items": _POINT, "minItems": 2, "maxItems": 2}
_SUITE = {
    "max_faces_exhaustive": {"type": "integer", "minimum": 1, "maximum": 12},
    "sample_max_faces": {"type": "integer", "minimum": 0, "maximum": 16},
    "sample_per_size": {"type": "integer", "minimum": 0},
    "k_max": {"type": "integer", "minimum": 0, "maximum": 2},
}


def _options(props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props}


OPTION_SCHEMAS = {
    "ratio-identities": _options(_SUITE),
    "solver-vs-oracle": _options(_SUITE),
    "logderiv-convergence": _options({}),
    "B-convergence": _options({
        "mc_block": {"oneOf": [{"type": "null"}, {
            "type": "object", "additionalProperties": False, "required": ["size", "points"],
            "properties": {"size": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 2, "maxItems": 2},
                           "points": {"type": "array", "items": _PAIR, "minItems": 1}}}]},
    }),
    "magnetization-scaling": _options({
        "exponent_window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "exact_reference": {"type": "boolean"},
        "ratio_check": {"oneOf": [{"type": "null"}, {
            "type": "object", "additionalProperties": False, "required": ["delta", "points", "rel_tol"],
            "properties": {"delta": _DELTA, "points": _PAIR, "rel_tol": {"type": "number", "minimum": 0}}}]},
    }),
    "two-point-universality": _options({}),
    "fullplane-scaling": _options({
        "window": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2},
        "window_tol": {"type": "number"},
        "theta_spread": {"type": "number"},
        "nu_theta_tol": {"type": "number"},
        "closure_tol": {"type": "number"},
        "beurling_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "beurling_window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "near_slit_tol": {"type": "number"},
    }),
    "cft-match": _options({
        "closed_form_tol": {"type": "number"},
        "two_point_tol": {"type": "number"},
        "axis_k_max": {"type": "integer", "minimum": 0},
        "axis_tol": {"type": "number"},
        "general_k_max": {"type": "integer", "minimum": 1},
        "general_samples": {"type": "integer", "minimum": 1},
        "general_tol": {"type": "number"},
        "report_k_max": {"type": "integer", "minimum": 1},
    }),
    "decorrelation": _options({}),
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": sorted(OPTION_SCHEMAS)},
        "domain": {"type": "string", "pattern": r"^\s*(disc|rectangle)\s*\([^)]*\)\s*$"},
        "deltas": {"type": "array", "items": _DELTA},
        "points": {"type": "array", "items": {"type": "array", "items": _POINT, "minItems": 1}},
        "mc": _MC,
        "tolerances": _TOL,
        "options": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"csv": {"type": "string"}, "json": {"type": "string"}, "trace": {"type": "string"}},
        },
    },
}

_COMMON = {
    "schema_version": SCHEMA_VERSION,
    "domain": "disc(1)",
    "deltas": [],
    "points": [],
    "seed": 0,
    "mc": {"n_therm": 10_000, "n_clusters": 1_000_000, "batch": 10_000, "chains": 1, "ghost_move": "complement"},
    "tolerances": {"exact": 1e-12, "equivalence": 1e-9, "asymptotic": 0.02, "decorrelation": 1e-2, "stderr_multiple": 4.0},
    "options": {},
    "output": {},
}

DEFAULTS = {
    "ratio-identities": {
        "options": {"max_faces_exhaustive": 7, "sample_max_faces": 12, "sample_per_size": 2, "k_max": 2},
    },
    "solver-vs-oracle": {
        "options": {"max_faces_exhaustive": 6, "sample_max_faces": 12, "sample_per_size": 2, "k_max": 2},
    },
    "logderiv-convergence": {
        "deltas": ["1/16", "1/32", "1/64"],
        # on faces at every listed delta, so snapping adds no lattice-scale noise
        "points": [[[0, 0]], [[0, 0], [-0.375, 0.25]], [[0, 0], [-0.375, 0.25], [0.375, -0.5]]],
    },
    "B-convergence": {
        "deltas": ["1/16", "1/32", "1/64"],
        "points": [[[-0.25, 0], [0.25, 0]]],
        "tolerances": {"asymptotic": 0.03},
        "options": {"mc_block": {"size": [32, 32], "points": [[[0.71875, 0], [1.28125, 0]]]}},
    },
    "magnetization-scaling": {
        "deltas": ["1/8", "1/12", "1/16", "1/24", "1/32", "1/48"],
        "points": [[[0, 0]]],
        "options": {"exponent_window": [0.115, 0.135], "exact_reference": False,
                    "ratio_check": {"delta": "1/32", "points": [[0, 0], [0.5, 0]], "rel_tol": 0.02}},
    },
    "two-point-universality": {
        "deltas": ["1/16", "1/32", "1/64"],
        "points": [[[-0.25, 0.25], [0.25, -0.25]]],
        "tolerances": {"asymptotic": 0.05},
    },
    "fullplane-scaling": {
        "deltas": ["1/16", "1/32", "1/64"],
        "options": {"window": [0.25, 1.0], "window_tol": 0.05, "theta_spread": 0.15, "nu_theta_tol": 0.05,
                    "closure_tol": 1e-10, "beurling_range": [0.1, 1.0], "beurling_window": [0.45, 0.55],
                    "near_slit_tol": 0.1},
    },
    "cft-match": {
        "options": {"closed_form_tol": 1e-9, "two_point_tol": 1e-10, "axis_k_max": 6, "axis_tol": 1e-8,
                    "general_k_max": 3, "general_samples": 100, "general_tol": 1e-6, "report_k_max": 5},
    },
    "decorrelation": {},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and v:
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def default_config(experiment: str) -> dict:
    if experiment not in DEFAULTS:
        raise ConfigInvalid(f"unknown experiment {experiment!r}")
    cfg = _merge(_COMMON, DEFAULTS[experiment])
    cfg["experiment"] = experiment
    return cfg


def load_config(experiment: str, user: Optional[dict] = None) -> dict:
    """Validate a user config (unknown keys rejected) and fill in defaults."""
    user = {} if user is None else user
    if not isinstance(user, dict):
        raise ConfigInvalid("config must be a JSON object")
    if "schema_version" not in user:
        user = dict(user, schema_version=SCHEMA_VERSION)
    try:
        jsonschema.validate(user, CONFIG_SCHEMA)
        jsonschema.validate(user.get("options", {}), OPTION_SCHEMAS[experiment])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{path}: {exc.message}") from None
    if user.get("experiment", experiment) != experiment:
        raise ConfigInvalid(f"config is for {user['experiment']!r}, not {experiment!r}")
    cfg = _merge(default_config(experiment), user)
    mc = cfg["mc"]
    if mc["n_clusters"] // mc["batch"] < 8:
        raise ConfigInvalid("mc: need at least 8 batches (n_clusters / batch)")
    return cfg


def build_id() -> str:
    """Hash of the package sources, so a report names the exact code that made it."""
    h = hashlib.sha256()
    pkg = resources.files("spinorlab")
    for name in sorted(p.name for p in pkg.iterdir() if p.name.endswith(".py")):
        h.update(name.encode())
        h.update(pkg.joinpath(name).read_bytes())
    return h.hexdigest()[:16]


def _num(x: float):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def write_reports(result: experiments.ExperimentResult, cfg: dict, out_dir: Path) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / cfg["output"].get("csv", f"{result.experiment}.csv")
    json_path = out_dir / cfg["output"].get("json", f"{result.experiment}.json")
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# schema=spinorlab.{result.experiment}/{SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in result.rows:
            w.writerow([r.label, r.delta, r.points, r.quantity, repr(float(r.discrete)), repr(float(r.target)),
                        repr(float(r.abs_err)), repr(float(r.rel_err)), repr(float(r.stderr)), repr(float(r.tol)),
                        int(r.passed)])
    summary = {
        "schema": f"spinorlab.summary/{SCHEMA_VERSION}",
        "experiment": result.experiment,
        "claim": result.claim,
        "build_id": build_id(),
        "seed": cfg["seed"],
        "passed": result.passed,
        "checks": [{"name": c.name, "value": _num(c.value), "bound": c.bound, "passed": c.passed} for c in result.checks],
        "n_rows": len(result.rows),
        "csv": csv_path.name,
        "config": cfg,
    }
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(prog="spinorlab", description="Run one spinorlab experiment and write CSV/JSON reports.")
    parser.add_argument("experiment", choices=sorted(DEFAULTS))
    parser.add_argument("--config", type=Path, help="JSON config file (defaults are used for missing keys)")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--threads", type=int, help="worker threads (default: $SPINORLAB_THREADS, else all cores)")
    args = parser.parse_args(argv)

    try:
        user = {}
        if args.config is not None:
            try:
                user = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigInvalid(f"cannot read config: {exc}") from None
        if args.seed is not None:
            user = dict(user, seed=args.seed)
        cfg = load_config(args.experiment, user)
    except ConfigInvalid as exc:
        print(f"spinorlab: configuration error: {exc}", file=sys.stderr)
        return 2

    threads = resolve_threads(args.threads)
    try:
        try:
            result = experiments.run(cfg, threads)
        except SpinorLabError as exc:
            raise UpstreamFailure(f"{type(exc).__name__}: {exc}") from exc
    except UpstreamFailure as exc:
        print(f"spinorlab: upstream failure: {exc}", file=sys.stderr)
        return 1
    csv_path, json_path = write_reports(result, cfg, args.out)
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.6g} ({c.bound})")
    print(f"wrote {csv_path} and {json_path}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
