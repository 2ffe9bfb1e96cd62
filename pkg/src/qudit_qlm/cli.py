"""Command-line entry point: ``qudit-qlm <subcommand> ...``.

Exit codes: 0 success, 1 other engine failure, 2 config error, 3 budget
exceeded, 4 all trajectories discarded.  Failures print a one-line JSON
error record on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from . import __version__
from .compiler import assemble_trotter, gate_count_table, WallSchedule
from .errors import AllTrajectoriesDiscarded, BudgetError, ConfigError, QLMError
from .model import LatticeModel, enumerate_physical
from .noise import DEFAULT_SAMPLES, NoiseModel
from .records import SCHEMA_VERSION, ObservableRecord
from .scattering import (PRESETS, ScatteringProtocol, flux_snapshots, preset, run_experiment,
                         snapshot_csv, subtract_free, subtract_vacuum)

OUT_ENV = "QUDIT_QLM_OUT"

_PROTOCOL_PROPS = {
    "L": {"type": "integer", "minimum": 2},
    "kind": {"enum": ["meson_meson", "meson_antimeson", "free_left", "free_right", "vacuum"]},
    "left_link": {"type": "integer", "minimum": 0},
    "right_link": {"type": "integer", "minimum": 0},
    "walls": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    "hold_steps": {"type": "integer", "minimum": 0},
    "kappa": {"type": "number"},
    "mu": {"type": "number"},
    "g": {"type": "number"},
    "T": {"type": "number", "exclusiveMinimum": 0},
    "N": {"type": "integer", "minimum": 0},
    "formulation": {"enum": ["integrated_out", "matterful"]},
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": sorted(PRESETS)},
        "protocol": {"type": "object", "additionalProperties": False, "properties": _PROTOCOL_PROPS},
        "engine": {"enum": ["exact", "noiseless", "noisy"]},
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number", "minimum": 0},
                "n_samples": {"type": "integer", "minimum": 1},
                "mode": {"enum": ["trajectories", "kraus"]},
                "postselect": {"type": "boolean"},
                "weighting": {"enum": ["uniform", "survival"]},
            },
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "jobs": {"type": "integer", "minimum": 1},
    },
}

_NOISE_DEFAULTS = {"alpha": 1.0, "n_samples": DEFAULT_SAMPLES, "mode": "trajectories",
                   "postselect": True, "weighting": "uniform"}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {loc}: {exc.message}") from exc


def resolve(cfg: dict, args) -> dict:
    """Merge config file, preset and command-line flags into one plain dict."""
    cfg = json.loads(json.dumps(cfg))  # deep copy
    for key in ("preset", "engine", "seed", "output_dir", "jobs"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    proto = dict(cfg.get("protocol", {}))
    for key in ("kind", "formulation", "N", "T", "g"):
        val = getattr(args, key, None)
        if val is not None:
            proto[key] = val
    if proto:
        cfg["protocol"] = proto
    noise = dict(_NOISE_DEFAULTS)
    noise.update(cfg.get("noise", {}))
    for key in ("alpha", "n_samples", "mode"):
        val = getattr(args, key, None)
        if val is not None:
            noise[key] = val
    cfg["noise"] = noise
    cfg.setdefault("engine", "noiseless")
    cfg.setdefault("seed", 0)
    cfg.setdefault("jobs", 1)
    validate_config(cfg)
    if "preset" not in cfg and "L" not in cfg.get("protocol", {}):
        raise ConfigError("give a preset or explicit protocol parameters")
    cfg["protocol"] = build_protocol(cfg).to_dict()
    return cfg


def build_protocol(cfg: dict) -> ScatteringProtocol:
    over = dict(cfg.get("protocol", {}))
    over.pop("name", None)
    try:
        if "preset" in cfg:
            return preset(cfg["preset"], **over)
        return ScatteringProtocol(**over)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid protocol: {exc}") from exc


def out_dir(cfg: dict, args) -> Path:
    root = cfg.get("output_dir") or os.environ.get(OUT_ENV) or "."
    p = Path(root)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _header(cfg: dict) -> str:
    return "# " + json.dumps({"schema_version": SCHEMA_VERSION, "config": cfg}, sort_keys=True,
                             separators=(",", ":")) + "\n"


def _stem(cfg: dict) -> str:
    p = cfg["protocol"]
    name = p.get("name") or f"L{p['L']}"
    return f"{name}_{p['kind']}_{p['formulation']}_{cfg['engine']}_s{cfg['seed']}"


def _run(cfg: dict, args) -> int:
    proto = ScatteringProtocol(**{**cfg["protocol"], "walls": tuple(cfg["protocol"]["walls"])})
    nz = cfg["noise"]
    noise = NoiseModel(nz["alpha"])
    rec = run_experiment(proto, cfg["engine"], noise, nz["n_samples"], nz["mode"], nz["postselect"],
                         nz["weighting"], cfg["seed"], cfg["jobs"])
    rec.meta["config"] = cfg
    d = out_dir(cfg, args)
    stem = _stem(cfg)
    head = _header(cfg)
    (d / f"{stem}_charge.csv").write_text(head + rec.heatmap_csv("charge"))
    (d / f"{stem}_flux.csv").write_text(head + rec.heatmap_csv("flux"))
    (d / f"{stem}.ndjson").write_text(rec.to_ndjson())
    print(d / f"{stem}.ndjson")
    return 0


def cmd_simulate(args) -> int:
    return _run(resolve(load_config(args.config), args), args)


def cmd_exact(args) -> int:
    args.engine = "exact"
    return cmd_simulate(args)


def cmd_enumerate(args) -> int:
    basis = enumerate_physical(LatticeModel(args.L))
    if args.list:
        for row in basis.links:
            print(" ".join(f"{int(m):+d}" for m in row))
    print(basis.dim)
    return 0


def parse_range(text: str) -> list[int]:
    try:
        if ".." in text:
            a, b = text.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad range {text!r}") from exc


def cmd_gatecount(args) -> int:
    Ls = parse_range(args.L)
    if min(Ls) < 2:
        raise ConfigError("L must be at least 2")
    rows = gate_count_table(Ls)
    cols = ["L", "formulation", "MS", "CX", "one_body"] + (["ratio"] if args.both else [])
    lines = [",".join(cols)]
    for r in rows:
        if not args.both and r["formulation"] != args.formulation:
            continue
        lines.append(",".join(f"{r[c]:.6g}" if c == "ratio" else str(r[c]) for c in cols))
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_compile(args) -> int:
    model = LatticeModel(args.L, args.kappa, args.mu, args.g, args.formulation)
    walls = WallSchedule(tuple(args.walls or ()), args.hold_steps)
    circ = assemble_trotter(model, args.T, args.N, walls, entangler=args.entangler)
    text = circ.dumps()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def read_record(path: str) -> ObservableRecord:
    try:
        return ObservableRecord.from_ndjson(Path(path).read_text())
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read record {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_analyze(args) -> int:
    scat = read_record(args.record)
    vac = read_record(args.vacuum)
    try:
        if args.left and args.right:
            out = subtract_free(scat, read_record(args.left), read_record(args.right), vac)
        else:
            out = subtract_vacuum(scat, vac)
    except ValueError as exc:
        raise ConfigError(f"records cannot be combined: {exc}") from exc
    head = "# " + json.dumps({"schema_version": SCHEMA_VERSION, "subtracted": out.meta["subtracted"],
                              "inputs": [args.record, args.left, args.right, args.vacuum]},
                             sort_keys=True, separators=(",", ":")) + "\n"
    text = head + out.heatmap_csv("charge")
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_snapshot(args) -> int:
    rec = read_record(args.record)
    times = [float(t) for t in args.times.split(",")]
    text = snapshot_csv(flux_snapshots(rec, times))
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qudit-qlm", description="Qudit circuits for a spin-1 U(1) quantum link model")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate-basis", help="count gauge-invariant basis states")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--list", action="store_true", help="also print the link patterns")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("gatecount", help="per-step gate counts")
    p.add_argument("--L", default="7..12", help="e.g. 7..12 or 5,7")
    p.add_argument("--both", action="store_true", help="both formulations plus ratio column")
    p.add_argument("--formulation", default="integrated_out", choices=["integrated_out", "matterful"])
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gatecount)

    p = sub.add_parser("compile", help="dump a Trotter circuit")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--formulation", default="integrated_out", choices=["integrated_out", "matterful"])
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--T", type=float, default=0.25)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--walls", type=int, nargs="*")
    p.add_argument("--hold-steps", type=int, default=0)
    p.add_argument("--entangler", default="ms", choices=["ms", "rzz"])
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compile)

    for name, func, hlp in (("simulate", cmd_simulate, "run a protocol"),
                            ("exact", cmd_exact, "exact-engine run of a protocol")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config")
        p.add_argument("--preset", choices=sorted(PRESETS))
        if name == "simulate":
            p.add_argument("--engine", choices=["exact", "noiseless", "noisy"])
        p.add_argument("--kind", choices=["meson_meson", "meson_antimeson", "free_left", "free_right", "vacuum"])
        p.add_argument("--formulation", choices=["integrated_out", "matterful"])
        p.add_argument("--N", type=int)
        p.add_argument("--T", type=float)
        p.add_argument("--g", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--n-samples", dest="n_samples", type=int)
        p.add_argument("--mode", choices=["trajectories", "kraus"])
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--out", dest="output_dir")
        p.set_defaults(func=func)

    p = sub.add_parser("analyze", help="vacuum or free-particle subtraction")
    p.add_argument("record")
    p.add_argument("--vacuum", required=True)
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("snapshot", help="flux snapshots at selected times")
    p.add_argument("record")
    p.add_argument("--times", required=True, help="comma-separated times")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_snapshot)
    return ap


def _fail(exc: Exception, code: int) -> int:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("step", "n_trajectories", "trace"):
        if hasattr(exc, attr):
            rec[attr] = getattr(exc, attr)
    sys.stderr.write(json.dumps(rec) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(exc, 2)
    except BudgetError as exc:
        return _fail(exc, 3)
    except AllTrajectoriesDiscarded as exc:
        return _fail(exc, 4)
    except QLMError as exc:
        return _fail(exc, 1)


def preset_config_path(name: str):
    """Path of a shipped example config."""
    return resources.files("qudit_qlm") / "configs" / f"{name}.yaml"


if __name__ == "__main__":
    sys.exit(main())
