"""Command-line interface: ``gptree {run,sweep,stream-gen,calibrate-demo}``.

A run is described by a JSON document with four optional sections::

    {
      "tree":   {"nbar": 25, "theta": 0, "retrain_buffer_length": 1,
                 "gp_control": {"kernel": "matern3_2"}, ...},
      "stream": {"kind": "uniform", "dim": 1},
      "target": {"tag": "higdon1d", "noise": 0.0},
      "run":    {"n_points": 100, "burn_in": 0, "seed": 0}
    }

Missing keys take their defaults, unknown keys are rejected.  Flags
override the document.  Exit status is 0 on success, 1 when a run fails and
2 when the configuration is invalid.
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import List, Optional

import numpy as np

from gptree import bench
from gptree.streams import make_stream, validate_stream_spec, write_stream_csv
from gptree.targets import make_target
from gptree.tree import TreeConfig

DEFAULT_POINTS = 50_000
TREE_FIELDS = [f.name for f in fields(TreeConfig)]
TREE_DEFAULTS = TreeConfig().to_dict()
RUN_DEFAULTS = {"n_points": DEFAULT_POINTS, "burn_in": bench.DEFAULT_BURN_IN, "seed": 0,
                "outlier_bound": bench.DEFAULT_OUTLIER_BOUND,
                "records": "records.csv", "summary": "summary.csv"}
TARGET_DEFAULTS = {"tag": "higdon1d", "noise": 0.0}
SECTIONS = ("tree", "stream", "target", "run")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunPlan:
    tree: TreeConfig
    stream: dict
    target: dict
    n_points: int
    burn_in: int
    seed: int
    outlier_bound: float
    records: str
    summary: str

    def resolved(self) -> dict:
        return {"tree": self.tree.to_dict(), "stream": self.stream, "target": self.target,
                "run": {"n_points": self.n_points, "burn_in": self.burn_in, "seed": self.seed,
                        "outlier_bound": self.outlier_bound,
                        "records": self.records, "summary": self.summary}}


# -- config handling -----------------------------------------------------------

def load_document(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"config: unknown sections {', '.join(sorted(unknown))}; "
                          f"allowed: {', '.join(SECTIONS)}")
    for name, section in doc.items():
        if not isinstance(section, dict):
            raise ConfigError(f"{name}: must be a JSON object")
    return copy.deepcopy(doc)


def _flatten_tree(section: dict) -> dict:
    """Accept ``gp_control.kernel`` as an alias of ``kernel``."""
    tree = dict(section)
    gp_control = tree.pop("gp_control", None)
    if gp_control is not None:
        if not isinstance(gp_control, dict) or set(gp_control) - {"kernel"}:
            raise ConfigError("tree.gp_control: only the 'kernel' key is supported")
        if "kernel" in gp_control:
            tree["kernel"] = gp_control["kernel"]
    unknown = set(tree) - set(TREE_FIELDS)
    if unknown:
        raise ConfigError(f"tree: unknown keys {', '.join(sorted(unknown))}")
    return tree


def apply_overrides(doc: dict, args) -> dict:
    """Flags win over document values."""
    doc = copy.deepcopy(doc)
    tree = _flatten_tree(doc.get("tree", {}))
    flag_to_tree = {"nbar": "nbar", "retrain_buffer_length": "retrain_buffer_length",
                    "theta": "theta", "kernel": "kernel", "split_dir": "split_direction_criterion",
                    "split_pos": "split_position_criterion", "gradual_split": "gradual_split",
                    "decay": "shape_decay", "calibrate": "use_empirical_error",
                    "wrapper": "wrapper"}
    for flag, key in flag_to_tree.items():
        value = getattr(args, flag, None)
        if value is not None:
            tree[key] = value
    run = dict(doc.get("run", {}))
    for flag, key in (("points", "n_points"), ("burn_in", "burn_in"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            run[key] = value
    if getattr(args, "seed", None) is not None:
        tree["seed"] = args.seed
        if "stream" in doc and "seed" in doc["stream"]:
            doc["stream"]["seed"] = args.seed
    doc["tree"], doc["run"] = tree, run
    return doc


def _int_field(name, value, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name}: must be an integer >= {minimum}, got {value!r}")
    return value


def build_plan(doc: dict) -> RunPlan:
    """Validate a document whose tree section holds scalar values."""
    run = {**RUN_DEFAULTS, **doc.get("run", {})}
    unknown = set(run) - set(RUN_DEFAULTS)
    if unknown:
        raise ConfigError(f"run: unknown keys {', '.join(sorted(unknown))}")
    seed = _int_field("run.seed", run["seed"])
    n_points = _int_field("run.n_points", run["n_points"])
    burn_in = _int_field("run.burn_in", run["burn_in"])
    if not isinstance(run["outlier_bound"], (int, float)) or not run["outlier_bound"] > 0:
        raise ConfigError("run.outlier_bound: must be a positive number")

    target = {**TARGET_DEFAULTS, **doc.get("target", {})}
    unknown = set(target) - set(TARGET_DEFAULTS)
    if unknown:
        raise ConfigError(f"target: unknown keys {', '.join(sorted(unknown))}")
    try:
        dim = make_target(target["tag"]).dim
    except ValueError as exc:
        raise ConfigError(f"target.tag: {exc}") from None
    if not isinstance(target["noise"], (int, float)) or target["noise"] < 0:
        raise ConfigError("target.noise: must be a non-negative number")

    stream = dict(doc.get("stream", {"kind": "uniform"}))
    if stream.get("kind") == "uniform":
        stream.setdefault("dim", dim)
    if stream.get("kind") == "de":
        stream.setdefault("loss", target["tag"])
    if stream.get("kind") in ("uniform", "de"):
        stream.setdefault("seed", seed)
    try:
        validate_stream_spec(stream)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    stream_dim = stream.get("dim") or (make_target(stream["loss"]).dim if "loss" in stream else None)
    if stream_dim is not None and stream_dim != dim:
        raise ConfigError(f"stream.dim: {stream_dim} does not match target dimension {dim}")

    tree = {**_flatten_tree(doc.get("tree", {}))}
    tree.setdefault("seed", seed)
    try:
        config = TreeConfig.from_dict(tree)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunPlan(config, stream, target, n_points, burn_in, seed,
                   float(run["outlier_bound"]), run["records"], run["summary"])


def expand_sweep(doc: dict) -> List[dict]:
    """Cartesian product over list-valued tree settings, last key fastest."""
    tree = doc.get("tree", {})
    keys = [k for k, v in tree.items() if isinstance(v, list)]
    if not keys:
        raise ConfigError("sweep: at least one tree setting must be a list of values")
    for k in keys:
        if not tree[k]:
            raise ConfigError(f"tree.{k}: empty list")
    docs = []
    for combo in itertools.product(*(tree[k] for k in keys)):
        d = copy.deepcopy(doc)
        d["tree"].update(zip(keys, combo))
        docs.append(d)
    return docs


# -- execution -----------------------------------------------------------------

def execute(plan: RunPlan, records_path=None):
    target = make_target(plan.target["tag"], plan.target["noise"], plan.seed)
    stream = make_stream(plan.stream)
    if stream.dim != target.dim:
        raise ValueError(f"stream dimension {stream.dim} does not match target dimension {target.dim}")
    return bench.run(plan.tree, stream, target, plan.n_points, plan.burn_in,
                     plan.outlier_bound, log_path=records_path)


def _sweep_job(item):
    k, plan, records_path = item
    try:
        _, summary = execute(plan, records_path)
        return k, summary, None
    except Exception as exc:  # a failed sub-run becomes an error row
        return k, None, f"{type(exc).__name__}: {exc}"


def _write_resolved(document, out_dir):
    """Echo the fully resolved configuration next to the outputs."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(document, fh, indent=2)


def _print_rows(path):
    with open(path) as fh:
        sys.stdout.write(fh.read())


def cmd_run(args) -> int:
    plan = build_plan(apply_overrides(load_document(args.config), args))
    _write_resolved(plan.resolved(), args.out)
    _, summary = execute(plan, os.path.join(args.out, plan.records))
    summary_path = os.path.join(args.out, plan.summary)
    bench.emit_csv([(plan.tree, summary)], summary_path)
    _print_rows(summary_path)
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc = apply_overrides(load_document(args.config), args)
    plans = [build_plan(d) for d in expand_sweep(doc)]
    _write_resolved([p.resolved() for p in plans], args.out)
    jobs = [(k, p, os.path.join(args.out, f"records_{k:03d}.csv")) for k, p in enumerate(plans)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    for k, _, err in results:
        if err is not None:
            print(f"sweep run {k} failed: {err}", file=sys.stderr)
    summary_path = os.path.join(args.out, plans[0].summary)
    bench.emit_csv([(plans[k].tree, s) for k, s, _ in results], summary_path)
    _print_rows(summary_path)
    return EXIT_OK


def cmd_stream_gen(args) -> int:
    if args.stream is not None:
        try:
            spec = json.loads(args.stream)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--stream: invalid JSON: {exc}") from None
    else:
        doc = load_document(args.config)
        if "stream" not in doc:
            raise ConfigError("stream: section required (or pass --stream)")
        spec = doc["stream"]
    if not isinstance(spec, dict):
        raise ConfigError("stream: must be a JSON object")
    spec = dict(spec)
    if args.seed is not None and spec.get("kind") in ("uniform", "de"):
        spec["seed"] = args.seed
    try:
        validate_stream_spec(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if spec["kind"] == "uniform" and spec.get("n_points") is None and args.points is None:
        raise ConfigError("stream.n_points: required for a uniform stream (or pass --points)")
    stream = make_stream(spec)
    limit = args.points
    points = []
    while limit is None or len(points) < limit:
        p = stream.next_point()
        if p is None:
            break
        points.append(p)
    out = args.output or os.path.join(args.out, "stream.csv")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    n = write_stream_csv(np.array(points).reshape(len(points), stream.dim), out)
    print(n)
    return EXIT_OK


def cmd_calibrate_demo(args) -> int:
    """Per-batch coverage with and without the empirical error calibration.

    Calibration never changes routing or means, so one run yields both
    the calibrated and the raw coverage series.
    """
    doc = load_document(args.config)
    if args.theta is None:
        tree = _flatten_tree(doc.get("tree", {}))
        tree["theta"] = 0.0
        doc["tree"] = tree
    doc = apply_overrides(doc, args)
    doc["tree"]["use_empirical_error"] = True
    plan = build_plan(doc)
    _write_resolved(plan.resolved(), args.out)
    records, _ = execute(plan, os.path.join(args.out, plan.records))
    cal = bench.coverage_batches(records, args.batch_size, use_calibrated=True)
    raw = bench.coverage_batches(records, args.batch_size, use_calibrated=False)
    path = os.path.join(args.out, "coverage.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["batch", "n", "coverage_calibrated", "coverage_uncalibrated"])
        for k in range(len(cal)):
            w.writerow([k, int(cal.counts[k]), f"{cal[k]:.17g}", f"{raw[k]:.17g}"])
    first = -(-plan.burn_in // args.batch_size)
    if first < len(cal):
        print(f"mean coverage after burn-in: calibrated {np.mean(cal.fractions[first:]):.4f}, "
              f"uncalibrated {np.mean(raw.fractions[first:]):.4f}")
    print(path)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = TREE_DEFAULTS
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="JSON run document")
    g.add_argument("--seed", type=int, help=f"run seed (default: {RUN_DEFAULTS['seed']})")
    g.add_argument("--out", default=".", help="output directory (default: .)")
    g = p.add_argument_group("tree settings (override the document)")
    g.add_argument("--nbar", type=int, help=f"maximum points per leaf (default: {d['nbar']})")
    g.add_argument("--retrain-buffer-length", type=int,
                   help="points between hyperparameter refits (default: nbar)")
    g.add_argument("--theta", type=float, help=f"overlap fraction in [0, 1] (default: {d['theta']})")
    g.add_argument("--kernel", help=f"gauss, matern3_2 or matern5_2 (default: {d['kernel']})")
    g.add_argument("--split-dir", help="split direction criterion "
                   f"(default: {d['split_direction_criterion']})")
    g.add_argument("--split-pos", help=f"mean or median (default: {d['split_position_criterion']})")
    g.add_argument("--gradual-split", type=_bool, help=f"true/false (default: {d['gradual_split']})")
    g.add_argument("--decay", help=f"linear, exponential, gaussian or deterministic "
                   f"(default: {d['shape_decay']})")
    g.add_argument("--calibrate", type=_bool,
                   help=f"report calibrated uncertainty (default: {d['use_empirical_error']})")
    g.add_argument("--wrapper", help=f"GP backend (default: {d['wrapper']})")
    g = p.add_argument_group("run settings")
    g.add_argument("--points", type=int, help=f"stream points to process (default: {DEFAULT_POINTS})")
    g.add_argument("--burn-in", type=int,
                   help=f"records excluded from indicators (default: {bench.DEFAULT_BURN_IN})")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="gptree", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one benchmark run").set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", parents=[common], help="cartesian product of list-valued settings")
    p.add_argument("--jobs", type=int, default=1, help="parallel sub-runs (default: 1)")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("stream-gen", parents=[common], help="write a stream to CSV")
    p.add_argument("--stream", help="inline JSON stream spec instead of --config")
    p.add_argument("-o", "--output", help="output CSV (default: <out>/stream.csv)")
    p.set_defaults(func=cmd_stream_gen)
    p = sub.add_parser("calibrate-demo", parents=[common],
                       help="coverage per batch with and without calibration (theta forced to 0)")
    p.add_argument("--batch-size", type=int, default=bench.BATCH_SIZE,
                   help=f"points per coverage batch (default: {bench.BATCH_SIZE})")
    p.set_defaults(func=cmd_calibrate_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
