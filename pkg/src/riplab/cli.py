"""Command line entry point: ``riplab gen-data | train | eval | bench``.

Exit codes: 0 success, 2 usage or config error, 3 data or compatibility
error, 4 numeric failure (non-finite loss).
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import tempfile
from pathlib import Path

from .bench import default_jobs, run_bench
from .checkpoint import CheckpointError
from .data.dataset import DataError, load_dataset, write_dataset
from .data.synthetic import GenConfig, centroid_probe, generate_synthetic
from .runs import ConfigError, eval_run, resolve_config, train_run
from .train import NumericError

log = logging.getLogger("riplab")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _read_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise UsageError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return obj


def cmd_gen_data(args) -> int:
    raw = _read_json(args.config)
    try:
        cfg = GenConfig.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad generator config: {e}") from None
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        raise UsageError(f"output directory {out} exists and is not empty")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    except OSError as e:
        raise UsageError(f"cannot write to {out}: {e}") from None
    try:
        ds, report = generate_synthetic(cfg, args.seed)
        report["probe_accuracy"] = centroid_probe(ds.split("train"), ds.split("test"))
        write_dataset(ds, tmp)
        (tmp / "generation_report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
        if out.exists():
            out.rmdir()
        tmp.rename(out)
    except OSError as e:
        raise UsageError(f"cannot write to {out}: {e}") from None
    finally:
        if tmp.exists():
            shutil.rmtree(tmp, ignore_errors=True)
    print(f"wrote {len(ds)} samples to {out} (class counts {report['class_counts']}, "
          f"probe accuracy {report['probe_accuracy']:.3f})")
    return EXIT_OK


def cmd_train(args) -> int:
    raw = _read_json(args.config)
    if args.out is not None:
        raw["out"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    resolved, warnings = resolve_config(raw)
    for w in warnings:
        log.warning(w)
    _, history = train_run(resolved)
    if history is not None:
        best = history["epochs"][history["best_epoch"]]
        print(f"best epoch {history['best_epoch']}: val acc {best['val_acc']:.4f}; saved to {resolved['out']}")
    else:
        print(f"saved to {resolved['out']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    report = eval_run(args.model, args.dataset, args.split, args.out)
    d = report.to_dict()
    print(f"{args.split}: acc {d['accuracy']:.2f}  P {d['precision']:.2f}  R {d['recall']:.2f}  "
          f"F1 {d['f1']:.2f}  macro-F1 {d['macro_f1']:.2f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    overrides = _read_json(args.config)
    load_dataset(args.dataset)  # fail fast on a broken dataset
    res = run_bench(args.dataset, args.out, args.seed, args.jobs, overrides=overrides)
    print((Path(args.out) / "table1.md").read_text())
    print(f"bench wall time {res['wall_seconds']:.0f} s with {args.jobs} job(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riplab", description="Rider intention prediction workbench")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("config", nargs="?", help="generator config JSON (defaults if omitted)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=7)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one method on one task")
    t.add_argument("--config", required=True, help="run config JSON")
    t.add_argument("--out", help="override the run directory")
    t.add_argument("--seed", type=int, help="override the run seed")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained run on a split")
    e.add_argument("--model", required=True, help="run directory or checkpoint file")
    e.add_argument("--dataset", required=True)
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--out", help="report directory (defaults to the run directory)")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="all methods on both tasks")
    b.add_argument("--dataset", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--jobs", type=int, default=default_jobs())
    b.add_argument("--config", help="JSON mapping method -> {train: ..., model: ...} overrides")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
