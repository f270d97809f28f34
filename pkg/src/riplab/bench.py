"""All methods on both tasks over one dataset, summarized as accuracy/F1 and per-class tables."""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .data.labels import LABELS
from .metrics import format_confusion
from .runs import METHODS, TASKS, eval_run, resolve_config, train_run

log = logging.getLogger(__name__)


def _cell(args) -> dict:
    method, task, dataset, out, seed, overrides = args
    t0 = time.perf_counter()
    raw = {"method": method, "task": task, "dataset": str(dataset), "out": str(out), "seed": seed,
           **overrides.get(method, {})}
    resolved, _ = resolve_config(raw)
    train_run(resolved, out)
    report = eval_run(out, dataset, "test", out)
    return {"method": method, "task": task, "report": report.to_dict(),
            "seconds": time.perf_counter() - t0}


def run_bench(dataset: str | Path, out: str | Path, seed: int = 0, jobs: int = 1,
              methods=METHODS, tasks=TASKS, overrides: dict | None = None) -> dict:
    """Train and test every (method, task) cell; cells may run in parallel processes.

    ``overrides`` maps a method name to extra ``train``/``model`` config sections.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    overrides = overrides or {}
    cells = [(m, t, Path(dataset), out / f"{m}_{t}", seed, overrides) for m in methods for t in tasks]
    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = [_cell(c) for c in cells]
    wall = time.perf_counter() - t0
    summary = summarize(results)
    write_summary(out, summary, results)
    (out / "timing.json").write_text(json.dumps(
        {"wall_seconds": wall, "jobs": jobs,
         "cells": {f"{r['method']}_{r['task']}": r["seconds"] for r in results}}, indent=1, sort_keys=True) + "\n")
    return {"summary": summary, "results": results, "wall_seconds": wall}


def summarize(results: list[dict]) -> dict:
    table1, table2 = {}, {}
    for r in results:
        rep = r["report"]
        table1.setdefault(r["method"], {})[r["task"]] = {"acc": rep["accuracy"], "f1": rep["f1"]}
        table2.setdefault(r["method"], {})[r["task"]] = rep["per_class"]
    return {"table1": table1, "table2": table2}


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.2f}"


def write_summary(out: Path, summary: dict, results: list[dict]) -> None:
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")

    lines = ["| Method | Single Acc. | Single F1 | Multi Acc. | Multi F1 |", "|---|---|---|---|---|"]
    for method, row in summary["table1"].items():
        cells = []
        for task in TASKS:
            cell = row.get(task, {})
            cells += [_fmt(cell.get("acc")), _fmt(cell.get("f1"))]
        lines.append(f"| {method} | " + " | ".join(cells) + " |")
    (out / "table1.md").write_text("\n".join(lines) + "\n")

    lines = []
    for task in TASKS:
        methods = [m for m in summary["table2"] if task in summary["table2"][m]]
        if not methods:
            continue
        lines += [f"## {task}", "", "| Class | " + " | ".join(f"{m} Acc. | {m} F1" for m in methods) + " |",
                  "|---|" + "---|---|" * len(methods)]
        for name in LABELS:
            vals = []
            for m in methods:
                pc = summary["table2"][m][task][name]
                vals += [_fmt(pc["acc"]), _fmt(pc["f1"])]
            lines.append(f"| {name} | " + " | ".join(vals) + " |")
        lines.append("")
    (out / "table2.md").write_text("\n".join(lines))

    blocks = []
    for r in results:
        cm = np.array(r["report"]["confusion"])
        blocks.append(f"{r['method']} / {r['task']}\n{format_confusion(cm)}\n")
    (out / "confusion.txt").write_text("\n".join(blocks))


def default_jobs() -> int:
    return max(1, min(4, os.cpu_count() or 1))
