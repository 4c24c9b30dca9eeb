"""Run grids of training runs, persist learning curves, summarise them.

Layout of an output directory::

    <out>/<run_id>.csv        one learning curve per run (schema v1)
    <out>/summary.json        config echo plus per-run final statistics
    <out>/baseline.json       frame-follower success, when requested

Run ids are ``task__mode__seedN``, prefixed by ``snrX/`` or ``errX/`` in a
corruption sweep.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from tevir.agent import ConfigError, RunResult, RunSpec, train_run
from tevir.baseline import run_follower
from tevir.config import ExperimentConfig, apply_drop

SCHEMA_VERSION = 1
CSV_COLUMNS = ("step", "episode", "success_rolling20", "r_dist_mean", "r_prog_mean",
               "r_expl_mean", "M_final")


class RunFailure(RuntimeError):
    """A run that started but did not finish."""


def worker_count() -> int:
    raw = os.environ.get("TEVIR_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"TEVIR_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"TEVIR_THREADS must be a positive integer, got {raw!r}")
    return n


def curve_csv(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in result.curve:
        w.writerow([p.step, p.episode, repr(p.success_rolling20), repr(p.r_dist_mean),
                    repr(p.r_prog_mean), repr(p.r_expl_mean), repr(p.M_final)])
    return buf.getvalue()


def read_curve(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: not a schema v{SCHEMA_VERSION} learning curve")
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(CSV_COLUMNS))
    return {c: data[:, i] for i, c in enumerate(CSV_COLUMNS)}


def _run_stats(result: RunResult, spec: RunSpec) -> dict:
    hist = np.bincount(np.asarray(result.M_final, dtype=int), minlength=spec.horizon + 1)
    return {
        "task": spec.task,
        "mode": spec.mode,
        "seed": spec.seed,
        "steps": spec.steps,
        "episodes": len(result.episode_success),
        "final_success": result.final_success,
        "steps_to_0.5": result.steps_to(0.5),
        "steps_to_0.9": result.steps_to(0.9),
        "M_final_histogram": hist.tolist(),
    }


def _execute(job: tuple[str, RunSpec, str]) -> tuple[str, dict]:
    run_id, spec, out = job
    try:
        result = train_run(spec)
    except ConfigError:
        raise
    except Exception as e:  # surfaced to the caller as a runtime failure
        raise RunFailure(f"{run_id}: {type(e).__name__}: {e}") from e
    path = Path(out) / f"{run_id}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(curve_csv(result))
    return run_id, _run_stats(result, spec)


def _prepare_out(out) -> Path:
    p = Path(out)
    try:
        p.mkdir(parents=True, exist_ok=True)
        probe = p / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise ConfigError(f"output directory {p} is not writable: {e}") from None
    return p


def run_suite(cfg: ExperimentConfig, out: Optional[str] = None, threads: Optional[int] = None,
              steps: Optional[int] = None,
              progress: Optional[Callable[[str, dict], None]] = None) -> dict:
    """Execute the whole grid of ``cfg``; returns the summary that is also written.

    ``steps`` overrides the config budget (used by quick tests).
    """
    out_dir = _prepare_out(out or cfg.out)
    jobs = [(rid, spec, str(out_dir)) for rid, spec in cfg.run_specs(steps)]
    n = threads or worker_count()
    runs: dict[str, dict] = {}
    if n == 1 or len(jobs) == 1:
        for job in jobs:
            rid, stats = _execute(job)
            runs[rid] = stats
            if progress:
                progress(rid, stats)
    else:
        with ProcessPoolExecutor(max_workers=min(n, len(jobs))) as pool:
            for rid, stats in pool.map(_execute, jobs):
                runs[rid] = stats
                if progress:
                    progress(rid, stats)

    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "runs": {rid: runs[rid] for rid in sorted(runs)},
    }
    if cfg.baseline_episodes:
        summary["baseline"] = run_baselines(cfg, out_dir)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def run_baselines(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """Frame-follower success for every (sweep point, task, seed)."""
    res: dict[str, dict] = {}
    for label, corruption in cfg.sweep():
        for task in cfg.tasks:
            rates = {}
            for seed in cfg.seeds:
                flags = run_follower(task, corruption, seed, cfg.baseline_episodes, cfg.horizon,
                                     cfg.episode_length)
                rates[str(seed)] = float(np.mean(flags))
            res.setdefault(label, {})[task] = rates
    (out_dir / "baseline.json").write_text(json.dumps(res, indent=2, sort_keys=True) + "\n")
    return res


def ablate(cfg: ExperimentConfig, drop: str, out: Optional[str] = None,
           threads: Optional[int] = None, steps: Optional[int] = None) -> dict:
    """Run ``cfg`` with one reward component or view removed."""
    dropped = apply_drop(cfg, drop)
    target = out or str(Path(cfg.out) / f"ablate-{drop.replace(':', '-')}")
    return run_suite(dropped, target, threads, steps)


# ---------------------------------------------------------------------------
# Reports


def _cell_key(run_id: str) -> tuple[str, str, str, str]:
    label, _, rest = run_id.rpartition("/")
    task, mode, seed = rest.split("__")
    return label or "clean", task, mode, seed[len("seed"):]


def report(directory) -> dict:
    """Aggregate every summary under ``directory``.

    Curves are combined per (sweep point, task, mode) into min/median/max
    bands over seeds; cells with a missing seed are flagged ``incomplete``.
    """
    root = Path(directory)
    summaries = sorted(root.rglob("summary.json")) if root.is_dir() else []
    cells: dict = {}
    for sp in summaries:
        summ = json.loads(sp.read_text())
        expected = [str(s) for s in summ["config"]["seeds"]]
        base = sp.parent
        name = summ["config"]["name"]
        grid = {}
        for rid, spec in _expected_runs(summ["config"]):
            grid.setdefault(_cell_key(rid)[:3], []).append(rid)
        for key, rids in grid.items():
            curves, finals, missing = [], [], []
            for rid in rids:
                path = base / f"{rid}.csv"
                if not path.is_file():
                    missing.append(_cell_key(rid)[3])
                    continue
                c = read_curve(path)
                curves.append(c)
                finals.append(float(c["success_rolling20"][-1]) if len(c["step"]) else 0.0)
            cell = {
                "suite": name,
                "sweep": key[0],
                "task": key[1],
                "mode": key[2],
                "seeds_expected": expected,
                "missing_seeds": missing,
                "incomplete": bool(missing),
                "final_success": finals,
                "final_success_median": float(np.median(finals)) if finals else None,
                "band": _band(curves),
            }
            cells[f"{name}:{key[0]}:{key[1]}:{key[2]}"] = cell
    table = _table(cells)
    out = {"empty": not cells, "cells": cells, "table": table}
    if root.is_dir():
        (root / "report.json").write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
        (root / "report.md").write_text(table + "\n")
    return out


def _expected_runs(config: dict):
    cfg = ExperimentConfig.from_dict(config)
    return cfg.run_specs()


def _band(curves: list[dict]) -> dict:
    if not curves:
        return {}
    n = min(len(c["step"]) for c in curves)
    if n == 0:
        return {}
    s = np.stack([c["success_rolling20"][:n] for c in curves])
    return {
        "step": curves[0]["step"][:n].astype(int).tolist(),
        "min": s.min(0).tolist(),
        "median": np.median(s, 0).tolist(),
        "max": s.max(0).tolist(),
    }


def _table(cells: dict) -> str:
    """Final median success laid out as rows (suite, mode, task) by sweep columns."""
    if not cells:
        return "(no runs found)"
    sweeps: list[str] = []
    rows: dict = {}
    for c in cells.values():
        if c["sweep"] not in sweeps:
            sweeps.append(c["sweep"])
        med = c["final_success_median"]
        txt = "n/a" if med is None else f"{100 * med:.1f}%"
        if c["incomplete"]:
            txt += " (incomplete)"
        rows.setdefault((c["suite"], c["mode"], c["task"]), {})[c["sweep"]] = txt
    header = "| suite | mode | task | " + " | ".join(sweeps) + " |"
    lines = [header, "|" + "---|" * (3 + len(sweeps))]
    for (suite, mode, task), vals in sorted(rows.items()):
        lines.append(f"| {suite} | {mode} | {task} | "
                     + " | ".join(vals.get(s, "") for s in sweeps) + " |")
    return "\n".join(lines)
