"""``tevir`` command line.

Exit codes: 0 success, 2 configuration or input error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from tevir import config as cfgmod
from tevir import env as sim
from tevir.harness import RunFailure, ablate, report, run_suite
from tevir.latent import UsageError, frame_similarities
from tevir.sequence import FormatError, load_sequence, oracle_sequence, save_sequence

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers: {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _progress(run_id: str, stats: dict) -> None:
    print(f"{run_id}: final success {stats['final_success']:.2f} "
          f"after {stats['episodes']} episodes", flush=True)


def cmd_run(args) -> int:
    cfg = cfgmod.load(args.config)
    if args.seeds:
        cfg = cfg.with_seeds(args.seeds)
    summary = run_suite(cfg, args.out, progress=_progress)
    print(f"wrote {len(summary['runs'])} runs to {args.out or cfg.out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = cfgmod.load(args.config)
    if args.seeds:
        cfg = cfg.with_seeds(args.seeds)
    summary = ablate(cfg, args.drop, args.out)
    print(f"wrote {len(summary['runs'])} runs without {args.drop}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = report(args.dir)
    print("(empty: no summaries found)" if out["empty"] else out["table"])
    return EXIT_OK


def cmd_seq_export(args) -> int:
    state, z = sim.reset(args.task, args.seed)
    seq = oracle_sequence(state.task_id, z, args.horizon, initial_state=state)
    save_sequence(seq, args.out)
    print(f"wrote {seq!r} to {args.out}")
    return EXIT_OK


def cmd_seq_inspect(args) -> int:
    seq = load_sequence(args.file)
    H, P, D = seq.frames.shape
    print(f"task     {seq.task_id}")
    print(f"frames   H={H}  views={','.join(seq.views)} (P={P})  D={D}")
    norms = np.linalg.norm(seq.frames, axis=2)
    w = np.ones(P)
    for h in range(H):
        nxt = ""
        if h + 1 < H:
            s = frame_similarities(seq.frames[h], seq.frames[h + 1:h + 2], w)[0]
            nxt = f"  sim(next)={s:.4f}"
        print(f"  [{h}] norms=" + ",".join(f"{x:.4f}" for x in norms[h]) + nxt)
    if args.json:
        print(json.dumps({"task_id": seq.task_id, "H": H, "P": P, "D": D,
                          "views": list(seq.views)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tevir", description="Dense rewards from key-frame sequences.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run every (task, mode, seed) of a config")
    r.add_argument("--config", required=True)
    r.add_argument("--seeds", type=_seeds)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("ablate", help="rerun a config with one reward term or view dropped")
    a.add_argument("--config", required=True)
    a.add_argument("--drop", required=True, choices=cfgmod.DROP_TARGETS)
    a.add_argument("--seeds", type=_seeds)
    a.add_argument("--out")
    a.set_defaults(func=cmd_ablate)

    rep = sub.add_parser("report", help="aggregate learning curves under a directory")
    rep.add_argument("--dir", required=True)
    rep.set_defaults(func=cmd_report)

    s = sub.add_parser("seq", help="key-frame sequence files")
    ss = s.add_subparsers(dest="seq_command", required=True, parser_class=_Parser)
    e = ss.add_parser("export", help="write the oracle sequence for a reset")
    e.add_argument("--task", required=True, choices=sorted(sim.TASKS))
    e.add_argument("--seed", type=int, required=True)
    e.add_argument("--horizon", type=int, default=8)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_seq_export)
    i = ss.add_parser("inspect", help="print the header and frame summary of a file")
    i.add_argument("file")
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_seq_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FormatError, FileNotFoundError) as e:
        print(f"tevir: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as e:
        print(f"tevir: run failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # anything else is a failure of the run itself
        print(f"tevir: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
