"""Fuzz the verdicts of every corpus contract against the interpreter."""

import argparse
import time
from pathlib import Path

from minisol.cli import load
from minisol.fuzz import FuzzConfig, fuzz
from minisol.inference import run
from minisol.solver import SolverConfig
from minisol.typecheck import Mode

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", type=Path, default=CORPUS)
    ap.add_argument("--runs", type=int, default=1000)
    ap.add_argument("--max-calls", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = SolverConfig()
    fcfg = FuzzConfig(runs=args.runs, max_calls=args.max_calls, seed=args.seed)
    bad = 0
    for path in sorted(args.corpus.glob("*.msol")):
        c = load(str(path))
        for mode in (Mode.CHECK, Mode.INFER):
            report = run(c, mode, cfg)
            start = time.monotonic()
            s = fuzz(c, report, fcfg)
            secs = time.monotonic() - start
            print(f"{path.stem:<24} {mode.value:<6} runs={s.runs} calls={s.calls} completed={s.completed} "
                  f"aborted={s.aborted} events={s.events} updates={s.updates} commits={s.commits} "
                  f"violations={len(s.violations)} ({secs:.1f}s)")
            for v in s.violations[:5]:
                print(f"    ({v.prop}) run {v.run}: {v.detail}")
            bad += len(s.violations)
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
