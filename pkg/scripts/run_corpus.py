"""Analyze every corpus contract in check and infer mode and tabulate the verdicts."""

import argparse
import json
from pathlib import Path

from minisol.cli import load
from minisol.inference import run
from minisol.solver import SolverConfig
from minisol.typecheck import Mode

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", type=Path, default=CORPUS)
    ap.add_argument("--timeout-ms", type=int, default=10_000)
    ap.add_argument("--json", type=Path, help="also write all reports to this file")
    args = ap.parse_args()

    cfg = SolverConfig(timeout_ms=args.timeout_ms)
    reports = []
    print(f"{'contract':<24} {'mode':<6} {'safe':>5} {'sites':>5} {'hard':>4} {'queries':>7} {'ms':>6}")
    for path in sorted(args.corpus.glob("*.msol")):
        c = load(str(path))
        for mode in (Mode.CHECK, Mode.INFER):
            r = run(c, mode, cfg)
            reports.append({"file": path.name, **r.to_json()})
            print(f"{path.stem:<24} {mode.value:<6} {r.safe_count:>5} {r.soft_total:>5} "
                  f"{len(r.hard_failures):>4} {r.solver_queries:>7} {r.wall_time_ms:>6}")
    if args.json:
        args.json.write_text(json.dumps(reports, indent=2))


if __name__ == "__main__":
    main()
