"""Discharge rate of the inference configurations on the unannotated corpus contracts."""

import argparse
from pathlib import Path

from minisol.cli import load
from minisol.inference import Options, run
from minisol.solver import SolverConfig
from minisol.typecheck import Mode

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

CONFIGS = {
    "default": Options(),
    "no-soft": Options(no_soft=True),
    "no-nested": Options(no_nested=True),
    "no-infer": Options(no_infer=True),
    "uniform-assumptions": Options(uniform_assumptions=True),
    "accumulate-sigma": Options(accumulate_sigma=True),
    "chc-arrays": Options(chc_arrays=True),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", type=Path, default=CORPUS)
    ap.add_argument("files", nargs="*", default=["erc20_auto", "erc20_norequire", "nested", "vault"])
    args = ap.parse_args()

    cfg = SolverConfig()
    contracts = [(name, load(str(args.corpus / f"{name}.msol"))) for name in args.files]
    print(f"{'config':<22}" + "".join(f"{name:>18}" for name, _ in contracts) + f"{'total':>10}")
    for label, opts in CONFIGS.items():
        cells, safe, sites = [], 0, 0
        for _, c in contracts:
            r = run(c, Mode.INFER, cfg, opts)
            cells.append(f"{r.safe_count}/{r.soft_total}")
            safe += r.safe_count
            sites += r.soft_total
        rate = 100 * safe / sites if sites else 0.0
        print(f"{label:<22}" + "".join(f"{x:>18}" for x in cells) + f"{rate:>9.1f}%")


if __name__ == "__main__":
    main()
