"""Symmetry algebras of every catalog run under the reference ansatz.

    python scripts/reproduce_algebras.py [--seed 42] [--json algebras.json]
"""

import argparse
import json

from latsym.catalog import STANDARD_RUNS, instantiate, run_label
from latsym.finder import FinderOptions, find_for_entry


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--json", help="write the per-run reports here")
    args = ap.parse_args()

    opts = FinderOptions(seed=args.seed, **({"samples": args.samples} if args.samples else {}))
    reports = {}
    print(f"{'run':<24}{'dim':>4}{'fin':>5}{'sup':>5}{'holdout':>11}{'closure':>11}")
    for run in STANDARD_RUNS:
        label = run_label(*run)
        res = find_for_entry(instantiate(*run), opts)
        closure = res.closure_residual if res.closure_residual is not None else float("nan")
        print(f"{label:<24}{res.dimension:>4}{len(res.finite):>5}{len(res.superposition):>5}"
              f"{res.holdout_residual:>11.1e}{closure:>11.1e}")
        for f in res.finite:
            print(f"{'':<8}{f.to_text()}")
        reports[label] = res.report()
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(reports, fh, indent=2)


if __name__ == "__main__":
    main()
