"""Continuum limits of the catalog schemes and the drifting-heat change of variables.

    python scripts/continuum_limits.py
"""

import argparse

from latsym.catalog import instantiate
from latsym.continuum import leading_order_coefficients, verify_change_of_variables
from latsym.errors import LimitError

RUNS = [
    ("heat_fixed", {}),
    ("heat_dilation5", {}),
    ("heat_dilation4", {}),
    ("heat_galilei", {"sigma": 2.0}),
    ("heat_galilei", {"sigma": 0.5}),
    ("burgers_potential", {}),
    ("burgers_linearizable", {}),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--c", type=float, action="append", help="drift constants to check (default 1 and 0.5)")
    args = ap.parse_args()

    for id_, params in RUNS:
        e = instantiate(id_, params)
        try:
            rep = leading_order_coefficients(e)
        except LimitError as exc:
            print(f"{id_} {params}: {exc}")
            continue
        terms = "  ".join(f"{k} {v:+.6f}" for k, v in rep.coefficients.items() if abs(v) > 1e-6)
        dev = rep.deviation(e.limit["target"])
        print(f"{id_} {params}: {terms}   (order {rep.order:.2f}, off target {dev:.1e})")

    for c in args.c or [1.0, 0.5]:
        cov = verify_change_of_variables(c)
        print(f"drift c = {c:g}: residual {cov.residual:.1e}, non-solution control {cov.negative_residual:.3f}")


if __name__ == "__main__":
    main()
