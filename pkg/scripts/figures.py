"""Scatter plots of two transforming lattices in the (x, t) plane.

The exponential lattice has x spacings that grow with n; the Galilei
lattice is a sheared grid whose coordinate lines are straight.

    python scripts/figures.py --out figures/
"""

import argparse
import math
from pathlib import Path

import numpy as np

from latsym.catalog import galilei_is_aligned, instantiate
from latsym.lattice import Window
from latsym.svg import write_scatter


def _plot(entry, window, path, title):
    g = entry.grid(window)
    M, N = g.x.shape
    m, n = np.meshgrid(np.arange(M) + g.m_lo, np.arange(N) + g.n_lo, indexing="ij")
    write_scatter(path, m, n, g.x, g.t, labels=g.coords, title=title)
    return g


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="figures")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    c = math.sqrt(2.0)
    exp_entry = instantiate("heat_exponential", {"c": c, "h": 1.0, "alpha": math.pi, "beta": 0.0, "t0": 0.0})
    g = _plot(exp_entry, Window(0, 8, 0, 8), out / "exponential_lattice.svg", "exponential lattice, c = sqrt 2")
    print(f"exponential lattice: x range [{g.x.min():.3g}, {g.x.max():.3g}], t range [{g.t.min():g}, {g.t.max():g}]")

    gal = {"tau1": 1.0, "tau2": 2.0, "zeta": 2.0, "sigma": 1.0}
    gal_entry = instantiate("heat_galilei", gal)
    g = _plot(gal_entry, Window(0, 6, 0, 6), out / "galilei_lattice.svg", "Galilei invariant lattice")
    aligned = galilei_is_aligned(gal["tau1"], gal["tau2"], gal["zeta"], gal["sigma"])
    print(f"galilei lattice: {g.x.size} points, n-lines parallel to the t axis: {aligned}")


if __name__ == "__main__":
    main()
