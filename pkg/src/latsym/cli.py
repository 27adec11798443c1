"""Command-line front end.

Every command prints a short human summary.  ``--report FILE`` writes the
machine-readable JSON document and ``--json`` prints it instead of the
summary.  The document has a ``deterministic`` section that depends only on
the arguments and a ``timing`` section that does not.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .catalog import CatalogEntry, catalog_ids, instantiate, signature
from .continuum import LimitProbe, leading_order_coefficients, verify_change_of_variables
from .dsl import parse_expression
from .errors import (
    CatalogError,
    DSLSyntaxError,
    EvaluationError,
    LatsymError,
)
from .finder import FinderOptions, find_symmetries, sample_configurations, structure_constants
from .flow import FlowOptions, transform_family
from .lattice import GridSolution, SeedSpec, Window, grid_residuals, load_scheme_file, propagate_grid
from .svg import write_scatter
from .symmetry import AnsatzBasis, lie_bracket, project, prolonged_action, read_fields, write_fields

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _fmt(v):
    return float(f"{float(v):.6e}")


# ---------------------------------------------------------------------------
# Argument handling


def _range(text):
    try:
        a, b = text.split(":")
        lo, hi = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b with integers, got {text!r}") from None
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return lo, hi


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser():
    p = argparse.ArgumentParser(prog="latsym", description="Point symmetries of difference schemes on transforming lattices.")
    p.add_argument("--version", action="version", version=f"latsym {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scheme=True):
        if scheme:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--scheme", help="catalog id")
            g.add_argument("--scheme-file", help="INI scheme file")
            sp.add_argument("--param", action="append", type=_kv, default=[], metavar="K=V",
                            help="scheme parameter or lattice constant (repeatable)")
        sp.add_argument("--report", help="write the JSON report here")
        sp.add_argument("--json", action="store_true", help="print the JSON report instead of the summary")

    def ansatz(sp):
        sp.add_argument("--deg-x", type=int, default=2)
        sp.add_argument("--deg-t", type=int, default=2)
        sp.add_argument("--deg-u", type=int, default=1)
        sp.add_argument("--basis", action="append", default=[], metavar="EXPR",
                        help="extra basis function as an expression (repeatable)")

    sp = sub.add_parser("list", help="list catalog schemes")
    common(sp, scheme=False)

    sp = sub.add_parser("find", help="compute the symmetry algebra under a polynomial ansatz")
    common(sp)
    ansatz(sp)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-8, help="relative singular value cutoff")
    sp.add_argument("--out", help="write the found fields in field-file format")

    sp = sub.add_parser("verify", help="check fields against the invariance condition")
    common(sp)
    sp.add_argument("--field", help="field file (default: catalog oracles)")
    sp.add_argument("--samples", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-8)

    sp = sub.add_parser("flow", help="transform an on-shell grid along field flows")
    common(sp)
    sp.add_argument("--field", help="field file (default: catalog oracles)")
    sp.add_argument("--lambda", dest="lam", type=float, action="append", metavar="L",
                    help="group parameter (repeatable, default 0.1)")
    sp.add_argument("--grid", help="grid CSV (default: built from the catalog seed)")
    sp.add_argument("--m-range", type=_range, default=(0, 19))
    sp.add_argument("--n-range", type=_range, default=(0, 19))
    sp.add_argument("--substeps", type=int, default=1000)
    sp.add_argument("--tol", type=float, default=1e-7)
    sp.add_argument("--out", help="write the transformed grid (first field, first lambda) as CSV")

    sp = sub.add_parser("lattice", help="build an on-shell grid and export it")
    common(sp)
    sp.add_argument("--m-range", type=_range, default=(0, 8))
    sp.add_argument("--n-range", type=_range, default=(0, 8))
    sp.add_argument("--out", help="CSV file")
    sp.add_argument("--svg", help="SVG scatter of the lattice points")

    sp = sub.add_parser("limit", help="fit the continuum limit of a catalog scheme")
    common(sp)
    sp.add_argument("--probe", help="test function in x and t")
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("bracket", help="commutators and structure constants of fields")
    common(sp)
    ansatz(sp)
    sp.add_argument("--field", help="field file (default: catalog oracles)")
    return p


# ---------------------------------------------------------------------------
# Scheme resolution


class _Target:
    """A catalog entry or a scheme read from a file."""

    def __init__(self, args):
        self.entry: CatalogEntry | None = None
        self.seed_decl = None
        params = dict(args.param)
        if getattr(args, "scheme_file", None):
            try:
                s, seed = load_scheme_file(args.scheme_file)
            except OSError as exc:
                raise UsageError(f"cannot read {args.scheme_file}: {exc}") from None
            unknown = sorted(set(params) - set(s.params))
            if unknown:
                raise UsageError(f"unknown parameters {unknown} for {s.name}")
            self.scheme = s.with_params(**{k: float(v) for k, v in params.items()}) if params else s
            self.seed_decl = seed
            self.id = s.name
            self.params = dict(self.scheme.params)
        elif getattr(args, "scheme", None):
            self.entry = instantiate(args.scheme, params)
            self.scheme = self.entry.scheme
            self.id = self.entry.id
            self.params = {**self.entry.params, **self.entry.lattice_constants}
        else:
            raise UsageError("one of --scheme or --scheme-file is required")

    @property
    def coords(self):
        return tuple(self.scheme.coords)

    def fields(self, path):
        if path:
            try:
                return read_fields(path, self.coords, dict(self.scheme.params))
            except OSError as exc:
                raise UsageError(f"cannot read {path}: {exc}") from None
        if self.entry is None:
            raise UsageError("--field is required with --scheme-file")
        return self.entry.oracle_fields()

    def grid(self, window):
        if self.entry is not None:
            return self.entry.grid(window)
        if not self.seed_decl:
            raise UsageError(f"{self.id}: scheme file has no [seed] section")
        i1, _, j1, _ = self.scheme.bounds
        a, b = self.coords
        expr = parse_expression(self.seed_decl["u"])
        params = dict(self.scheme.params)

        def u_fn(m, n, ca, cb):
            return expr({**params, a: ca, b: cb})

        seed = SeedSpec(self.seed_decl["lattice"], u_fn, (window.m_lo + i1, window.n_lo + j1))
        return propagate_grid(self.scheme, seed, window)

    def finder_options(self, args):
        opts = FinderOptions(samples=args.samples, seed=args.seed, cutoff=getattr(args, "tol", 1e-8))
        if self.entry is not None:
            opts = replace(opts, u_range=self.entry.u_range)
        return opts

    @property
    def admissible(self):
        return self.entry.admissible if self.entry is not None else None

    def basis(self, args):
        extra = tuple(self.entry.extra_basis) if self.entry is not None else ()
        extra += tuple(f for f in args.basis if f not in extra)
        return AnsatzBasis(args.deg_x, args.deg_t, args.deg_u, extra, self.coords, dict(self.scheme.params))


# ---------------------------------------------------------------------------
# Commands; each returns (deterministic results, summary lines)


def cmd_list(args):
    rows = [{"id": i, "signature": signature(i)} for i in catalog_ids()]
    return {"schemes": rows}, [r["signature"] for r in rows]


def cmd_find(args, tgt):
    basis = tgt.basis(args)
    res = find_symmetries(tgt.scheme, basis, tgt.finder_options(args), tgt.admissible)
    if args.out:
        write_fields(args.out, res.fields)
    rep = res.report()
    lines = [f"{tgt.id}: {res.dimension}-dimensional algebra "
             f"({len(res.finite)} finite + {len(res.superposition)} superposition) from {res.n_samples} samples"]
    for k, (f, s) in enumerate(zip(res.fields, res.sectors)):
        lines.append(f"  [{k}] {s:13s} {f.to_text()}")
    lines.append(f"  holdout residual {res.holdout_residual:.2e}")
    if res.closure_residual is not None:
        lines.append(f"  closure residual {res.closure_residual:.2e}")
    return rep, lines


def cmd_verify(args, tgt):
    fields = tgt.fields(args.field)
    opts = FinderOptions(seed=args.seed)
    if tgt.entry is not None:
        opts = replace(opts, u_range=tgt.entry.u_range)
    cfg = sample_configurations(tgt.scheme, args.samples, np.random.default_rng(args.seed), opts, tgt.admissible)
    rows, lines = [], []

    def check(f, expect):
        r = float(np.max(np.abs(prolonged_action(f, tgt.scheme, cfg))))
        ok = r <= args.tol
        rows.append({"field": f.to_text(), "max_residual": _fmt(r), "symmetry": ok, "expected": expect})
        lines.append(f"  {'PASS' if ok == expect else 'FAIL'} {r:.2e} {f.to_text()}")
        return ok == expect

    lines.append(f"{tgt.id}: {args.samples} on-shell configurations, tolerance {args.tol:g}")
    good = all([check(f, True) for f in fields])
    if not args.field and tgt.entry is not None:
        for f in tgt.entry.non_symmetry_fields():
            good &= check(f, False)
    return {"samples": args.samples, "tolerance": args.tol, "fields": rows, "passed": bool(good)}, lines


def cmd_flow(args, tgt):
    fields = tgt.fields(args.field)
    lams = args.lam or [0.1]
    if args.grid:
        try:
            g = GridSolution.from_csv(args.grid)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read grid {args.grid}: {exc}") from None
    else:
        g = tgt.grid(Window(args.m_range[0], args.m_range[1], args.n_range[0], args.n_range[1]))
    base = float(np.max(np.abs(grid_residuals(tgt.scheme, g))))
    opts = FlowOptions(substeps=args.substeps)
    rows = []
    lines = [f"{tgt.id}: grid {g.x.shape[0]}x{g.x.shape[1]}, initial residual {base:.2e}"]
    first = None
    for f in fields:
        for lam, r in zip(lams, transform_family(f, g, tgt.scheme, lams, opts)):
            first = first or r
            ok = r.max_residual <= args.tol
            rows.append({"field": f.to_text(), "lambda": lam, "max_residual": _fmt(r.max_residual),
                         "equation_max": [_fmt(v) for v in r.equation_max()],
                         "flow_error": _fmt(r.flow_error), "invariant": ok})
            lines.append(f"  {'ok  ' if ok else 'BROKEN'} lambda={lam:+g} residual {r.max_residual:.2e}  {f.to_text()}")
    if args.out and first is not None:
        first.grid.to_csv(args.out)
    worst = max((float(r["max_residual"]) for r in rows), default=0.0)
    return {"grid_shape": list(g.x.shape), "initial_residual": _fmt(base), "substeps": args.substeps,
            "max_residual": _fmt(worst), "transforms": rows}, lines


def cmd_lattice(args, tgt):
    w = Window(args.m_range[0], args.m_range[1], args.n_range[0], args.n_range[1])
    g = tgt.grid(w)
    r = float(np.max(np.abs(grid_residuals(tgt.scheme, g))))
    if args.out:
        g.to_csv(args.out)
    if args.svg:
        M, N = g.x.shape
        mm, nn = np.meshgrid(np.arange(g.m_lo, g.m_lo + M), np.arange(g.n_lo, g.n_lo + N), indexing="ij")
        write_scatter(args.svg, mm, nn, g.x, g.t, tgt.coords, title=tgt.id)
    a, b = tgt.coords
    lines = [f"{tgt.id}: {g.x.size} points on m {w.m_lo}..{w.m_hi}, n {w.n_lo}..{w.n_hi}, max residual {r:.2e}",
             f"  {a} in [{g.x.min():.6g}, {g.x.max():.6g}], {b} in [{g.t.min():.6g}, {g.t.max():.6g}]"]
    return {"window": [w.m_lo, w.m_hi, w.n_lo, w.n_hi], "points": int(g.x.size), "max_residual": _fmt(r),
            "range": {a: [_fmt(g.x.min()), _fmt(g.x.max())], b: [_fmt(g.t.min()), _fmt(g.t.max())]}}, lines


def cmd_limit(args, tgt):
    if tgt.entry is None:
        raise UsageError("limit needs a catalog scheme")
    probe = LimitProbe(seed=args.seed) if args.probe is None else LimitProbe(u=args.probe, seed=args.seed)
    rep = leading_order_coefficients(tgt.entry, probe)
    target = tgt.entry.limit["target"]
    out = {"probe": probe.u, "scales": [_fmt(s) for s in probe.scales], "exact": rep.exact,
           "target": target, "coefficients": {k: float(f"{v:.9g}") for k, v in rep.coefficients.items()},
           "order": _fmt(rep.order) if np.isfinite(rep.order) else None}
    lines = [f"{tgt.id}: continuum limit with probe {probe.u}"]
    if rep.exact:
        lines.append("  residual vanishes at every scale")
    else:
        dev = rep.deviation(target)
        out["deviation"] = _fmt(dev)
        for k, v in rep.coefficients.items():
            lines.append(f"  {k:8s} {v:+.9f}   target {target.get(k, 0.0):+.6f}")
        lines.append(f"  deviation {dev:.2e}, remainder order {rep.order:.2f}")
    if tgt.entry.id == "heat_galilei":
        c = 1.0 / tgt.entry.lattice_constants["sigma"]
        cv = verify_change_of_variables(c)
        out["change_of_variables"] = {"c": c, "residual": _fmt(cv.residual), "negative_control": _fmt(cv.negative_residual)}
        lines.append(f"  reduction to the heat equation: residual {cv.residual:.2e}, control {cv.negative_residual:.2e}")
    return out, lines


def cmd_bracket(args, tgt):
    basis = tgt.basis(args)
    fields = [project(f, basis) for f in tgt.fields(args.field)]
    labels = [f.label or f"X{k}" for k, f in enumerate(fields)]
    rows, lines = [], [f"{tgt.id}: brackets of {len(fields)} fields"]
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            br = lie_bracket(fields[i], fields[j])
            text = br.to_text() if br.norm() > 1e-12 else "0"
            rows.append({"pair": [labels[i], labels[j]], "bracket": text})
            lines.append(f"  [{labels[i]}, {labels[j]}] = {text}")
    C, res = structure_constants(fields)
    entries = [[labels[i], labels[j], labels[k], float(f"{C[i, j, k]:.10g}")]
               for i in range(len(fields)) for j in range(i + 1, len(fields)) for k in range(len(fields))
               if abs(C[i, j, k]) > 1e-9]
    lines.append(f"  closure residual {res:.2e}")
    return {"labels": labels, "brackets": rows, "structure_constants": entries, "closure_residual": _fmt(res)}, lines


COMMANDS = {"find": cmd_find, "verify": cmd_verify, "flow": cmd_flow, "lattice": cmd_lattice,
            "limit": cmd_limit, "bracket": cmd_bracket}


def run(argv=None, stdout=None, stderr=None):
    """Run the CLI and return the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    t0 = time.perf_counter()
    try:
        if args.command == "list":
            results, lines = cmd_list(args)
            head = {}
        else:
            tgt = _Target(args)
            results, lines = COMMANDS[args.command](args, tgt)
            head = {"scheme": tgt.id, "parameters": {k: v for k, v in sorted(tgt.params.items())}}
            if hasattr(args, "seed"):
                head["seed"] = args.seed
    except (UsageError, CatalogError, DSLSyntaxError) as exc:
        print(f"latsym: error: {exc}", file=stderr)
        return EXIT_USAGE
    except (LatsymError, EvaluationError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"latsym: numerical failure: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"latsym: error: {exc}", file=stderr)
        return EXIT_USAGE
    report = {
        "deterministic": {"command": [args.command] + _echo(argv), **head, "results": results},
        "timing": {"elapsed_seconds": round(time.perf_counter() - t0, 4)},
    }
    text = json.dumps(report, indent=2, sort_keys=False, default=_json_default)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    if args.json:
        print(text, file=stdout)
    else:
        print("\n".join(lines), file=stdout)
    return EXIT_OK


def _echo(argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    return argv[1:]


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
