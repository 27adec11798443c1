"""Continuum limits of schemes and the transformation of the drifting heat equation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .dsl import parse_expression, second_derivatives
from .errors import LimitError
from .lattice import StencilConfiguration, residuals

BASE_TERMS = ("u_t", "u_x", "u_xx", "u_xt", "u_tt", "u", "1")
NONLINEAR_TERMS = ("u*u_x", "(u_x)^2", "e^u", "u^p")
MAX_CONDITION = 1e10


def _default_scales():
    return tuple(2.0 ** -k for k in range(3, 11))


@dataclass(frozen=True)
class LimitProbe:
    """Test function and scale sequence for a limit fit.

    The test function and the term names use ``x`` and ``t`` for the first
    and second coordinate whatever the scheme calls them.
    """

    u: str = "0.5*sin(x+0.3*t)*exp(-0.1*t)+0.2*cos(0.7*x+1.3*t)+0.1*x*t"
    scales: tuple = field(default_factory=_default_scales)
    samples: int = 40
    box: tuple = ((-2.0, 2.0), (-1.0, 1.0))
    seed: int = 0
    romberg: int = 3
    extra_terms: tuple = ()

    def __post_init__(self):
        sc = np.asarray(self.scales, dtype=float)
        if sc.size < 3 or np.any(sc <= 0) or np.any(np.diff(sc) >= 0):
            raise ValueError("scales must be positive, strictly decreasing and at least three long")
        for term in self.extra_terms:
            if term not in NONLINEAR_TERMS:
                raise ValueError(f"unknown dictionary term {term!r}")


@dataclass
class LimitReport:
    coefficients: dict
    raw: list  # per-scale normalized coefficient dicts
    order: float
    condition: float
    residual_scale: list  # max |E5| per scale
    exact: bool = False

    def deviation(self, target):
        """Largest ``|c - target|`` over the dictionary, relative to the largest target entry."""
        ref = max(abs(v) for v in target.values())
        keys = set(self.coefficients) | set(target)
        return max(abs(self.coefficients.get(k, 0.0) - target.get(k, 0.0)) for k in keys) / ref


class _Samples:
    """Test function and its derivatives at the sample points."""

    def __init__(self, text, params, xs, ts):
        self.expr = parse_expression(text)
        self.params = dict(params)
        a, b = "x", "t"
        v, g, h = second_derivatives(self.expr, {**self.params, a: xs, b: ts}, (a, b))
        shape = np.shape(xs)
        full = lambda q: np.broadcast_to(np.asarray(q, dtype=float), shape)
        self.terms = {
            "u": full(v), "u_x": full(g[a]), "u_t": full(g[b]),
            "u_xx": full(h[(a, a)]), "u_xt": full(h[(a, b)]), "u_tt": full(h[(b, b)]),
            "1": np.ones(shape),
        }
        u, ux = self.terms["u"], self.terms["u_x"]
        self.terms["u*u_x"] = u * ux
        self.terms["(u_x)^2"] = ux * ux
        self.terms["e^u"] = np.exp(u)
        if "p" in self.params:
            with np.errstate(invalid="ignore"):
                self.terms["u^p"] = np.power(u, self.params["p"])

    def u_at(self, ca, cb):
        return np.asarray(self.expr({**self.params, "x": ca, "t": cb}), dtype=float)


def _scaled_entry(entry, eps):
    from .catalog import instantiate

    params = {k: v for k, v in entry.params.items()}
    params.update(entry.lattice_constants)
    params.update(entry.limit["scaling"](eps))
    return instantiate(entry.id, params)


def _stencil(entry, probe_fn, xs, ts):
    a, b = entry.coords
    values = {}
    for (i, j) in entry.scheme.points:
        ca, cb = entry.lattice_point(i, j, **{f"{a}0": xs, f"{b}0": ts})
        ca = np.broadcast_to(np.asarray(ca, dtype=float), np.shape(xs))
        cb = np.broadcast_to(np.asarray(cb, dtype=float), np.shape(xs))
        values[(a, i, j)] = ca
        values[(b, i, j)] = cb
        values[("u", i, j)] = probe_fn(ca, cb)
    return StencilConfiguration(values)


def _romberg(rows, ratio, levels):
    """Richardson table assuming an error expansion in integer powers of the scale."""
    table = [np.asarray(rows, dtype=float)]
    for k in range(1, levels):
        prev = table[-1]
        f = ratio ** k
        table.append((f * prev[1:] - prev[:-1]) / (f - 1.0))
    return table[-1][-1]


def leading_order_coefficients(entry, probe: LimitProbe = LimitProbe(), target=None) -> LimitReport:
    """Fit the PDE residual of a catalog scheme against derivatives of a test function.

    The lattice is rebuilt for every scale with the sample point as its
    reference site, the PDE residual is regressed on the term dictionary and
    the coefficients are normalized by the leading term and extrapolated to
    zero scale.
    """
    if entry.limit is None:
        raise LimitError(f"{entry.id}: no continuum scaling registered")
    target = dict(target if target is not None else entry.limit["target"])
    leading = entry.limit["leading"]
    rng = np.random.default_rng(probe.seed)
    (xa, xb), (ta, tb) = probe.box
    # dyadic sample points keep polynomial probes free of rounding
    xs = np.round(rng.uniform(xa, xb, probe.samples) * 64) / 64
    ts = np.round(rng.uniform(ta, tb, probe.samples) * 64) / 64

    base = _Samples(probe.u, entry.scheme.params, xs, ts)
    names = list(BASE_TERMS)
    for term in tuple(probe.extra_terms) + tuple(target):
        if term not in names:
            if term not in base.terms:
                raise LimitError(f"term {term!r} is not defined for this scheme")
            names.append(term)
    A = np.stack([base.terms[n] for n in names], axis=1)
    if not np.all(np.isfinite(A)):
        raise LimitError("test function leaves the domain of a dictionary term")
    norms = np.linalg.norm(A, axis=0)

    raw_rows, scale_res = [], []
    for eps in probe.scales:
        scaled = _scaled_entry(entry, eps)
        cfg = _stencil(scaled, base.u_at, xs, ts)
        r = residuals(scaled.scheme, cfg)
        lattice_err = float(np.max(np.abs(r[:4])))
        if lattice_err > 1e-9 * (1.0 + float(np.max(np.abs(np.stack(list(cfg.values.values())))))):
            raise LimitError(f"{entry.id}: closed-form lattice is off-shell at scale {eps:g}")
        scale_res.append(float(np.max(np.abs(r[4]))))
        raw_rows.append(r[4])

    if max(scale_res) <= 1e-12 * (1.0 + float(np.max(np.abs(A)))):
        return LimitReport({}, [], math.inf, 0.0, scale_res, exact=True)

    nz = norms > 0
    cond = np.linalg.cond(A[:, nz] / norms[nz]) if nz.any() else math.inf
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise LimitError(f"test function is degenerate for the term dictionary (condition {cond:.3g})")

    lead = names.index(leading)
    coeffs = []
    for r5 in raw_rows:
        c = np.zeros(len(names))
        c[nz] = np.linalg.lstsq(A[:, nz] / norms[nz], r5, rcond=None)[0] / norms[nz]
        if abs(c[lead]) < 1e-12:
            raise LimitError(f"leading term {leading} vanishes in the fit")
        coeffs.append(c / c[lead])
    coeffs = np.array(coeffs)

    ratios = np.asarray(probe.scales[:-1]) / np.asarray(probe.scales[1:])
    ratio = float(ratios[0])
    # extrapolation needs a geometric sequence
    levels = min(probe.romberg, len(probe.scales)) if np.allclose(ratios, ratio, rtol=1e-12) else 1
    limit = np.array([_romberg(coeffs[:, k], ratio, levels) for k in range(len(names))])

    diffs = np.max(np.abs(np.diff(coeffs, axis=0)), axis=1)
    floor = 1e-9 * max(1.0, float(np.max(np.abs(limit))))
    good = [k for k in range(len(diffs) - 1) if diffs[k] > floor and diffs[k + 1] > floor]
    if not good:
        order = math.inf
    else:
        slopes = [math.log(diffs[k] / diffs[k + 1]) / math.log(probe.scales[k] / probe.scales[k + 1]) for k in good]
        order = float(np.median(slopes))
        if order <= 0.1:
            raise LimitError(f"remainder does not shrink with the scale (order {order:.3g})")

    out = {n: float(v) for n, v in zip(names, limit)}
    raw = [{n: float(v) for n, v in zip(names, row)} for row in coeffs]
    return LimitReport(out, raw, order, float(cond), scale_res)


# ---------------------------------------------------------------------------
# Drifting heat equation u_t = u_xx + 2c u_xt + c^2 u_tt


@dataclass(frozen=True)
class ChangeOfVariables:
    c: float
    residual: float
    negative_residual: float
    samples: int


def drift_solution(c, w="exp(a+b)"):
    """Pull ``w(a, b)`` with ``w_b = w_aa`` back to a solution of the drifting equation."""
    k = (1.0 + c * c) ** 2
    gauge = f"exp({c}*(({2.0 + c * c})*x+{c}*t)/{4.0 * k})"
    subs = {"a": f"(x+{c}*t)", "b": f"({k}*(t-{c}*x))"}
    inner = re.sub(r"\b[ab]\b", lambda m: subs[m.group(0)], w)
    return parse_expression(f"{gauge}*({inner})")


def _drift_residual(c, expr, xs, ts):
    v, g, h = second_derivatives(expr, {"x": xs, "t": ts}, ("x", "t"))
    res = g["t"] - h[("x", "x")] - 2.0 * c * h[("x", "t")] - c * c * h[("t", "t")]
    return float(np.max(np.abs(res)) / np.max(np.abs(g["t"])))


def verify_change_of_variables(c: float, grid=10, box=((-1.0, 1.0), (-1.0, 1.0)),
                               negative="exp(a+2*b)") -> ChangeOfVariables:
    """Residual of the drifting heat equation for a pulled-back exact heat solution.

    The negative control pulls back a function that does not solve ``w_b = w_aa``.
    """
    if not math.isfinite(c):
        raise ValueError("c must be finite")
    (xa, xb), (ta, tb) = box
    X, T = np.meshgrid(np.linspace(xa, xb, grid), np.linspace(ta, tb, grid), indexing="ij")
    good = _drift_residual(c, drift_solution(c), X, T)
    bad = _drift_residual(c, drift_solution(c, negative), X, T)
    return ChangeOfVariables(c, good, bad, grid * grid)
