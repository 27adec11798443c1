"""Point vector fields, their prolongation to stencils, and Lie brackets.

A field ``X = xi d/dx + tau d/dt + phi d/du`` is stored either as coefficient
vectors over an :class:`AnsatzBasis` (:class:`VectorField`) or as three DSL
expressions (:class:`ExprField`).  Both expose ``components(x, t, u)``, which
is all that prolongation and flows need.  For light-cone schemes the second
coordinate is called ``y`` and ``tau`` plays the role of ``eta``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dsl import Dual, Expression, parse_expression, real_part, value_and_grad
from .errors import BasisError, DSLSyntaxError, SpanEscapeError
from .lattice import Scheme, StencilConfiguration, _env

COMPONENTS = ("xi", "tau", "phi")
BRACKET_TOL = 1e-6


def _fmt(v):
    r = float(v)
    if r == int(r) and abs(r) < 1e15:
        return str(int(r))
    return f"{r:.12g}"


def _monomial_text(exps, names):
    parts = []
    for e, n in zip(exps, names):
        if e == 1:
            parts.append(n)
        elif e > 1:
            parts.append(f"{n}^{e}")
    return "*".join(parts) if parts else "1"


def _power(v, e):
    out = 1.0
    for _ in range(e):
        out = out * v
    return out


@dataclass(frozen=True, eq=False)
class AnsatzBasis:
    """Scalar functions of ``(x, t, u)`` used to expand field coefficients.

    Monomials ``x^a t^b u^c`` come first in graded-lex order, registered
    DSL functions (in the coordinate names plus parameters) are appended.
    """

    deg_x: int = 2
    deg_t: int = 2
    deg_u: int = 1
    functions: tuple = ()
    coords: tuple = ("x", "t")
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if min(self.deg_x, self.deg_t, self.deg_u) < 0:
            raise BasisError("degrees must be non-negative")
        exps = [(a, b, c) for a in range(self.deg_x + 1) for b in range(self.deg_t + 1)
                for c in range(self.deg_u + 1)]
        exps.sort(key=lambda e: (sum(e), -e[0], -e[1], -e[2]))
        object.__setattr__(self, "monomials", tuple(exps))
        funcs = tuple(f if isinstance(f, Expression) else parse_expression(f) for f in self.functions)
        allowed = {self.coords[0], self.coords[1], "u"} | set(self.params) | {"pi", "e"}
        for f in funcs:
            if f.refs:
                raise BasisError(f"basis function {f.source!r} must not use grid references")
            unknown = sorted(f.names - allowed)
            if unknown:
                raise BasisError(f"basis function {f.source!r} uses unbound names {unknown}")
        object.__setattr__(self, "functions", funcs)
        object.__setattr__(self, "params", dict(self.params))

    @property
    def variables(self):
        return (self.coords[0], self.coords[1], "u")

    @property
    def size(self):
        return len(self.monomials) + len(self.functions)

    def __len__(self):
        return self.size

    @property
    def labels(self):
        names = self.variables
        return [_monomial_text(e, names) for e in self.monomials] + [f.source for f in self.functions]

    def u_free(self):
        """Mask of basis functions that do not depend on ``u``."""
        mono = [e[2] == 0 for e in self.monomials]
        return np.array(mono + ["u" not in f.names for f in self.functions], dtype=bool)

    def index(self, label):
        return self.labels.index(label)

    def evaluate(self, x, t, u):
        """List of basis values; entries follow the input types (floats, arrays, Duals)."""
        xs = [_power(x, k) for k in range(self.deg_x + 1)]
        ts = [_power(t, k) for k in range(self.deg_t + 1)]
        us = [_power(u, k) for k in range(self.deg_u + 1)]
        out = [xs[a] * ts[b] * us[c] for a, b, c in self.monomials]
        if self.functions:
            env = dict(self.params)
            env.update({self.coords[0]: x, self.coords[1]: t, "u": u})
            out += [f(env) for f in self.functions]
        return out

    def matrix(self, x, t, u):
        """Basis values at arrays of points, shape ``(N, K)``."""
        x, t, u = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, t, u)))
        cols = [np.broadcast_to(np.asarray(v, dtype=float), x.shape) for v in self.evaluate(x, t, u)]
        return np.stack(cols, axis=-1)

    def probe_points(self, n, rng, box=(-2.0, 2.0)):
        lo, hi = box
        pts = rng.uniform(lo, hi, size=(n, 3))
        return pts[:, 0], pts[:, 1], pts[:, 2]

    def check_independence(self, rng=None, box=(-2.0, 2.0)):
        """Raise :class:`BasisError` if the functions are dependent on a random probe set."""
        rng = np.random.default_rng(0) if rng is None else rng
        B = self.matrix(*self.probe_points(5 * self.size, rng, box))
        s = np.linalg.svd(B / np.maximum(np.linalg.norm(B, axis=0), 1e-300), compute_uv=False)
        if s[-1] <= 1e-8 * s[0]:
            raise BasisError(f"ansatz basis is numerically dependent (sigma_min/sigma_max = {s[-1] / s[0]:.3g})")
        return s[-1] / s[0]

    def describe(self):
        extra = f" + {list(f.source for f in self.functions)}" if self.functions else ""
        a, b = self.coords
        return f"monomials {a}^<={self.deg_x} {b}^<={self.deg_t} u^<={self.deg_u}{extra}"

    def contains(self, other: "AnsatzBasis"):
        return set(other.labels) <= set(self.labels)


class Field:
    """Anything with ``components(x, t, u) -> (xi, tau, phi)``."""

    label = ""

    def components(self, x, t, u):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class VectorField(Field):
    """Coefficient representation over an :class:`AnsatzBasis`."""

    basis: AnsatzBasis
    xi: np.ndarray
    tau: np.ndarray
    phi: np.ndarray
    label: str = ""

    def __post_init__(self):
        for name in COMPONENTS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.basis.size,):
                raise BasisError(f"{name} has {arr.shape} coefficients, basis has {self.basis.size}")
            object.__setattr__(self, name, arr)

    @classmethod
    def from_vector(cls, basis, vec, label=""):
        K = basis.size
        vec = np.asarray(vec, dtype=float)
        return cls(basis, vec[:K], vec[K:2 * K], vec[2 * K:], label)

    @classmethod
    def zero(cls, basis, label=""):
        return cls.from_vector(basis, np.zeros(3 * basis.size), label)

    @property
    def vector(self):
        return np.concatenate([self.xi, self.tau, self.phi])

    def components(self, x, t, u):
        vals = self.basis.evaluate(x, t, u)
        out = []
        for coef in (self.xi, self.tau, self.phi):
            acc = 0.0
            for c, b in zip(coef, vals):
                if c != 0.0:
                    acc = acc + c * b
            out.append(acc)
        return tuple(out)

    def __add__(self, other):
        return VectorField.from_vector(self.basis, self.vector + other.vector)

    def __sub__(self, other):
        return VectorField.from_vector(self.basis, self.vector - other.vector)

    def __neg__(self):
        return VectorField.from_vector(self.basis, -self.vector, self.label)

    def __mul__(self, k):
        return VectorField.from_vector(self.basis, k * self.vector)

    __rmul__ = __mul__

    def norm(self):
        return float(np.linalg.norm(self.vector))

    def component_text(self, name):
        coef = getattr(self, name)
        terms = []
        for c, lab in zip(coef, self.basis.labels):
            if c == 0.0:
                continue
            if lab == "1":
                terms.append(_fmt(c))
            elif _fmt(c) == "1":
                terms.append(lab if _atomic(lab) else f"({lab})")
            elif _fmt(c) == "-1":
                terms.append("-" + (lab if _atomic(lab) else f"({lab})"))
            else:
                terms.append(f"{_fmt(c)}*" + (lab if _atomic(lab) else f"({lab})"))
        if not terms:
            return "0"
        text = terms[0]
        for term in terms[1:]:
            text += f" - {term[1:]}" if term.startswith("-") else f" + {term}"
        return text

    def to_text(self):
        second = "eta" if self.basis.coords[1] == "y" else "tau"
        body = f"xi = {self.component_text('xi')}; {second} = {self.component_text('tau')}; phi = {self.component_text('phi')}"
        return f"{self.label}: {body}" if self.label else body

    def is_polynomial(self):
        K = len(self.basis.monomials)
        return not any(np.any(getattr(self, n)[K:]) for n in COMPONENTS)


def _atomic(label):
    return re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*(\^\d+)?(\*[A-Za-z_][A-Za-z_0-9]*(\^\d+)?)*", label) is not None


@dataclass(frozen=True, eq=False)
class ExprField(Field):
    """Field given by DSL expressions in the coordinate names, ``u`` and parameters."""

    xi: Expression
    tau: Expression
    phi: Expression
    coords: tuple = ("x", "t")
    params: Mapping = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        for name in COMPONENTS:
            v = getattr(self, name)
            if not isinstance(v, Expression):
                object.__setattr__(self, name, parse_expression(str(v)))
        allowed = {self.coords[0], self.coords[1], "u", "pi", "e"} | set(self.params)
        for name in COMPONENTS:
            e = getattr(self, name)
            if e.refs:
                raise BasisError(f"{name} = {e.source!r}: fields cannot use grid references")
            bad = sorted(e.names - allowed)
            if bad:
                raise BasisError(f"{name} = {e.source!r}: unbound names {bad}")
        object.__setattr__(self, "params", dict(self.params))

    def components(self, x, t, u):
        env = dict(self.params)
        env.update({self.coords[0]: x, self.coords[1]: t, "u": u})
        return tuple(getattr(self, n)(env) for n in COMPONENTS)

    def to_text(self):
        second = "eta" if self.coords[1] == "y" else "tau"
        body = f"xi = {self.xi}; {second} = {self.tau}; phi = {self.phi}"
        return f"{self.label}: {body}" if self.label else body

    def with_params(self, params):
        return ExprField(self.xi, self.tau, self.phi, self.coords, params, self.label)


def evaluate_field(v: Field, point):
    """``(xi, tau, phi)`` at ``point = (x, t, u)``."""
    x, t, u = point
    return tuple(float(real_part(c)) if np.ndim(real_part(c)) == 0 else real_part(c) for c in v.components(x, t, u))


# ---------------------------------------------------------------------------
# Prolongation


def residual_gradients(s: Scheme, c):
    """For each residual, its gradient over all referenced keys."""
    env = _env(s, c)
    out = []
    for e in s.residuals:
        keys = sorted(e.refs)
        _, grads = value_and_grad(e, dict(env), keys)
        out.append(dict(zip(keys, grads)))
    return out


def prolonged_action(v: Field, s: Scheme, c) -> np.ndarray:
    """``pr X E_a`` for ``a = 1..5``: each point's field values times the residual gradient there."""
    values = c.values if isinstance(c, StencilConfiguration) else c
    grads = residual_gradients(s, values)
    a_name, b_name = s.coords
    comp = {}
    for i, j in s.points:
        comp[(i, j)] = v.components(values[(a_name, i, j)], values[(b_name, i, j)], values[("u", i, j)])
    out = []
    for g in grads:
        acc = 0.0
        for (var, i, j), d in g.items():
            k = 0 if var == a_name else 1 if var == b_name else 2
            acc = acc + d * comp[(i, j)][k]
        out.append(acc)
    batch = [np.shape(x) for x in values.values()]
    shape = np.broadcast_shapes(*batch, *[np.shape(o) for o in out])
    return np.array([np.broadcast_to(np.asarray(o, dtype=float), shape) for o in out])


# ---------------------------------------------------------------------------
# Projection and brackets


def project(v: Field, basis: AnsatzBasis, rng=None, label=None):
    """Least-squares expansion of any field in ``basis``; raises on span escape."""
    if isinstance(v, VectorField) and v.basis is basis:
        return v
    rng = np.random.default_rng(1) if rng is None else rng
    x, t, u = basis.probe_points(6 * basis.size, rng)
    B = basis.matrix(x, t, u)
    vals = [np.broadcast_to(np.asarray(real_part(c), dtype=float), x.shape) for c in v.components(x, t, u)]
    coefs, resid = [], 0.0
    scale = max(1e-300, max(np.linalg.norm(c) for c in vals))
    for comp in vals:
        sol, *_ = np.linalg.lstsq(B, comp, rcond=None)
        resid = max(resid, np.linalg.norm(B @ sol - comp) / scale)
        coefs.append(_clean(sol))
    if resid > BRACKET_TOL:
        raise SpanEscapeError("field does not lie in the ansatz span", resid)
    return VectorField(basis, *coefs, label=v.label if label is None else label)


def _clean(vec, rel=1e-10):
    vec = np.array(vec, dtype=float)
    m = np.max(np.abs(vec)) if vec.size else 0.0
    vec[np.abs(vec) <= rel * m] = 0.0
    return vec


def _poly(v: VectorField, name):
    coef = getattr(v, name)
    return {e: c for e, c in zip(v.basis.monomials, coef) if c != 0.0}


def _poly_mul(p, q):
    out = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            e = (e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2])
            out[e] = out.get(e, 0.0) + c1 * c2
    return out


def _poly_diff(p, axis):
    out = {}
    for e, c in p.items():
        if e[axis]:
            d = list(e)
            d[axis] -= 1
            out[tuple(d)] = out.get(tuple(d), 0.0) + c * e[axis]
    return out


def _poly_add(p, q, sign=1.0):
    out = dict(p)
    for e, c in q.items():
        out[e] = out.get(e, 0.0) + sign * c
    return out


def _apply(field_polys, p):
    """``X(p) = xi p_x + tau p_t + phi p_u`` on polynomial dicts."""
    out = {}
    for axis, comp in enumerate(field_polys):
        out = _poly_add(out, _poly_mul(comp, _poly_diff(p, axis)))
    return out


def lie_bracket(a: VectorField, b: VectorField, out_basis: AnsatzBasis | None = None) -> VectorField:
    """``[a, b]^i = a(b^i) - b(a^i)``, expanded in ``out_basis`` (default ``a.basis``).

    Polynomial fields are bracketed exactly; fields using registered
    functions are bracketed pointwise with exact derivatives and re-expanded
    by least squares.  The re-expansion residual is stored as ``.residual``.
    """
    out_basis = a.basis if out_basis is None else out_basis
    if a.is_polynomial() and b.is_polynomial():
        pa = [_poly(a, n) for n in COMPONENTS]
        pb = [_poly(b, n) for n in COMPONENTS]
        index = {e: k for k, e in enumerate(out_basis.monomials)}
        coefs, escaped = [], 0.0
        for i in range(3):
            r = _poly_add(_apply(pa, pb[i]), _apply(pb, pa[i]), -1.0)
            vec = np.zeros(out_basis.size)
            for e, c in r.items():
                if e in index:
                    vec[index[e]] += c
                else:
                    escaped += c * c
            coefs.append(vec)
        rel = np.sqrt(escaped) / max(1e-300, a.norm() * b.norm())
        if rel > BRACKET_TOL:
            raise SpanEscapeError("bracket leaves the ansatz span", rel)
        out = VectorField(out_basis, *coefs)
        object.__setattr__(out, "residual", float(rel))
        return out
    return _numeric_bracket(a, b, out_basis)


class _PointBracket(Field):
    def __init__(self, a, b, names):
        self.a, self.b, self.names = a, b, names
        self.label = ""

    def components(self, x, t, u):
        x, t, u = (real_part(v) for v in (x, t, u))
        n = self.names
        pt = (Dual(x, {n[0]: 1.0}), Dual(t, {n[1]: 1.0}), Dual(u, {"u": 1.0}))
        ca = self.a.components(*pt)
        cb = self.b.components(*pt)
        va = [real_part(c) for c in ca]
        vb = [real_part(c) for c in cb]
        out = []
        for i in range(3):
            acc = 0.0
            for k, name in enumerate((n[0], n[1], "u")):
                acc = acc + va[k] * _d(cb[i], name) - vb[k] * _d(ca[i], name)
            out.append(acc)
        return tuple(out)


def _d(c, name):
    return c.grad.get(name, 0.0) if isinstance(c, Dual) else 0.0


def _numeric_bracket(a, b, out_basis):
    names = a.basis.coords if isinstance(a, VectorField) else a.coords
    pb = _PointBracket(a, b, names)
    rng = np.random.default_rng(7)
    x, t, u = out_basis.probe_points(6 * out_basis.size, rng)
    B = out_basis.matrix(x, t, u)
    vals = [np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in pb.components(x, t, u)]
    scale = max(1e-300, float(np.sqrt(np.mean(np.square(a.basis.matrix(x, t, u) @ np.stack([a.xi, a.tau, a.phi]).T))))
                * float(np.sqrt(np.mean(np.square(b.basis.matrix(x, t, u) @ np.stack([b.xi, b.tau, b.phi]).T)))))
    coefs, resid = [], 0.0
    for comp in vals:
        sol, *_ = np.linalg.lstsq(B, comp, rcond=None)
        resid = max(resid, float(np.sqrt(np.mean(np.square(B @ sol - comp)))) / scale)
        coefs.append(_clean(sol, 1e-12))
    if resid > BRACKET_TOL:
        raise SpanEscapeError("bracket leaves the ansatz span", resid)
    out = VectorField(out_basis, *coefs)
    object.__setattr__(out, "residual", resid)
    return out


# ---------------------------------------------------------------------------
# Text format:  [label:] xi = ...; tau = ...; phi = ...


_SECOND = {"tau": "tau", "eta": "tau", "xi": "xi", "phi": "phi"}


def parse_field(text, coords=("x", "t"), params=None) -> ExprField:
    """Parse one field line, e.g. ``B: xi = t; tau = 0; phi = 0``."""
    body = text.split("#", 1)[0].strip()
    label = ""
    m = re.match(r"^\s*([A-Za-z_][\w\-]*)\s*:(?!=)", body)
    if m:
        label, body = m.group(1), body[m.end():]
    comps = {}
    for part in body.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise DSLSyntaxError(f"expected 'name = expression' in {part.strip()!r}", 1, 1)
        name, expr = part.split("=", 1)
        key = _SECOND.get(name.strip())
        if key is None:
            raise DSLSyntaxError(f"unknown component {name.strip()!r}", 1, 1, ("xi", "tau", "eta", "phi"))
        comps[key] = expr.strip()
    missing = [c for c in COMPONENTS if c not in comps]
    if missing:
        raise DSLSyntaxError(f"field is missing components {missing}", 1, 1)
    return ExprField(comps["xi"], comps["tau"], comps["phi"], tuple(coords), params or {}, label)


def read_fields(path, coords=("x", "t"), params=None):
    fields = []
    with open(path) as fh:
        for line in fh:
            if line.split("#", 1)[0].strip():
                fields.append(parse_field(line, coords, params))
    return fields


def write_fields(path, fields):
    with open(path, "w") as fh:
        for f in fields:
            fh.write(f.to_text() + "\n")
