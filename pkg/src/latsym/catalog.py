"""Ready-made schemes with parameters, seed recipes and known symmetry algebras."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .dsl import parse_expression
from .errors import InvalidParameterError, UnknownSchemeError
from .lattice import GridSolution, Scheme, SeedSpec, Window, lattice_jacobian, propagate_grid
from .symmetry import AnsatzBasis, ExprField


@dataclass(frozen=True)
class Param:
    name: str
    default: object
    check: Callable | None = None
    rule: str = ""
    kind: str = "scheme"  # "scheme", "lattice" (integration constant) or "choice"
    aliases: tuple = ()


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    """A concrete scheme with its oracles.

    ``oracles`` are ``(label, xi, tau, phi)`` DSL triples known to be
    symmetries; ``superposition`` lists functions ``S`` with ``S d/du`` a
    symmetry; ``non_symmetries`` are fields that must *not* be found.
    """

    id: str
    scheme: Scheme
    params: Mapping
    lattice_constants: Mapping
    oracles: tuple
    superposition: tuple = ()
    non_symmetries: tuple = ()
    expected_dimension: int | None = None
    expected_finite: int | None = None
    extra_basis: tuple = ()
    closed_form: Callable | None = None
    u_initial: str = "0"
    u_range: tuple = (-2.0, 2.0)
    admissible: Callable | None = None
    limit: Mapping | None = None
    predicates: Mapping = field(default_factory=dict)

    @property
    def coords(self):
        return self.scheme.coords

    def oracle_fields(self):
        out = []
        for label, xi, tau, phi in self.oracles:
            out.append(ExprField(xi, tau, phi, self.coords, dict(self.params_numeric), label))
        for k, s in enumerate(self.superposition):
            out.append(ExprField("0", "0", s, self.coords, dict(self.params_numeric), f"S{k}"))
        return out

    def non_symmetry_fields(self):
        return [ExprField(xi, tau, phi, self.coords, dict(self.params_numeric), label)
                for label, xi, tau, phi in self.non_symmetries]

    @property
    def params_numeric(self):
        return {k: v for k, v in self.scheme.params.items()}

    def reference_basis(self, deg_x=2, deg_t=2, deg_u=1):
        return AnsatzBasis(deg_x, deg_t, deg_u, self.extra_basis, self.coords, self.params_numeric)

    def lattice_point(self, m, n, **consts):
        c = dict(self.lattice_constants)
        c.update(consts)
        return self.closed_form(m, n, c)

    def seed(self, window: Window, u=None, **consts) -> SeedSpec:
        """Seed data from the closed-form lattice and a ``u`` profile (DSL in the coordinates)."""
        i1, _, j1, _ = self.scheme.bounds
        ref = (window.m_lo + i1, window.n_lo + j1)
        a, b = self.coords
        lattice = {}
        for var, i, j in self.scheme.seed_sites:
            xa, xb = self.lattice_point(ref[0] + i, ref[1] + j, **consts)
            lattice[(var, i, j)] = xa if var == a else xb
        expr = parse_expression(self.u_initial if u is None else u)
        params = dict(self.params_numeric)

        def u_fn(m, n, ca, cb):
            env = dict(params)
            env.update({a: ca, b: cb})
            return expr(env)

        return SeedSpec(lattice, u_fn, ref)

    def grid(self, window: Window, u=None, **consts) -> GridSolution:
        return propagate_grid(self.scheme, self.seed(window, u, **consts), window)


# ---------------------------------------------------------------------------
# Registry


_REGISTRY: dict = {}


def _register(id_, params, builder):
    _REGISTRY[id_] = (tuple(params), builder)


def catalog_ids():
    return tuple(_REGISTRY)


def signature(id_):
    params, _ = _REGISTRY[id_]
    parts = []
    for p in params:
        rule = f" ({p.rule})" if p.rule else ""
        parts.append(f"{p.name}={p.default}{rule}")
    return f"{id_}: " + ", ".join(parts) if parts else id_


def parameter_specs(id_):
    if id_ not in _REGISTRY:
        raise UnknownSchemeError(f"unknown scheme {id_!r}; known: {', '.join(_REGISTRY)}")
    return _REGISTRY[id_][0]


def instantiate(id_, params=None) -> CatalogEntry:
    """Resolve defaults, validate parameters and build the entry."""
    specs = parameter_specs(id_)
    lookup = {}
    for p in specs:
        lookup[p.name] = p
        for a in p.aliases:
            lookup[a] = p
    values = {p.name: p.default for p in specs}
    for key, val in (params or {}).items():
        if key not in lookup:
            raise InvalidParameterError(
                f"{id_}: unknown parameter {key!r}; accepted: {', '.join(p.name for p in specs)}"
            )
        p = lookup[key]
        if p.kind == "choice":
            values[p.name] = str(val)
        else:
            try:
                values[p.name] = float(val)
            except (TypeError, ValueError):
                raise InvalidParameterError(f"{id_}: parameter {p.name} must be a number, got {val!r}") from None
    for p in specs:
        v = values[p.name]
        if p.check is not None and not p.check(v):
            raise InvalidParameterError(f"{id_}: invalid {p.name}={v} (requires {p.rule})")
    builder = _REGISTRY[id_][1]
    return builder(values)


def _split(values, specs):
    scheme = {p.name: float(values[p.name]) for p in specs if p.kind == "scheme"}
    consts = {p.name: float(values[p.name]) for p in specs if p.kind == "lattice"}
    return scheme, consts


def _finite(v):
    return math.isfinite(v)


def _pos(v):
    return math.isfinite(v) and v > 0


# ---------------------------------------------------------------------------
# Heat equation family


_HEAT_RHS = "(u[1,0]-2*u[0,0]+u[-1,0])"
_HEAT_ORACLES = (("P1", "1", "0", "0"), ("P0", "0", "1", "0"), ("W", "0", "0", "u"))
_DILATION = ("D", "x", "2*t", "0")
_HEAT_SLICE = ("1", "x", "x^2+2*t")


_HEAT_LIMIT_TARGET = {"u_t": 1.0, "u_xx": -1.0}


_HEAT_FIXED = (
    Param("h1", 1.0, _pos, "h1 > 0"),
    Param("h2", 1.0, _pos, "h2 > 0"),
    Param("x0", 0.0, _finite, kind="lattice"),
    Param("t0", 0.0, _finite, kind="lattice"),
)


def _heat_fixed(values):
    params, consts = _split(values, _HEAT_FIXED)
    s = Scheme(
        "heat_fixed",
        (
            "x[1,0]-x[0,0]-h1",
            "t[1,0]-t[0,0]",
            "x[0,1]-x[0,0]",
            "t[0,1]-t[0,0]-h2",
            f"(u[0,1]-u[0,0])/h2-{_HEAT_RHS}/h1^2",
        ),
        params,
        seed_sites=("x[0,0]", "t[0,0]"),
    )
    return CatalogEntry(
        "heat_fixed", s, params, consts, _HEAT_ORACLES, _HEAT_SLICE,
        non_symmetries=(_DILATION,),
        expected_dimension=6, expected_finite=3,
        closed_form=lambda m, n, c: (params["h1"] * m + c["x0"], params["h2"] * n + c["t0"]),
        u_initial="0.5*cos(0.3*x)+0.2",
        limit={"scaling": lambda eps: {"h1": eps, "h2": eps}, "target": _HEAT_LIMIT_TARGET, "leading": "u_t"},
    )


_register("heat_fixed", _HEAT_FIXED, _heat_fixed)


_DIL5 = (
    Param("hx", 1.0, _pos, "hx > 0", kind="lattice"),
    Param("ht", 0.25, _pos, "ht > 0", kind="lattice"),
    Param("x0", 0.0, _finite, kind="lattice"),
    Param("t0", 0.0, _finite, kind="lattice"),
)


def _heat_dilation5(values):
    params, consts = _split(values, _DIL5)
    s = Scheme(
        "heat_dilation5",
        (
            "x[1,0]-2*x[0,0]+x[-1,0]",
            "t[1,0]-t[0,0]",
            "x[0,1]-x[0,0]",
            "t[0,1]-2*t[0,0]+t[0,-1]",
            f"(u[0,1]-u[0,0])/(t[0,1]-t[0,0])-{_HEAT_RHS}/(x[1,0]-x[0,0])^2",
        ),
        params,
        seed_sites=("x[0,0]", "x[1,0]", "t[0,-1]", "t[0,0]"),
    )
    return CatalogEntry(
        "heat_dilation5", s, params, consts, _HEAT_ORACLES + (_DILATION,), _HEAT_SLICE,
        expected_dimension=7, expected_finite=4,
        closed_form=lambda m, n, c: (c["hx"] * m + c["x0"], c["ht"] * n + c["t0"]),
        u_initial="0.5*cos(0.3*x)+0.2",
        limit={"scaling": lambda eps: {"hx": eps, "ht": eps * eps}, "target": _HEAT_LIMIT_TARGET, "leading": "u_t"},
    )


_register("heat_dilation5", _DIL5, _heat_dilation5)


_FOUR_POINT_LATTICE = (
    "x[1,0]-2*x[0,0]+x[-1,0]",
    "t[1,0]-t[0,0]",
    "x[0,1]-x[0,0]",
    "t[0,1]-t[0,0]-c*(x[1,0]-x[0,0])^2",
)

_DIL4 = (
    Param("c", 0.25, _pos, "c > 0"),
    Param("hx", 1.0, _pos, "hx > 0", kind="lattice"),
    Param("x0", 0.0, _finite, kind="lattice"),
    Param("t0", 0.0, _finite, kind="lattice"),
)


def _four_point(c):
    return lambda m, n, k: (k["hx"] * m + k["x0"], c * k["hx"] ** 2 * n + k["t0"])


def _heat_dilation4(values):
    params, consts = _split(values, _DIL4)
    s = Scheme(
        "heat_dilation4",
        _FOUR_POINT_LATTICE + (f"u[0,1]-u[0,0]-c*{_HEAT_RHS}",),
        params,
        seed_sites=("x[0,0]", "x[1,0]", "t[0,0]"),
    )
    return CatalogEntry(
        "heat_dilation4", s, params, consts, _HEAT_ORACLES + (_DILATION,), _HEAT_SLICE,
        expected_dimension=7, expected_finite=4,
        closed_form=_four_point(params["c"]),
        u_initial="0.5*cos(0.3*x)+0.2",
        limit={"scaling": lambda eps: {"hx": eps}, "target": _HEAT_LIMIT_TARGET, "leading": "u_t"},
    )


_register("heat_dilation4", _DIL4, _heat_dilation4)


_EXPO = (
    Param("c", 0.1, lambda v: math.isfinite(v) and v > -1 and v != 0, "c > -1, c != 0"),
    Param("h", 1.0, _pos, "h > 0"),
    Param("alpha", 2.0, lambda v: math.isfinite(v) and v != 0, "alpha != 0", kind="lattice"),
    Param("beta", 0.0, _finite, kind="lattice"),
    Param("t0", 0.0, _finite, kind="lattice"),
)


def _heat_exponential(values):
    params, consts = _split(values, _EXPO)
    c, h = params["c"], params["h"]
    s = Scheme(
        "heat_exponential",
        (
            "x[1,0]-2*x[0,0]+x[-1,0]",
            "x[0,1]-(1+c)*x[0,0]",
            "t[0,1]-t[0,0]-h",
            "t[1,0]-t[0,0]",
            f"(u[0,1]-u[0,0])/h-{_HEAT_RHS}/(x[1,0]-x[0,0])^2",
        ),
        params,
        seed_sites=("x[0,0]", "x[1,0]", "t[0,0]"),
    )
    growth = "(1+c)^(t/h)"
    return CatalogEntry(
        "heat_exponential", s, params, consts,
        (("P1", growth, "0", "0"), ("P0", "0", "1", "0"), ("W", "0", "0", "u")),
        ("1",),
        non_symmetries=(("Dx", "x", "0", "0"),),
        expected_dimension=4, expected_finite=3,
        extra_basis=(growth,),
        closed_form=lambda m, n, k: ((1 + c) ** n * (k["alpha"] * m + k["beta"]), h * n + k["t0"]),
        u_initial="0.5*cos(0.3*x)+0.2",
    )


_register("heat_exponential", _EXPO, _heat_exponential)


_GALILEI = (
    Param("tau1", 1.0, _pos, "tau1 > 0", aliases=("τ1",)),
    Param("tau2", 0.5, _pos, "tau2 > 0", aliases=("τ2",)),
    Param("zeta", 1.0, lambda v: math.isfinite(v) and v != 0, "zeta != 0", aliases=("ζ",)),
    Param("sigma", 1.0, _finite, kind="lattice", aliases=("σ",)),
    Param("x0", 0.0, _finite, kind="lattice"),
    Param("t0", 0.0, _finite, kind="lattice"),
)


def galilei_lattice(m, n, tau1, tau2, zeta, sigma, x0=0.0, t0=0.0):
    """Closed-form lattice: t linear in (m, n), x with the drift fixed by zeta."""
    t = tau1 * m + tau2 * n + t0
    x = sigma * tau1 * m + (sigma * tau1 * tau2 - zeta) / tau1 * n + x0
    return x, t


def galilei_is_orthogonal(tau1, tau2, zeta, sigma, tol=1e-12):
    """Coordinate lines cross at right angles."""
    return abs((sigma * sigma + 1) * tau1 * tau2 - sigma * zeta) <= tol * max(1.0, abs(sigma * zeta))


def galilei_is_aligned(tau1, tau2, zeta, sigma, tol=1e-12):
    """Lines of constant n run parallel to the x axis."""
    return abs(sigma * tau1 * tau2 - zeta) <= tol * max(1.0, abs(zeta))


def galilei_line_families(tau1, tau2, zeta, sigma):
    """Slopes ``dx/dt`` and offsets of the m = const and n = const lines.

    Returns two callables ``(t, index) -> x - x0`` with ``t`` measured from ``t0``.
    """
    fixed_m = lambda t, n: sigma * t - zeta / tau1 * n
    fixed_n = lambda t, m: (sigma * tau1 * tau2 - zeta) / (tau1 * tau2) * t + zeta / tau2 * m
    return fixed_m, fixed_n


def _heat_galilei(values):
    params, consts = _split(values, _GALILEI)
    p = params
    s = Scheme(
        "heat_galilei",
        (
            "t[1,0]-t[0,0]-tau1",
            "t[0,1]-t[0,0]-tau2",
            "x[1,0]-2*x[0,0]+x[-1,0]",
            "(x[1,0]-x[0,0])*tau2-(x[0,1]-x[0,0])*tau1-zeta",
            f"(u[0,1]-u[0,0])/tau2-tau2^2*{_HEAT_RHS}/zeta^2",
        ),
        params,
        solve_for=("x[1,0]", "t[1,0]", "x[0,1]", "t[0,1]", "u[0,1]"),
        seed_sites=("x[0,0]", "x[1,0]", "t[0,0]"),
    )
    sigma = consts["sigma"]
    return CatalogEntry(
        "heat_galilei", s, params, consts,
        (("P0", "0", "1", "0"), ("P1", "1", "0", "0"), ("B", "t", "0", "0"), ("W", "0", "0", "u")),
        ("1",),
        non_symmetries=(_DILATION,),
        expected_finite=4,
        closed_form=lambda m, n, k: galilei_lattice(m, n, p["tau1"], p["tau2"], p["zeta"], k["sigma"], k["x0"], k["t0"]),
        u_initial="0.5*cos(0.3*x)+0.2",
        limit={
            "scaling": lambda eps: {"tau1": eps, "tau2": eps, "zeta": sigma * eps * eps},
            "target": {"u_t": 1.0, "u_xx": -1.0, "u_xt": -2.0 / sigma, "u_tt": -1.0 / sigma ** 2},
            "leading": "u_t",
        },
        predicates={
            "orthogonal": lambda: galilei_is_orthogonal(p["tau1"], p["tau2"], p["zeta"], sigma),
            "aligned": lambda: galilei_is_aligned(p["tau1"], p["tau2"], p["zeta"], sigma),
        },
    )


_register("heat_galilei", _GALILEI, _heat_galilei)


# ---------------------------------------------------------------------------
# Light-cone schemes


_LORENTZ = (
    Param("f", "power", lambda v: v in ("power", "exp", "linear", "constant"),
          "power | exp | linear | constant", kind="choice"),
    Param("p", 3.0, lambda v: math.isfinite(v) and v not in (0.0, 1.0), "p != 0, 1"),
    Param("hx", 0.05, _pos, "hx > 0", kind="lattice"),
    Param("hy", 0.05, _pos, "hy > 0", kind="lattice"),
    Param("x0", 0.0, _finite, kind="lattice"),
    Param("y0", 0.0, _finite, kind="lattice"),
)

_INTERACTION = {"power": "u[0,0]^p", "exp": "exp(u[0,0])", "linear": "u[0,0]", "constant": "1"}
_LIMIT_TAG = {"power": "u^p", "exp": "e^u", "linear": "u", "constant": "1"}


def _lorentz(values):
    f = values["f"]
    params, consts = _split(values, _LORENTZ)
    if f != "power":
        params.pop("p")
    s = Scheme(
        f"lorentz_{f}",
        (
            "x[1,0]-2*x[0,0]+x[-1,0]",
            "x[0,1]-x[0,0]",
            "y[0,1]-2*y[0,0]+y[0,-1]",
            "y[1,0]-y[0,0]",
            f"(u[1,1]-u[0,1]-u[1,0]+u[0,0])/((x[1,0]-x[0,0])*(y[0,1]-y[0,0]))-{_INTERACTION[f]}",
        ),
        params,
        coords=("x", "y"),
        solve_for=("x[1,0]", "y[1,0]", "x[0,1]", "y[0,1]", "u[1,1]"),
        seed_sites=("x[0,0]", "x[1,0]", "y[0,0]", "y[0,1]"),
        u_seed="row+column",
    )
    oracles = [("X1", "1", "0", "0"), ("X2", "0", "1", "0"), ("L", "x", "-y", "0")]
    superposition = ()
    u_range = (-1.0, 1.0)
    admissible = None
    if f == "power":
        oracles.append(("D", "x", "y", "2/(1-p)*u"))
        expected = 4
        if params["p"] != round(params["p"]):
            u_range = (0.2, 1.5)
            admissible = lambda c: np.asarray(c.values[("u", 0, 0)]) > 0
    elif f == "exp":
        oracles.append(("D", "x", "y", "-2"))
        expected = 4
    elif f == "linear":
        oracles.append(("W", "0", "0", "u"))
        expected = 4
    else:
        oracles.append(("D", "x", "y", "2*u"))
        # rescales the homogeneous part around the particular solution xy
        oracles.append(("Wxy", "0", "0", "u-x*y"))
        superposition = ("1", "x", "x^2", "y", "y^2")
        expected = 10
    target = {"u_xt": 1.0, _LIMIT_TAG[f]: -1.0}
    return CatalogEntry(
        "lorentz", s, {**params, "f": f}, consts, tuple(oracles), superposition,
        expected_dimension=expected, expected_finite=5 if f == "constant" else 4,
        closed_form=lambda m, n, k: (k["hx"] * m + k["x0"], k["hy"] * n + k["y0"]),
        u_initial="0.2*sin(x)+0.1*cos(2*y)",
        u_range=u_range,
        admissible=admissible,
        limit={"scaling": lambda eps: {"hx": eps, "hy": eps}, "target": target, "leading": "u_xt"},
    )


_register("lorentz", _LORENTZ, _lorentz)


# ---------------------------------------------------------------------------
# Burgers equations on the four-point lattice


_BURGERS = (
    Param("c", 0.25, _pos, "c > 0"),
    Param("hx", 1.0, _pos, "hx > 0", kind="lattice"),
    Param("x0", 0.0, _finite, kind="lattice"),
    Param("t0", 0.0, _finite, kind="lattice"),
)


def _burgers_potential(values):
    params, consts = _split(values, _BURGERS)
    s = Scheme(
        "burgers_potential",
        _FOUR_POINT_LATTICE + (
            f"(u[0,1]-u[0,0])/(t[0,1]-t[0,0])-{_HEAT_RHS}/(x[1,0]-x[0,0])^2"
            "-((u[1,0]-u[0,0])/(x[1,0]-x[0,0]))^2",
        ),
        params,
        seed_sites=("x[0,0]", "x[1,0]", "t[0,0]"),
    )
    return CatalogEntry(
        "burgers_potential", s, params, consts,
        (("P1", "1", "0", "0"), ("P0", "0", "1", "0"), ("D", "x", "2*t", "0"), ("Wu", "0", "0", "1")),
        non_symmetries=(("W", "0", "0", "u"),),
        expected_dimension=4, expected_finite=3,
        closed_form=_four_point(params["c"]),
        u_initial="0.3*cos(0.3*x)",
        limit={"scaling": lambda eps: {"hx": eps}, "target": {"u_t": 1.0, "u_xx": -1.0, "(u_x)^2": -1.0},
               "leading": "u_t"},
    )


_register("burgers_potential", _BURGERS, _burgers_potential)


_LIN_BURGERS = (
    Param("c", 0.25, lambda v: math.isfinite(v) and v != 0, "c != 0"),
    Param("hx", 1.0, _pos, "hx > 0", kind="lattice"),
    Param("x0", 0.0, _finite, kind="lattice"),
    Param("t0", 0.0, _finite, kind="lattice"),
)

_HX = "(x[1,0]-x[0,0])"
_LIN_BURGERS_E5 = (
    f"u[0,1]-u[0,0]-c*(1+{_HX}*u[0,0])*(u[2,0]-2*u[1,0]+u[0,0]+{_HX}*u[1,0]*(u[2,0]-u[0,0]))"
    f"/(1+c*{_HX}*(u[1,0]-u[0,0]+{_HX}*u[0,0]*u[1,0]))"
)


def _linear_denominator(c):
    def ok(cfg):
        v = cfg.values
        hx = np.asarray(v[("x", 1, 0)]) - np.asarray(v[("x", 0, 0)])
        u0, u1 = np.asarray(v[("u", 0, 0)]), np.asarray(v[("u", 1, 0)])
        return np.abs(1 + c * hx * (u1 - u0 + hx * u0 * u1)) >= 0.1

    return ok


def _burgers_linearizable(values):
    params, consts = _split(values, _LIN_BURGERS)
    s = Scheme(
        "burgers_linearizable",
        _FOUR_POINT_LATTICE + (_LIN_BURGERS_E5,),
        params,
        solve_for=("x[1,0]", "t[1,0]", "x[0,1]", "t[0,1]", "u[0,1]"),
        seed_sites=("x[0,0]", "x[1,0]", "t[0,0]"),
    )
    return CatalogEntry(
        "burgers_linearizable", s, params, consts,
        (("P0", "0", "1", "0"), ("P1", "1", "0", "0"), ("D", "x", "2*t", "-u")),
        non_symmetries=(("W", "0", "0", "u"), ("Wu", "0", "0", "1")),
        expected_dimension=3, expected_finite=3,
        closed_form=_four_point(params["c"]),
        u_initial="0.3*cos(0.3*x)",
        admissible=_linear_denominator(params["c"]),
        limit={"scaling": lambda eps: {"hx": eps}, "target": {"u_t": 1.0, "u_xx": -1.0, "u*u_x": -2.0},
               "leading": "u_t"},
    )


_register("burgers_linearizable", _LIN_BURGERS, _burgers_linearizable)


# the eleven parameterizations exercised by the acceptance suite
STANDARD_RUNS = (
    ("heat_fixed", {}),
    ("heat_dilation5", {}),
    ("heat_dilation4", {}),
    ("heat_exponential", {}),
    ("heat_galilei", {}),
    ("lorentz", {"f": "power", "p": 3}),
    ("lorentz", {"f": "exp"}),
    ("lorentz", {"f": "linear"}),
    ("lorentz", {"f": "constant"}),
    ("burgers_potential", {}),
    ("burgers_linearizable", {}),
)


def run_label(id_, params):
    if not params:
        return id_
    return id_ + "[" + ",".join(f"{k}={v}" for k, v in params.items()) + "]"


def degenerate_lattice(entry: CatalogEntry, c):
    """Mask of configurations whose lattice cell is collapsed."""
    return np.abs(lattice_jacobian(entry.scheme, c)) < 1e-6
