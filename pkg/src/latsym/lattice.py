"""Difference schemes on transforming lattices.

A scheme is five residual expressions ``E_a`` over grid references
``var[i, j]`` (offsets relative to the reference point ``(m, n)``).  Four of
them fix the lattice, one is the difference equation.  This module evaluates
residuals and the Jacobian nondegeneracy determinant, solves a single stencil
for its designated unknowns, and propagates solutions over index windows.

Propagation is driven by a *plan*: sweeping placements in n-major order, the
planner repeatedly picks the smallest group of equations at one placement
whose not-yet-known references form a square, structurally nonsingular block.
Each block is then solved by damped Newton.  The same machinery fills whole
grids and samples random on-shell stencil patches.
"""

from __future__ import annotations

import configparser
import csv
import itertools
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from .dsl import Dual, Expression, Ref, parse_expression, real_part, value_and_grad
from .errors import (
    ConvergenceError,
    InsufficientSeedError,
    PropagationError,
    SchemeError,
    SingularJacobianError,
)

ONSHELL_TOL = 1e-12
JACOBIAN_MIN = 1e-8
MAX_NEWTON = 50
MAX_HALVINGS = 20


def _key_text(key):
    var, i, j = key
    return f"{var}[{i},{j}]"


@dataclass(frozen=True, eq=False)
class Scheme:
    """Five residuals on a stencil plus everything needed to solve and seed them.

    ``seed_sites`` lists the lattice quantities (relative to the reference
    placement) that are free data for propagation; ``u_seed`` is ``"row"`` when
    one row of ``u`` values is enough, ``"row+column"`` for characteristic
    (hyperbolic) schemes.
    """

    name: str
    residuals: tuple
    params: Mapping = field(default_factory=dict)
    solve_for: tuple = ()
    coords: tuple = ("x", "t")
    pde_index: int = 4
    seed_sites: tuple = ()
    u_seed: str = "row"
    bounds: tuple | None = None

    def __post_init__(self):
        res = tuple(parse_expression(r) if isinstance(r, str) else r for r in self.residuals)
        if len(res) != 5:
            raise SchemeError(f"{self.name}: a scheme needs exactly five residuals, got {len(res)}")
        object.__setattr__(self, "residuals", res)
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        variables = set(self.coords) | {"u"}
        refs = set().union(*(e.refs for e in res))
        bad = sorted(k for k in refs if k[0] not in variables)
        if bad:
            raise SchemeError(f"{self.name}: references {', '.join(map(_key_text, bad))} use unknown variables")
        offs = [(i, j) for _, i, j in refs]
        inferred = (
            max(0, -min(i for i, _ in offs)),
            max(0, max(i for i, _ in offs)),
            max(0, -min(j for _, j in offs)),
            max(0, max(j for _, j in offs)),
        )
        if self.bounds is None:
            object.__setattr__(self, "bounds", inferred)
        else:
            i1, i2, j1, j2 = self.bounds
            if any(not (-i1 <= i <= i2 and -j1 <= j <= j2) for i, j in offs):
                raise SchemeError(f"{self.name}: residual offsets exceed the declared stencil bounds {self.bounds}")
        solve_for = tuple(_as_key(k) for k in self.solve_for) or self.default_solve_for()
        if len(set(solve_for)) != 5:
            raise SchemeError(f"{self.name}: need five distinct solve-for unknowns")
        missing = [k for k in solve_for if k not in refs]
        if missing:
            raise SchemeError(f"{self.name}: solve-for unknowns {', '.join(map(_key_text, missing))} do not occur in the residuals")
        object.__setattr__(self, "solve_for", solve_for)
        object.__setattr__(self, "seed_sites", tuple(_as_key(k) for k in self.seed_sites))
        if self.u_seed not in ("row", "row+column"):
            raise SchemeError(f"{self.name}: u_seed must be 'row' or 'row+column'")

    def default_solve_for(self):
        i1, i2, j1, j2 = self.bounds
        a, b = self.coords
        refs = self.refs
        top = ("u", 0, j2) if ("u", 0, j2) in refs else ("u", i2, j2)
        return ((a, 1, 0), (b, 1, 0), (a, 0, 1), (b, 0, 1), top)

    @property
    def variables(self):
        return (self.coords[0], self.coords[1], "u")

    @property
    def refs(self):
        return frozenset().union(*(e.refs for e in self.residuals))

    @property
    def points(self):
        """Stencil points, i.e. every offset at which some quantity is referenced."""
        return tuple(sorted({(i, j) for _, i, j in self.refs}))

    @property
    def stencil_keys(self):
        return tuple((v, i, j) for i, j in self.points for v in self.variables)

    def with_params(self, **params):
        merged = dict(self.params)
        merged.update(params)
        return Scheme(
            self.name, self.residuals, merged, self.solve_for, self.coords,
            self.pde_index, self.seed_sites, self.u_seed, self.bounds,
        )


def _as_key(k):
    if isinstance(k, str):
        node = parse_expression(k).root
        if not isinstance(node, Ref):
            raise SchemeError(f"{k!r} is not a grid reference")
        return node.key
    return tuple(k)


@dataclass(frozen=True, eq=False)
class StencilConfiguration:
    """Values of every stencil quantity; entries may be arrays for batches."""

    values: Mapping

    def __post_init__(self):
        object.__setattr__(self, "values", MappingProxyType(dict(self.values)))

    def point(self, i, j, variables=("x", "t", "u")):
        return tuple(self.values[(v, i, j)] for v in variables)

    def __getitem__(self, key):
        return self.values[_as_key(key)]

    @property
    def batch_size(self):
        for v in self.values.values():
            if np.ndim(v):
                return len(v)
        return None

    def take(self, index):
        return StencilConfiguration({k: np.asarray(v)[index] for k, v in self.values.items()})


def _env(s: Scheme, c):
    values = dict(s.params)
    values.update(c.values if isinstance(c, StencilConfiguration) else c)
    return values


def _batch_shape(values):
    shapes = [np.shape(v) for v in values.values() if not isinstance(v, str)]
    return np.broadcast_shapes(*shapes) if shapes else ()


def residuals(s: Scheme, c) -> np.ndarray:
    """``(E_1, ..., E_5)`` at a configuration (stacked along axis 0 for batches)."""
    env = _env(s, c)
    shape = _batch_shape(c.values if isinstance(c, StencilConfiguration) else c)
    return np.array([np.broadcast_to(np.asarray(e(env), dtype=float), shape) for e in s.residuals])


def residual_jacobian(s: Scheme, c, keys) -> np.ndarray:
    """Matrix ``dE_a/dk``; shape ``(5, len(keys))``, or ``(S, 5, len(keys))`` for batches."""
    keys = [_as_key(k) for k in keys]
    shape = _batch_shape(c.values if isinstance(c, StencilConfiguration) else c)
    J = np.zeros(shape + (5, len(keys)))
    for a, e in enumerate(s.residuals):
        _, grads = value_and_grad(e, _env(s, c), keys)
        for b, g in enumerate(grads):
            J[..., a, b] = g
    return J


def onshell_error(s: Scheme, c) -> np.ndarray:
    """``max_a |E_a| / (1 + sum_k |dE_a/dv_k * v_k|)``, per configuration."""
    env = _env(s, c)
    worst = 0.0
    for e in s.residuals:
        keys = sorted(e.refs)
        plain = [env[k] for k in keys]
        val, grads = value_and_grad(e, dict(env), keys)
        scale = 1.0
        for g, v in zip(grads, plain):
            scale = scale + np.abs(g * v)
        worst = np.maximum(worst, np.abs(val) / scale)
    return worst


def jacobian_nondegeneracy(s: Scheme, c) -> float:
    """Determinant of ``d(E_1..E_5)/d(solve-for unknowns)``."""
    return np.linalg.det(residual_jacobian(s, c, s.solve_for))


def lattice_jacobian(s: Scheme, c):
    """Signed area of the lattice cell spanned from the reference point.

    Uses the points of the first and third solve-for unknowns (the
    ``m``-neighbour and ``n``-neighbour in the default ordering).
    """
    a, b = s.coords
    pa, pb = s.solve_for[0][1:], s.solve_for[2][1:]
    v = c.values if isinstance(c, StencilConfiguration) else c
    dxa = v[(a, *pa)] - v[(a, 0, 0)]
    dta = v[(b, *pa)] - v[(b, 0, 0)]
    dxb = v[(a, *pb)] - v[(a, 0, 0)]
    dtb = v[(b, *pb)] - v[(b, 0, 0)]
    return dxa * dtb - dxb * dta


# ---------------------------------------------------------------------------
# Damped Newton on small batched systems


def _newton(system, x0, tol=ONSHELL_TOL, mask_failures=False):
    """Solve ``system(x) -> (r, J, scale)`` for a batch.

    ``x0`` has shape ``(S, k)``; ``r`` and ``scale`` ``(S, m)``; ``J``
    ``(S, m, k)`` with ``m == k``.  Returns ``(x, ok)``.
    """
    x = np.array(x0, dtype=float)
    S, k = x.shape
    ok = np.ones(S, dtype=bool)
    done = np.zeros(S, dtype=bool)
    r, J, scale = system(x)
    for _ in range(MAX_NEWTON):
        conv = np.all(np.abs(r) <= tol * (1.0 + scale), axis=1)
        done |= conv
        active = ~done & ok
        if not active.any():
            break
        Ja = J[active]
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(Ja)
        singular = ~np.isfinite(cond) | (cond > 1e14)
        if singular.any():
            idx = np.flatnonzero(active)[singular]
            if not mask_failures:
                raise SingularJacobianError("Newton block Jacobian is singular")
            ok[idx] = False
            x[idx] = np.nan
            active = ~done & ok
            if not active.any():
                break
            Ja = J[active]
        step = np.linalg.solve(Ja, -r[active][..., None])[..., 0]
        norm0 = np.linalg.norm(r[active], axis=1)
        lam = np.ones(len(step))
        xa = x[active]
        accepted = np.zeros(len(step), dtype=bool)
        trial = xa.copy()
        for _ in range(MAX_HALVINGS + 1):
            todo = ~accepted
            trial[todo] = xa[todo] + lam[todo, None] * step[todo]
            full = x.copy()
            full[active] = trial
            rt, Jt, st = system(full)
            better = np.linalg.norm(rt[active], axis=1) < norm0
            better |= np.all(np.abs(rt[active]) <= tol * (1.0 + st[active]), axis=1)
            accepted |= better & todo
            if accepted.all():
                break
            lam[~accepted] *= 0.5
        stalled = np.flatnonzero(active)[~accepted]
        # a stalled iterate sits on the rounding floor or the method failed
        if len(stalled):
            loose = np.all(np.abs(r[stalled]) <= 1e-10 * (1.0 + scale[stalled]), axis=1)
            done[stalled[loose]] = True
            bad = stalled[~loose]
            if len(bad):
                if not mask_failures:
                    raise ConvergenceError("damped Newton stalled without reducing the residual")
                ok[bad] = False
        keep = np.flatnonzero(active)[accepted]
        x[keep] = trial[accepted]
        r, J, scale = system(x)
    else:
        conv = np.all(np.abs(r) <= tol * (1.0 + scale), axis=1)
        if not (conv | ~ok).all():
            if not mask_failures:
                raise ConvergenceError(f"Newton failed to converge in {MAX_NEWTON} iterations")
            ok &= conv
    # one polishing step pushes converged iterates down to the rounding floor
    live = np.flatnonzero(ok & np.all(np.isfinite(x), axis=1))
    if len(live):
        with np.errstate(all="ignore"):
            try:
                step = np.linalg.solve(J[live], -r[live][..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = np.full((len(live), k), np.nan)
        trial = x.copy()
        good = np.all(np.isfinite(step), axis=1)
        trial[live[good]] = x[live[good]] + step[good]
        rt, Jt, st = system(trial)
        better = np.linalg.norm(rt[live], axis=1) <= np.linalg.norm(r[live], axis=1)
        better &= good
        x[live[better]] = trial[live[better]]
        r[live[better]] = rt[live[better]]
        scale[live[better]] = st[live[better]]
    final = np.all(np.abs(r) <= tol * (1.0 + scale), axis=1) | done
    if not mask_failures and not final[ok].all():
        raise ConvergenceError(f"Newton failed to converge in {MAX_NEWTON} iterations")
    ok &= final & np.all(np.isfinite(x), axis=1)
    return x, ok


def _block_system(exprs, local_maps, unknowns, values, params):
    """Closure evaluating residuals of ``exprs`` in the absolute unknowns."""
    all_keys = [sorted(m.keys()) for m in local_maps]

    def system(x):
        for idx, key in enumerate(unknowns):
            values[key] = x[:, idx]
        S = x.shape[0]
        r = np.empty((S, len(exprs)))
        J = np.empty((S, len(exprs), len(unknowns)))
        scale = np.empty((S, len(exprs)))
        for a, (e, lmap, keys) in enumerate(zip(exprs, local_maps, all_keys)):
            env = dict(params)
            for rel in keys:
                env[rel] = values[lmap[rel]]
            plain = [env[rel] for rel in keys]
            val, grads = value_and_grad(e, env, keys)
            r[:, a] = val
            sc = np.zeros(S)
            for rel, g, v in zip(keys, grads, plain):
                sc += np.abs(g * v)
            scale[:, a] = sc
            for b, key in enumerate(unknowns):
                tot = 0.0
                for rel, g in zip(keys, grads):
                    if lmap[rel] == key:
                        tot = tot + g
                J[:, a, b] = tot
        return r, J, scale

    return system


def solve_on_shell(s: Scheme, free, guess=None) -> StencilConfiguration:
    """Complete a stencil by solving the five residuals for the solve-for unknowns.

    ``free`` binds every stencil quantity except the unknowns (floats or
    equal-length arrays).  Raises :class:`SingularJacobianError` when the
    solution is degenerate in the sense of the Jacobian condition or the
    lattice cell collapses.
    """
    free = dict(free.values if isinstance(free, StencilConfiguration) else free)
    free = {_as_key(k): v for k, v in free.items()}
    overlap = [k for k in s.solve_for if k in free]
    if overlap:
        raise SchemeError(f"free data binds solve-for unknowns {', '.join(map(_key_text, overlap))}")
    needed = s.refs - set(s.solve_for)
    missing = sorted(k for k in needed if k not in free)
    if missing:
        raise InsufficientSeedError(f"free data misses {', '.join(map(_key_text, missing))}", missing)
    scalar = all(np.ndim(v) == 0 for v in free.values())
    values = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in free.items()}
    S = max(len(v) for v in values.values())
    values = {k: np.broadcast_to(v, (S,)).copy() for k, v in values.items()}
    if guess is None:
        x0 = np.array([[_guess(values, k, S)[q] for k in s.solve_for] for q in range(S)])
    else:
        x0 = np.broadcast_to(np.asarray(guess, dtype=float), (S, 5)).copy()
    identity = [{k: k for k in e.refs} for e in s.residuals]
    system = _block_system(list(s.residuals), identity, list(s.solve_for), values, s.params)
    x, _ = _newton(system, x0)
    for idx, k in enumerate(s.solve_for):
        values[k] = x[:, idx]
    config = StencilConfiguration({k: (v[0] if scalar else v) for k, v in values.items()})
    det = np.atleast_1d(jacobian_nondegeneracy(s, config))
    cell = np.atleast_1d(lattice_jacobian(s, config)) if _has_cell(s, config) else np.ones(1)
    if np.any(np.abs(det) < JACOBIAN_MIN) or np.any(np.abs(cell) < JACOBIAN_MIN):
        raise SingularJacobianError(
            f"{s.name}: degenerate solution (|J| = {np.min(np.abs(det)):.3g}, lattice cell = {np.min(np.abs(cell)):.3g})"
        )
    return config


def _has_cell(s, config):
    a, b = s.coords
    need = [(v, *p) for p in (s.solve_for[0][1:], s.solve_for[2][1:], (0, 0)) for v in (a, b)]
    return all(k in config.values for k in need)


def _guess(values, key, S):
    var, i, j = key
    for cand in ((var, 0, 0), (var, i - 1, j), (var, i, j - 1)):
        if cand in values:
            return values[cand]
    return np.zeros(S)


# ---------------------------------------------------------------------------
# Propagation plans


@dataclass(frozen=True)
class Window:
    m_lo: int
    m_hi: int
    n_lo: int
    n_hi: int

    def __contains__(self, key):
        _, m, n = key
        return self.m_lo <= m <= self.m_hi and self.n_lo <= n <= self.n_hi

    @property
    def shape(self):
        return (self.m_hi - self.m_lo + 1, self.n_hi - self.n_lo + 1)

    def sites(self, variables):
        return [(v, m, n) for n in range(self.n_lo, self.n_hi + 1)
                for m in range(self.m_lo, self.m_hi + 1) for v in variables]


@dataclass(frozen=True)
class Step:
    anchor: tuple
    equations: tuple
    unknowns: tuple


def _matchable(eq_unknowns, unknowns):
    for perm in itertools.permutations(unknowns):
        if all(u in us for u, us in zip(perm, eq_unknowns)):
            return True
    return False


def build_plan(s: Scheme, window: Window, known, targets=None, equations=None):
    """Ordered solve steps that determine as many window sites as possible."""
    known = set(known)
    eq_ids = range(5) if equations is None else equations
    rel = {a: sorted(s.residuals[a].refs) for a in eq_ids}
    i1, i2, j1, j2 = s.bounds
    targets = None if targets is None else set(targets)
    steps = []
    progress = True
    while progress:
        progress = False
        for n in range(window.n_lo - j2, window.n_hi + j1 + 1):
            for m in range(window.m_lo - i2, window.m_hi + i1 + 1):
                while True:
                    cands = []
                    for a in eq_ids:
                        absr = [(v, m + i, n + j) for v, i, j in rel[a]]
                        if not all(k in window for k in absr):
                            continue
                        unk = frozenset(k for k in absr if k not in known)
                        if 0 < len(unk) <= 5:
                            cands.append((a, unk))
                    block = _find_block(cands)
                    if block is None:
                        break
                    eqs, unk = block
                    steps.append(Step((m, n), eqs, tuple(sorted(unk, key=lambda k: (k[2], k[1], k[0])))))
                    known |= unk
                    progress = True
                if targets is not None and targets <= known:
                    return steps, known
    return steps, known


def _find_block(cands):
    for size in range(1, min(5, len(cands)) + 1):
        for combo in itertools.combinations(cands, size):
            unk = frozenset().union(*(u for _, u in combo))
            if len(unk) == size and _matchable([u for _, u in combo], list(unk)):
                return tuple(a for a, _ in combo), unk
    return None


def execute_plan(s: Scheme, steps, values, mask_failures=False):
    """Run plan steps on ``values`` (absolute key -> array of shape ``(S,)``)."""
    S = len(next(iter(values.values())))
    ok = np.ones(S, dtype=bool)
    for step in steps:
        m, n = step.anchor
        exprs = [s.residuals[a] for a in step.equations]
        lmaps = [{k: (k[0], m + k[1], n + k[2]) for k in e.refs} for e in exprs]
        x0 = np.column_stack([_nearest(values, key, S) for key in step.unknowns])
        system = _block_system(exprs, lmaps, list(step.unknowns), values, s.params)
        try:
            x, good = _newton(system, x0, mask_failures=mask_failures)
        except (SingularJacobianError, ConvergenceError) as exc:
            raise PropagationError(f"{s.name}: {exc}", site=step.anchor) from None
        for idx, key in enumerate(step.unknowns):
            values[key] = x[:, idx]
        ok &= good
    return ok


def _nearest(values, key, S):
    var, m, n = key
    for dm, dn in ((0, -1), (-1, 0), (1, 0), (0, 1), (0, -2), (-2, 0), (2, 0)):
        k = (var, m + dm, n + dn)
        if k in values and np.all(np.isfinite(values[k])):
            return values[k]
    return np.zeros(S)


# ---------------------------------------------------------------------------
# Grids


@dataclass(frozen=True, eq=False)
class GridSolution:
    """Values on ``[m_lo..m_hi] x [n_lo..n_hi]``; arrays are indexed ``[m - m_lo, n - n_lo]``."""

    m_lo: int
    n_lo: int
    x: np.ndarray
    t: np.ndarray
    u: np.ndarray
    coords: tuple = ("x", "t")
    tolerance: float = 1e-9

    @property
    def window(self):
        M, N = self.x.shape
        return Window(self.m_lo, self.m_lo + M - 1, self.n_lo, self.n_lo + N - 1)

    def array(self, var):
        if var == "u":
            return self.u
        return self.x if var == self.coords[0] else self.t

    def value(self, var, m, n):
        return self.array(var)[m - self.m_lo, n - self.n_lo]

    def stencil(self, s: Scheme, m, n) -> StencilConfiguration:
        return StencilConfiguration({(v, i, j): self.value(v, m + i, n + j) for v, i, j in s.stencil_keys})

    def replace(self, x=None, t=None, u=None):
        return GridSolution(self.m_lo, self.n_lo,
                            self.x if x is None else x, self.t if t is None else t,
                            self.u if u is None else u, self.coords, self.tolerance)

    def to_csv(self, path, include_u=True):
        a, b = self.coords
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "n", a, b] + (["u"] if include_u else []))
            M, N = self.x.shape
            for q in range(N):
                for p in range(M):
                    row = [self.m_lo + p, self.n_lo + q, repr(float(self.x[p, q])), repr(float(self.t[p, q]))]
                    if include_u:
                        row.append(repr(float(self.u[p, q])))
                    w.writerow(row)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[:2] != ["m", "n"] or len(header) < 4:
            raise ValueError(f"{path}: expected header m,n,<coord>,<coord>[,u]")
        ms = [int(r[0]) for r in body]
        ns = [int(r[1]) for r in body]
        m_lo, n_lo = min(ms), min(ns)
        shape = (max(ms) - m_lo + 1, max(ns) - n_lo + 1)
        arrs = [np.full(shape, np.nan) for _ in range(3)]
        for r in body:
            p, q = int(r[0]) - m_lo, int(r[1]) - n_lo
            for k in range(len(header) - 2):
                arrs[k][p, q] = float(r[2 + k])
        return cls(m_lo, n_lo, arrs[0], arrs[1], arrs[2], tuple(header[2:4]))


def grid_residuals(s: Scheme, g: GridSolution) -> np.ndarray:
    """Residuals at every interior placement, shape ``(5, M', N')``."""
    i1, i2, j1, j2 = s.bounds
    M, N = g.x.shape
    Mi, Ni = M - i1 - i2, N - j1 - j2
    if Mi <= 0 or Ni <= 0:
        return np.zeros((5, 0, 0))
    env = dict(s.params)
    for var, i, j in s.refs:
        env[(var, i, j)] = g.array(var)[i1 + i: i1 + i + Mi, j1 + j: j1 + j + Ni]
    return np.array([np.broadcast_to(e(env), (Mi, Ni)) for e in s.residuals])


@dataclass(frozen=True)
class SeedSpec:
    """Free data for :func:`propagate_grid`.

    ``lattice`` holds values of ``scheme.seed_sites`` (offsets relative to the
    absolute ``reference`` placement).  ``u`` gives the dependent variable on
    the first row (and first column for ``"row+column"`` schemes) as a
    function of ``(m, n, coord1, coord2)`` arrays.
    """

    lattice: Mapping
    u: Callable
    reference: tuple | None = None


def _working_window(s: Scheme, window: Window):
    if s.u_seed == "row+column":
        # characteristic data on a row and a column already fixes the quadrant
        return window
    i1, i2, j1, j2 = s.bounds
    rows = window.n_hi - window.n_lo
    left = rows * i1
    right = rows * i2
    return Window(window.m_lo - left, window.m_hi + right, window.n_lo, window.n_hi)


def propagate_grid(s: Scheme, seed, window: Window, extend=True) -> GridSolution:
    """Fill ``window`` from seed data by repeated local solves.

    ``seed`` is a :class:`SeedSpec` or an explicit mapping of absolute keys to
    values.  With ``extend`` the computation runs on a window widened in ``m``
    so that explicit schemes reach the target edges.
    """
    work = _working_window(s, window) if extend else window
    variables = s.variables
    if isinstance(seed, SeedSpec):
        i1, _, j1, _ = s.bounds
        ref = seed.reference or (window.m_lo + i1, window.n_lo + j1)
        values = {}
        for (v, i, j), val in seed.lattice.items():
            key = (v, ref[0] + i, ref[1] + j)
            if key not in work:
                raise InsufficientSeedError(f"seed site {_key_text((v, i, j))} falls outside the window")
            values[key] = np.array([float(val)])
        lattice_eqs = [a for a, e in enumerate(s.residuals) if not any(k[0] == "u" for k in e.refs)]
        steps, known = build_plan(s, work, values.keys(), equations=lattice_eqs)
        execute_plan(s, steps, values)
        useeds = [(m, work.n_lo) for m in range(work.m_lo, work.m_hi + 1)]
        if s.u_seed == "row+column":
            useeds += [(work.m_lo, n) for n in range(work.n_lo + 1, work.n_hi + 1)]
        a, b = s.coords
        for m, n in useeds:
            ka, kb = (a, m, n), (b, m, n)
            if ka not in values or kb not in values:
                raise InsufficientSeedError(f"lattice is undetermined at seed site (m, n) = {(m, n)}", [ka, kb])
            values[("u", m, n)] = np.atleast_1d(np.asarray(seed.u(m, n, values[ka][0], values[kb][0]), dtype=float))
    else:
        values = {tuple(k): np.atleast_1d(np.asarray(v, dtype=float)) for k, v in seed.items()}
    steps, known = build_plan(s, work, values.keys())
    execute_plan(s, steps, values)
    missing = [k for k in window.sites(variables) if k not in values]
    if missing:
        raise InsufficientSeedError(
            f"{s.name}: seed data leaves {len(missing)} site(s) undetermined, e.g. {_key_text(missing[0])}", missing
        )
    M, N = window.shape
    arrs = []
    for v in variables:
        arr = np.empty((M, N))
        for p in range(M):
            for q in range(N):
                arr[p, q] = values[(v, window.m_lo + p, window.n_lo + q)][0]
        arrs.append(arr)
    g = GridSolution(window.m_lo, window.n_lo, *arrs, coords=tuple(s.coords))
    res = grid_residuals(s, g)
    scale = 1.0 + np.max(np.abs(np.concatenate([a.ravel() for a in arrs])))
    worst = np.max(np.abs(res)) if res.size else 0.0
    tol = 1e-9 * scale
    if worst > tol:
        idx = np.unravel_index(np.argmax(np.abs(res)), res.shape)
        raise PropagationError(f"{s.name}: propagated grid is off-shell (|E| = {worst:.3g})",
                               site=(window.m_lo + s.bounds[0] + idx[1], window.n_lo + s.bounds[2] + idx[2]))
    return GridSolution(g.m_lo, g.n_lo, g.x, g.t, g.u, g.coords, float(max(worst, 1e-300)))


# ---------------------------------------------------------------------------
# Random on-shell stencil patches


def patch_window(s: Scheme) -> Window:
    i1, i2, j1, j2 = s.bounds
    rows = j1 + j2
    return Window(-i1 - rows * i1, i2 + rows * i2, -j1, j2)


@dataclass
class _PatchPlan:
    window: Window
    steps: list
    u_sites: list


_PLAN_CACHE: dict = {}


def _patch_plan(s: Scheme) -> _PatchPlan:
    cache_key = (id(s), s.name)
    hit = _PLAN_CACHE.get(cache_key)
    if hit is not None and hit[0] is s:
        return hit[1]
    w = patch_window(s)
    u_sites = [("u", m, w.n_lo) for m in range(w.m_lo, w.m_hi + 1)]
    if s.u_seed == "row+column":
        u_sites += [("u", w.m_lo, n) for n in range(w.n_lo + 1, w.n_hi + 1)]
    known = set(s.seed_sites) | set(u_sites)
    targets = set(s.stencil_keys)
    steps, got = build_plan(s, w, known, targets=targets)
    missing = sorted(targets - got)
    if missing:
        raise InsufficientSeedError(
            f"{s.name}: seed sites do not determine the stencil ({', '.join(map(_key_text, missing[:4]))} ...)", missing
        )
    plan = _PatchPlan(w, steps, u_sites)
    _PLAN_CACHE[cache_key] = (s, plan)
    return plan


def sample_patches(s: Scheme, lattice_values: Mapping, u_values: np.ndarray):
    """On-shell stencil configurations from batched free data.

    ``lattice_values`` maps each seed site to an ``(S,)`` array, ``u_values``
    has shape ``(S, len(u_sites))``.  Returns ``(config, ok)``.
    """
    plan = _patch_plan(s)
    values = {k: np.asarray(v, dtype=float).copy() for k, v in lattice_values.items()}
    for c, key in enumerate(plan.u_sites):
        values[key] = np.asarray(u_values[:, c], dtype=float).copy()
    with np.errstate(all="ignore"):
        ok = execute_plan(s, plan.steps, values, mask_failures=True)
    config = StencilConfiguration({k: values[k] for k in s.stencil_keys})
    return config, ok


def patch_u_count(s: Scheme) -> int:
    return len(_patch_plan(s).u_sites)


# ---------------------------------------------------------------------------
# Scheme files


def load_scheme_file(path) -> tuple[Scheme, dict]:
    """Read a scheme from an INI-style file.

    Sections: ``[scheme]`` (name, coords, pde), optional ``[stencil]``
    (i1, i2, j1, j2), ``[residuals]`` (E1..E5), ``[parameters]``,
    ``[solve_for]`` (unknowns), ``[seed]`` (sites, values, u, layout).
    Returns the scheme and a dict with the seed declaration.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    meta = cp["scheme"] if cp.has_section("scheme") else {}
    name = meta.get("name", str(path))
    coords = tuple(c.strip() for c in meta.get("coords", "x, t").split(","))
    pde = int(meta.get("pde", "5")) - 1
    if not cp.has_section("residuals"):
        raise SchemeError(f"{path}: missing [residuals] section")
    res = [cp["residuals"][k] for k in sorted(cp["residuals"], key=lambda k: int(k.lstrip("Ee")))]
    params = {k: float(v) for k, v in cp["parameters"].items()} if cp.has_section("parameters") else {}
    bounds = None
    if cp.has_section("stencil"):
        st = cp["stencil"]
        bounds = tuple(int(st[k]) for k in ("i1", "i2", "j1", "j2"))
    solve_for = ()
    if cp.has_section("solve_for"):
        solve_for = tuple(_split_refs(cp["solve_for"]["unknowns"]))
    seed = {}
    sites = ()
    layout = "row"
    if cp.has_section("seed"):
        sd = cp["seed"]
        sites = tuple(_split_refs(sd.get("sites", "")))
        vals = [float(v) for v in sd.get("values", "").split(",") if v.strip()]
        if len(vals) != len(sites):
            raise SchemeError(f"{path}: [seed] needs one value per site")
        seed = {"lattice": dict(zip(sites, vals)), "u": sd.get("u", "0")}
        layout = sd.get("layout", "row")
    s = Scheme(name, tuple(res), params, solve_for, coords, pde, sites, layout, bounds)
    return s, seed


def _split_refs(text):
    return [_as_key(p.strip()) for p in text.replace("],", "];").split(";") if p.strip()]
