"""Numerical symmetry finder.

The invariance condition ``pr X E_a = 0`` is linear in the ansatz
coefficients of ``X``.  Evaluating it at many random on-shell stencil
configurations gives an overdetermined homogeneous system ``M c = 0`` whose
nullspace is the symmetry algebra restricted to the ansatz.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import subspace_angles

from .errors import BasisError, SamplingError
from .lattice import (
    Scheme,
    StencilConfiguration,
    jacobian_nondegeneracy,
    lattice_jacobian,
    onshell_error,
    patch_u_count,
    sample_patches,
)
from .symmetry import AnsatzBasis, Field, VectorField, lie_bracket, project, prolonged_action, residual_gradients


@dataclass(frozen=True)
class FinderOptions:
    """Sampling and decomposition settings.

    ``samples=None`` means ``max(3 * coefficients, 100)``.  ``coord_ranges``
    bounds the free lattice data of both coordinates, ``u_range`` the free
    values of ``u``.
    """

    samples: int | None = None
    seed: int = 0
    coord_ranges: tuple = ((-5.0, 5.0), (-5.0, 5.0))
    u_range: tuple = (-2.0, 2.0)
    cutoff: float = 1e-8
    onshell_tol: float = 1e-10
    min_spacing: float = 0.1
    min_cell: float = 1e-6
    max_abs: float = 1e4
    coords_depend_on_u: bool = False
    holdout: int = 100
    sector_tol: float = 1e-10


@dataclass(frozen=True, eq=False)
class SymmetryBasis:
    """Fields spanning the ansatz-restricted symmetry algebra."""

    scheme: str
    basis: AnsatzBasis
    fields: tuple
    sectors: tuple
    singular_values: np.ndarray
    columns: tuple
    n_samples: int
    matrix_residual: float
    holdout_residual: float = float("nan")
    structure: np.ndarray | None = None
    closure_residual: float | None = None
    elapsed: float = 0.0

    @property
    def dimension(self):
        return len(self.fields)

    def sector(self, name):
        return [f for f, s in zip(self.fields, self.sectors) if s == name]

    @property
    def finite(self):
        return self.sector("finite")

    @property
    def superposition(self):
        return self.sector("superposition")

    def matrix(self, which=None):
        fields = self.fields if which is None else self.sector(which)
        if not fields:
            return np.zeros((3 * self.basis.size, 0))
        return np.column_stack([f.vector for f in fields])

    def containment_residual(self, v: Field, which=None):
        """Relative distance of ``v`` (projected into the basis) from the found span."""
        vec = project(v, self.basis).vector
        A = self.matrix(which)
        if A.shape[1] == 0:
            return 1.0
        coef, *_ = np.linalg.lstsq(A, vec, rcond=None)
        return float(np.linalg.norm(A @ coef - vec) / max(np.linalg.norm(vec), 1e-300))

    def principal_angles(self, other: "SymmetryBasis"):
        return subspace_angles(self.matrix(), other.matrix())

    def report(self):
        """Deterministic, JSON-ready summary."""
        out = {
            "scheme": self.scheme,
            "ansatz": self.basis.describe(),
            "coefficients": len(self.columns),
            "samples": self.n_samples,
            "dimension": self.dimension,
            "finite_dimension": len(self.finite),
            "superposition_dimension": len(self.superposition),
            "singular_values": [float(f"{v:.6e}") for v in self.singular_values],
            "fields": [{"sector": s, "field": f.to_text()} for f, s in zip(self.fields, self.sectors)],
            "matrix_residual": float(f"{self.matrix_residual:.3e}"),
            "holdout_residual": float(f"{self.holdout_residual:.3e}"),
            "sector_rule": "superposition = fields with xi = tau = 0 and phi independent of u",
        }
        if self.structure is not None:
            out["structure_constants"] = _structure_entries(self.structure)
            out["closure_residual"] = float(f"{self.closure_residual:.3e}")
        return out


def _structure_entries(C):
    entries = []
    n, K = C.shape[0], C.shape[2]
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(K):
                if abs(C[i, j, k]) > 1e-9:
                    entries.append([i, j, k, float(f"{C[i, j, k]:.10g}")])
    return entries


# ---------------------------------------------------------------------------
# Sampling


def sample_configurations(s: Scheme, count, rng, opts: FinderOptions, admissible=None):
    """Draw ``count`` random on-shell stencil configurations (batched).

    Free data: lattice values at the scheme's seed sites and ``u`` on the
    seed row (and column).  Degenerate or inadmissible draws are rejected;
    more than half rejected raises :class:`SamplingError`.
    """
    a, b = s.coords
    ranges = {a: opts.coord_ranges[0], b: opts.coord_ranges[1]}
    nu = patch_u_count(s)
    kept, drawn, accepted = [], 0, 0
    while accepted < count:
        batch = max(2 * (count - accepted), 16)
        lat = {key: rng.uniform(*ranges[key[0]], size=batch) for key in s.seed_sites}
        u = rng.uniform(*opts.u_range, size=(batch, nu))
        with np.errstate(all="ignore"):
            cfg, ok = sample_patches(s, lat, u)
            ok &= _acceptable(s, cfg, opts)
            if admissible is not None:
                ok &= np.asarray(admissible(cfg), dtype=bool)
        drawn += batch
        idx = np.flatnonzero(ok)[: count - accepted]
        kept.append(cfg.take(idx))
        accepted += len(idx)
        if drawn >= 64 and accepted < 0.5 * min(drawn, 2 * count):
            raise SamplingError(
                f"{s.name}: {drawn - accepted} of {drawn} draws rejected; widen the sampling ranges"
            )
    return StencilConfiguration({k: np.concatenate([c.values[k] for c in kept]) for k in kept[0].values})


def _acceptable(s, cfg, opts):
    v = cfg.values
    ok = np.ones(len(next(iter(v.values()))), dtype=bool)
    for arr in v.values():
        ok &= np.isfinite(arr) & (np.abs(arr) <= opts.max_abs)
    a = s.coords[0]
    pa = s.solve_for[0][1:]
    ok &= np.abs(v[(a, *pa)] - v[(a, 0, 0)]) >= opts.min_spacing
    ok &= np.abs(lattice_jacobian(s, cfg)) >= opts.min_cell
    idx = np.flatnonzero(ok)
    if len(idx):
        sub = cfg.take(idx)
        good = np.abs(jacobian_nondegeneracy(s, sub)) >= 1e-8
        good &= onshell_error(s, sub) <= opts.onshell_tol
        ok[idx] = good
    return ok


# ---------------------------------------------------------------------------
# Constraint matrix


def column_layout(basis: AnsatzBasis, coords_depend_on_u=False):
    """Active ``(component, basis index)`` pairs; xi and tau are u-free by default."""
    free = basis.u_free()
    cols = []
    for comp in range(3):
        for k in range(basis.size):
            if comp < 2 and not coords_depend_on_u and not free[k]:
                continue
            cols.append((comp, k))
    return tuple(cols)


def constraint_matrix(s: Scheme, basis: AnsatzBasis, cfg: StencilConfiguration, columns):
    """Rows ``(sample, a)``, columns the active coefficients."""
    grads = residual_gradients(s, cfg)
    a_name, b_name = s.coords
    S = cfg.batch_size
    values = cfg.values
    B = {}
    for i, j in s.points:
        B[(i, j)] = basis.matrix(values[(a_name, i, j)], values[(b_name, i, j)], values[("u", i, j)])
    K = basis.size
    full = np.zeros((S, 5, 3 * K))
    for a, g in enumerate(grads):
        for (var, i, j), d in g.items():
            comp = 0 if var == a_name else 1 if var == b_name else 2
            d = np.broadcast_to(np.asarray(d, dtype=float), (S,))
            full[:, a, comp * K:(comp + 1) * K] += d[:, None] * B[(i, j)]
    idx = [comp * K + k for comp, k in columns]
    return full[:, :, idx].reshape(S * 5, len(idx))


def rref(A, tol=1e-9):
    """Reduced row echelon form with partial pivoting; returns rows and pivot columns."""
    A = np.array(A, dtype=float)
    if A.size == 0:
        return A, []
    scale = np.max(np.abs(A))
    rows, cols = A.shape
    r, pivots = 0, []
    for j in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(A[r:, j])))
        if abs(A[p, j]) <= tol * scale:
            continue
        A[[r, p]] = A[[p, r]]
        A[r] /= A[r, j]
        for q in range(rows):
            if q != r and A[q, j] != 0.0:
                A[q] -= A[q, j] * A[r]
        pivots.append(j)
        r += 1
    return A[:r], pivots


def _clean_rows(A, rel=1e-10):
    A = np.array(A)
    for r in range(A.shape[0]):
        m = np.max(np.abs(A[r]))
        A[r, np.abs(A[r]) <= rel * m] = 0.0
    return A


def nullspace(M, cutoff):
    """Orthonormal nullspace of ``M`` (columns) with a relative singular value cutoff."""
    _, sv, Vt = np.linalg.svd(M, full_matrices=True)
    smax = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > cutoff * smax)) if smax > 0 else 0
    return Vt[rank:].T, sv


def split_sectors(vectors: np.ndarray, basis: AnsatzBasis, tol=1e-10):
    """Split a span (columns of ``vectors``) into finite and superposition parts.

    Superposition = the largest subspace with ``xi = tau = 0`` and ``phi``
    independent of ``u``; finite = its orthogonal complement in the span.
    Both are returned orthonormal, as column matrices.
    """
    if vectors.shape[1] == 0:
        return vectors, vectors
    Q, _ = np.linalg.qr(vectors)
    K = basis.size
    inside = np.zeros(3 * K, dtype=bool)
    inside[2 * K:] = basis.u_free()
    outside = Q[~inside]
    _, sv, Vt = np.linalg.svd(outside, full_matrices=True)
    rank = int(np.sum(sv > tol * max(1.0, sv[0] if sv.size else 0.0)))
    Z = Vt[rank:].T
    sup = Q @ Z
    fin = Q @ Vt[:rank].T
    return fin, sup


def find_symmetries(s: Scheme, basis: AnsatzBasis, opts: FinderOptions = FinderOptions(),
                    admissible=None, structure=True) -> SymmetryBasis:
    """Sample, assemble ``M``, take its nullspace and sparsify it."""
    t_start = time.perf_counter()
    if basis.coords != tuple(s.coords):
        raise BasisError(f"basis coordinates {basis.coords} do not match scheme coordinates {s.coords}")
    basis.check_independence()
    columns = column_layout(basis, opts.coords_depend_on_u)
    ncoef = len(columns)
    samples = opts.samples if opts.samples is not None else max(3 * ncoef, 100)
    if samples < ncoef + 5:
        raise ValueError(f"need at least {ncoef + 5} samples for {ncoef} coefficients, got {samples}")
    rng = np.random.default_rng(opts.seed)
    cfg = sample_configurations(s, samples, rng, opts, admissible)
    M = constraint_matrix(s, basis, cfg, columns)
    rn = np.linalg.norm(M, axis=1)
    M = M[rn > 0] / rn[rn > 0, None]
    cn = np.linalg.norm(M, axis=0)
    # a column that is rounding noise belongs to an exact symmetry; equilibrating it would amplify the noise
    dead = cn <= 1e-12 * np.max(cn)
    M[:, dead] = 0.0
    cn[dead] = 1.0
    Meq = M / cn
    Y, sv = nullspace(Meq, opts.cutoff)
    C = Y / cn[:, None]
    K = basis.size
    full = np.zeros((3 * K, C.shape[1]))
    idx = [comp * K + k for comp, k in columns]
    full[idx] = C
    fin, sup = split_sectors(full, basis, opts.sector_tol)
    fields, sectors = [], []
    for mat, name in ((fin, "finite"), (sup, "superposition")):
        if mat.shape[1] == 0:
            continue
        rows, _ = rref(mat.T)
        rows = _clean_rows(rows)
        for r in rows:
            fields.append(VectorField.from_vector(basis, r))
            sectors.append(name)
    # residual of each member against the equilibrated matrix
    mres = 0.0
    Mnorm = np.linalg.norm(Meq, 2)
    for f in fields:
        y = f.vector[idx] * cn
        mres = max(mres, float(np.linalg.norm(Meq @ y) / (Mnorm * np.linalg.norm(y))))
    result = SymmetryBasis(s.name, basis, tuple(fields), tuple(sectors), sv, columns, samples, mres)
    if opts.holdout:
        hold = sample_configurations(s, opts.holdout, np.random.default_rng(opts.seed + 1), opts, admissible)
        worst = 0.0
        for f in fields:
            worst = max(worst, float(np.max(np.abs(prolonged_action(f, s, hold)))))
        result = replace(result, holdout_residual=worst)
    if structure and result.finite:
        C3, res = structure_constants(result.finite, result.fields)
        result = replace(result, structure=C3, closure_residual=res)
    return replace(result, elapsed=time.perf_counter() - t_start)


def structure_constants(fields, span=None):
    """``[X_i, X_j] = sum_k C[i, j, k] Y_k`` by least squares.

    ``span`` (default ``fields``) lists the ``Y_k``; pass the whole algebra
    when ``fields`` is a sector that only closes modulo an ideal.  Returns
    ``C`` and the worst residual relative to ``|X_i| |X_j|``.
    """
    span = list(fields) if span is None else list(span)
    n, K = len(fields), len(span)
    A = np.column_stack([f.vector for f in span])
    C = np.zeros((n, n, K))
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            br = lie_bracket(fields[i], fields[j])
            coef, *_ = np.linalg.lstsq(A, br.vector, rcond=None)
            r = np.linalg.norm(A @ coef - br.vector) / max(fields[i].norm() * fields[j].norm(), 1e-300)
            worst = max(worst, float(r))
            coef[np.abs(coef) < 1e-12] = 0.0
            C[i, j] = coef
            C[j, i] = -coef
    return C, worst


def find_for_entry(entry, opts: FinderOptions | None = None, basis: AnsatzBasis | None = None, **kw):
    """Run the finder with an entry's reference ansatz, ranges and admissibility rule."""
    opts = opts or FinderOptions()
    if opts.u_range == FinderOptions.u_range and entry.u_range != FinderOptions.u_range:
        opts = replace(opts, u_range=entry.u_range)
    basis = basis or entry.reference_basis()
    return find_symmetries(entry.scheme, basis, opts, entry.admissible, **kw)
