import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latsym.catalog import STANDARD_RUNS, instantiate
from latsym.errors import DSLSyntaxError, InsufficientSeedError, SchemeError, SingularJacobianError
from latsym.finder import FinderOptions, sample_configurations
from latsym.lattice import (
    GridSolution,
    Scheme,
    StencilConfiguration,
    Window,
    grid_residuals,
    jacobian_nondegeneracy,
    lattice_jacobian,
    load_scheme_file,
    onshell_error,
    propagate_grid,
    residuals,
    solve_on_shell,
)

HEAT = (
    "x[1,0]-x[0,0]-h1",
    "t[1,0]-t[0,0]",
    "x[0,1]-x[0,0]",
    "t[0,1]-t[0,0]-h2",
    "(u[0,1]-u[0,0])/h2-(u[1,0]-2*u[0,0]+u[-1,0])/h1^2",
)


def heat(h1=1.0, h2=1.0):
    return Scheme("heat", HEAT, {"h1": h1, "h2": h2})


def exact_heat_stencil(s, m0=3, n0=2):
    h1, h2 = s.params["h1"], s.params["h2"]
    vals = {}
    for v, i, j in s.stencil_keys:
        x, t = h1 * (m0 + i), h2 * (n0 + j)
        vals[(v, i, j)] = {"x": x, "t": t, "u": x * x + 2 * t}[v]
    return StencilConfiguration(vals)


def test_heat_polynomial_is_on_shell():
    s = heat()
    c = exact_heat_stencil(s)
    np.testing.assert_array_equal(residuals(s, c), np.zeros(5))


def test_perturbing_next_row_moves_only_the_pde_residual():
    s = heat()
    c = exact_heat_stencil(s)
    vals = dict(c.values)
    vals[("u", 0, 1)] += 0.5
    r = residuals(s, StencilConfiguration(vals))
    np.testing.assert_allclose(r, [0, 0, 0, 0, 0.5], atol=1e-15)


@pytest.mark.parametrize("h2", [1.0, 0.25, 3.0])
def test_heat_jacobian_is_inverse_time_step(h2):
    s = heat(1.0, h2)
    det = jacobian_nondegeneracy(s, exact_heat_stencil(s))
    assert abs(det - 1.0 / h2) <= 1e-12


def test_unknown_absent_from_residuals_is_rejected():
    eqs = HEAT[:4] + ("(u[1,0]-2*u[0,0]+u[-1,0])/h1^2",)
    with pytest.raises(SchemeError):
        Scheme("singular", eqs, {"h1": 1.0, "h2": 1.0},
               solve_for=("x[1,0]", "t[1,0]", "x[0,1]", "t[0,1]", "u[0,1]"))


def test_pde_without_its_unknown_has_zero_determinant():
    eqs = HEAT[:4] + ("(u[1,0]-2*u[0,0]+u[-1,0])/h1^2 + 0*u[0,1]",)
    s = Scheme("flat", eqs, {"h1": 1.0, "h2": 1.0})
    assert jacobian_nondegeneracy(s, exact_heat_stencil(s)) == 0.0
    free = {("x", 0, 0): 0.0, ("t", 0, 0): 0.0, ("u", -1, 0): 1.0, ("u", 0, 0): 0.0, ("u", 1, 0): 1.0}
    with pytest.raises(SingularJacobianError):
        solve_on_shell(s, free)


def test_dilation4_collapsed_cell():
    e = instantiate("heat_dilation4")
    vals = {k: 0.0 for k in e.scheme.stencil_keys}
    vals[("t", 0, 1)] = 1.0
    assert lattice_jacobian(e.scheme, StencilConfiguration(vals)) == 0.0
    free = {("x", 0, 0): 0.0, ("t", 0, 0): 0.0, ("x", -1, 0): 0.0,
            ("u", -1, 0): 1.0, ("u", 0, 0): 0.0, ("u", 1, 0): 1.0}
    free = {k: v for k, v in free.items() if k not in e.scheme.solve_for}
    with pytest.raises(SingularJacobianError):
        solve_on_shell(e.scheme, free)


def test_jacobian_independent_of_binding_order():
    s = heat(1.0, 0.5)
    c = exact_heat_stencil(s)
    rev = StencilConfiguration(dict(reversed(list(c.values.items()))))
    assert jacobian_nondegeneracy(s, rev) == jacobian_nondegeneracy(s, c)


def test_solve_heat_stencil():
    s = heat()
    free = {("x", 0, 0): 0.0, ("t", 0, 0): 0.0, ("u", -1, 0): 1.0, ("u", 0, 0): 0.0, ("u", 1, 0): 1.0}
    c = solve_on_shell(s, free)
    got = [c[k] for k in s.solve_for]
    np.testing.assert_allclose(got, [1.0, 0.0, 0.0, 1.0, 2.0], atol=1e-13)


def test_dilation4_time_step_from_spacing():
    e = instantiate("heat_dilation4", {"c": 1.0})
    s = e.scheme
    free = {("x", 0, 0): 0.0, ("t", 0, 0): 0.0, ("x", -1, 0): -2.0,
            ("u", -1, 0): 0.1, ("u", 0, 0): 0.2, ("u", 1, 0): 0.3}
    free = {k: v for k, v in free.items() if k in s.refs and k not in s.solve_for}
    # x spacing of 2 is imposed through the second difference of x
    c = solve_on_shell(s, free, guess=[2.0, 0.0, 0.0, 4.0, 0.2])
    assert c[("x", 1, 0)] == pytest.approx(2.0, abs=1e-12)
    assert c[("t", 0, 1)] - c[("t", 0, 0)] == pytest.approx(4.0, abs=1e-12)


def test_missing_free_data():
    with pytest.raises(InsufficientSeedError):
        solve_on_shell(heat(), {("x", 0, 0): 0.0})


def test_scheme_validation():
    with pytest.raises(SchemeError):
        Scheme("four", HEAT[:4], {"h1": 1.0, "h2": 1.0})
    with pytest.raises(DSLSyntaxError):
        Scheme("unknown_var", HEAT[:4] + ("v[0,1]-u[0,0]",), {"h1": 1.0, "h2": 1.0})
    with pytest.raises(SchemeError):
        Scheme("wide", HEAT, {"h1": 1.0, "h2": 1.0}, bounds=(0, 1, 0, 1))
    with pytest.raises(SchemeError):
        Scheme("dup", HEAT, {"h1": 1.0, "h2": 1.0},
               solve_for=("x[1,0]", "x[1,0]", "x[0,1]", "t[0,1]", "u[0,1]"))


def test_heat_grid_is_the_closed_form_lattice():
    e = instantiate("heat_fixed")
    g = e.grid(Window(0, 9, 0, 9))
    m, n = np.meshgrid(np.arange(10), np.arange(10), indexing="ij")
    np.testing.assert_array_equal(g.x, m.astype(float))
    np.testing.assert_array_equal(g.t, n.astype(float))


def test_exponential_lattice_matches_closed_form():
    c = math.sqrt(2.0)
    e = instantiate("heat_exponential", {"c": c, "h": 1, "alpha": math.pi, "beta": 0, "t0": 0})
    g = e.grid(Window(0, 8, 0, 8))
    m, n = np.meshgrid(np.arange(9), np.arange(9), indexing="ij")
    np.testing.assert_allclose(g.x, (1 + c) ** n * math.pi * m, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(g.t, n.astype(float), atol=1e-13)


def test_periodic_row_sum_is_conserved():
    s = heat(1.0, 0.2)
    M = 16
    rng = np.random.default_rng(5)
    u = rng.uniform(-1, 1, M)
    total = u.sum()
    x = np.arange(M, dtype=float)
    t = 0.0
    for _ in range(25):
        free = {("x", 0, 0): x, ("t", 0, 0): np.full(M, t),
                ("u", -1, 0): np.roll(u, 1), ("u", 0, 0): u, ("u", 1, 0): np.roll(u, -1)}
        c = solve_on_shell(s, free)
        u = np.asarray(c[("u", 0, 1)])
        t += 0.2
        assert abs(u.sum() - total) <= 1e-12 * abs(total) + 1e-15


@pytest.mark.parametrize("run", STANDARD_RUNS, ids=lambda r: f"{r[0]}-{r[1].get('f', '')}")
def test_catalog_grids_are_on_shell(run):
    e = instantiate(*run)
    g = e.grid(Window(0, 11, 0, 11))
    assert float(np.max(np.abs(grid_residuals(e.scheme, g)))) <= 1e-9


@pytest.mark.parametrize("run", STANDARD_RUNS, ids=lambda r: f"{r[0]}-{r[1].get('f', '')}")
def test_solve_on_shell_recovers_sampled_stencils(run):
    e = instantiate(*run)
    s = e.scheme
    opts = FinderOptions(u_range=e.u_range)
    cfg = sample_configurations(s, 100, np.random.default_rng(11), opts, e.admissible)
    free = {k: v for k, v in cfg.values.items() if k in s.refs and k not in s.solve_for}
    guess = np.stack([np.asarray(cfg[k]) for k in s.solve_for], axis=1)
    solved = solve_on_shell(s, free, guess=guess + 1e-3)
    assert float(np.max(np.abs(residuals(s, solved)))) <= 1e-10
    assert float(np.max(onshell_error(s, solved))) <= 1e-12


def test_grid_csv_round_trip(tmp_path):
    e = instantiate("heat_galilei")
    g = e.grid(Window(-2, 5, 0, 6))
    path = tmp_path / "g.csv"
    g.to_csv(path)
    back = GridSolution.from_csv(path)
    assert (back.m_lo, back.n_lo) == (g.m_lo, g.n_lo)
    for a in ("x", "t", "u"):
        np.testing.assert_array_equal(back.array(a), g.array(a))
    assert path.read_text().splitlines()[0] == "m,n,x,t,u"


def test_scheme_file(tmp_path):
    text = "\n".join([
        "[scheme]", "name = filed", "coords = x, t",
        "[residuals]", *(f"E{k + 1} = {r}" for k, r in enumerate(HEAT)),
        "[parameters]", "h1 = 1.0", "h2 = 0.5",
        "[seed]", "sites = x[0,0]; t[0,0]", "values = 0, 0", "u = x^2",
    ])
    p = tmp_path / "s.ini"
    p.write_text(text)
    s, seed = load_scheme_file(p)
    assert s.name == "filed" and s.params == {"h1": 1.0, "h2": 0.5}
    assert seed["lattice"] == {("x", 0, 0): 0.0, ("t", 0, 0): 0.0}
    c = solve_on_shell(s, {("x", 0, 0): 0.0, ("t", 0, 0): 0.0, ("u", -1, 0): 1.0,
                           ("u", 0, 0): 0.0, ("u", 1, 0): 1.0})
    assert c[("u", 0, 1)] == pytest.approx(1.0)


@settings(max_examples=30)
@given(h1=st.floats(0.2, 3.0), h2=st.floats(0.05, 2.0), x0=st.floats(-5, 5), t0=st.floats(-5, 5))
def test_heat_propagation_matches_closed_form(h1, h2, x0, t0):
    e = instantiate("heat_fixed", {"h1": h1, "h2": h2, "x0": x0, "t0": t0})
    g = e.grid(Window(0, 5, 0, 4))
    m, n = np.meshgrid(np.arange(6), np.arange(5), indexing="ij")
    np.testing.assert_allclose(g.x, h1 * m + x0, atol=1e-12 * (1 + abs(x0) + 6 * h1))
    np.testing.assert_allclose(g.t, h2 * n + t0, atol=1e-12 * (1 + abs(t0) + 5 * h2))
