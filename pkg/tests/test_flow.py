import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latsym.catalog import instantiate
from latsym.errors import FlowError
from latsym.flow import FlowOptions, integrate_flow, transform_and_verify, transform_family
from latsym.lattice import Window, grid_residuals
from latsym.symmetry import ExprField, parse_field

BOOST = parse_field("xi = t; tau = 0; phi = 0")


def test_translation_is_exact():
    r = integrate_flow(parse_field("xi=1;tau=0;phi=0"), (2.0, 3.0, 4.0), FlowOptions(lam=1.0))
    assert r.as_tuple() == (3.0, 3.0, 4.0)


def test_dilation_matches_exponential():
    r = integrate_flow(parse_field("xi=x;tau=2*t;phi=0"), (1.0, 1.0, 1.0), FlowOptions(lam=0.3))
    assert r.as_tuple() == pytest.approx((math.exp(0.3), math.exp(0.6), 1.0), abs=1e-10)
    assert r.error <= 1e-10


def test_boost_shifts_by_time():
    r = integrate_flow(BOOST, (1.0, 3.0, 5.0), FlowOptions(lam=2.0))
    assert r.as_tuple() == pytest.approx((7.0, 3.0, 5.0), abs=1e-12)


def test_points_move_independently():
    xs = np.array([0.0, 1.0, 2.0])
    r = integrate_flow(parse_field("xi=x;tau=0;phi=0"), (xs, 0.0, 0.0), FlowOptions(lam=1.0))
    np.testing.assert_allclose(r.x, xs * math.e, rtol=1e-12)


def test_blow_up_is_reported():
    with pytest.raises(FlowError):
        integrate_flow(parse_field("xi=x^2;tau=0;phi=0"), (1.0, 0.0, 0.0), FlowOptions(lam=2.0))


def test_domain_error_is_reported():
    v = ExprField("ln(x)", "0", "0")
    with pytest.raises(FlowError):
        integrate_flow(v, (0.5, 0.0, 0.0), FlowOptions(lam=5.0))


@pytest.mark.parametrize("kw", [{"substeps": 3}, {"substeps": 1001}, {"richardson": 1}])
def test_option_validation(kw):
    with pytest.raises(ValueError):
        FlowOptions(**kw)


def test_identity_flow_leaves_grid_untouched():
    e = instantiate("heat_galilei")
    g = e.grid(Window(0, 9, 0, 9))
    res = transform_and_verify(BOOST, g, e.scheme, FlowOptions(lam=0.0))
    assert np.array_equal(res.grid.x, g.x) and np.array_equal(res.grid.u, g.u)
    assert np.array_equal(res.residuals, grid_residuals(e.scheme, g))


def test_boost_is_a_symmetry_of_the_galilei_lattice():
    e = instantiate("heat_galilei")
    g = e.grid(Window(0, 19, 0, 19))
    assert transform_and_verify(BOOST, g, e.scheme, FlowOptions(lam=0.5)).max_residual <= 1e-8


@pytest.mark.parametrize("lam,h2", [(0.5, 1.0), (-0.3, 0.25)])
def test_boost_breaks_the_fixed_lattice(lam, h2):
    e = instantiate("heat_fixed", {"h2": h2})
    g = e.grid(Window(0, 9, 0, 9))
    res = transform_and_verify(BOOST, g, e.scheme, FlowOptions(lam=lam))
    worst = res.equation_max()
    # the time step leaks into the x spacing along n
    assert worst[2] == pytest.approx(abs(lam) * h2, abs=1e-9)
    assert np.all(res.residuals[2] == pytest.approx(lam * h2, abs=1e-9))


def test_family_agrees_with_single_runs():
    e = instantiate("heat_dilation4")
    g = e.grid(Window(0, 7, 0, 7))
    v = parse_field("xi = x; tau = 2*t; phi = 0")
    fam = transform_family(v, g, e.scheme, [0.0, 0.2, -0.4])
    for lam, res in zip([0.0, 0.2, -0.4], fam):
        one = transform_and_verify(v, g, e.scheme, FlowOptions(lam=lam))
        np.testing.assert_allclose(res.grid.x, one.grid.x, rtol=1e-13, atol=1e-13)
        assert res.max_residual <= 1e-9


# -- group structure ---------------------------------------------------------

FIELDS = [
    (f.label, f)
    for id_, p in (("heat_galilei", {}), ("heat_dilation4", {}), ("heat_exponential", {}), ("lorentz", {"f": "power", "p": 3}))
    for f in instantiate(id_, p).oracle_fields()
]
lams = st.floats(-1.0, 1.0, allow_nan=False)
points = st.tuples(st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(-2.0, 2.0))


@settings(max_examples=25)
@given(st.sampled_from(range(len(FIELDS))), lams, lams, points)
def test_flows_compose(k, a, b, p):
    v = FIELDS[k][1]
    step = integrate_flow(v, integrate_flow(v, p, FlowOptions(lam=b)).as_tuple(), FlowOptions(lam=a))
    once = integrate_flow(v, p, FlowOptions(lam=a + b))
    assert np.allclose(step.as_tuple(), once.as_tuple(), rtol=1e-9, atol=1e-9)


@settings(max_examples=25)
@given(st.sampled_from(range(len(FIELDS))), lams, points)
def test_flow_inverts(k, a, p):
    v = FIELDS[k][1]
    there = integrate_flow(v, p, FlowOptions(lam=a)).as_tuple()
    back = integrate_flow(v, there, FlowOptions(lam=-a)).as_tuple()
    assert np.allclose(back, p, rtol=1e-9, atol=1e-9)
