import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latsym.catalog import instantiate
from latsym.errors import DSLSyntaxError, SpanEscapeError
from latsym.finder import FinderOptions, sample_configurations
from latsym.lattice import StencilConfiguration
from latsym.symmetry import (
    AnsatzBasis,
    ExprField,
    VectorField,
    evaluate_field,
    lie_bracket,
    parse_field,
    project,
    prolonged_action,
    read_fields,
    write_fields,
)

B = AnsatzBasis(2, 2, 1)


def field(text, basis=B):
    return project(parse_field(text), basis)


def same(a, b, tol=1e-12):
    return np.linalg.norm(a.vector - project(b, a.basis).vector) <= tol


def test_basis_order_and_labels():
    assert B.size == 18
    assert B.labels[:4] == ["1", "x", "t", "u"]
    assert int(np.sum(B.u_free())) == 9


def test_field_evaluation():
    D = parse_field("xi = x; tau = 2*t; phi = 0")
    assert evaluate_field(D, (3, 5, 7)) == (3, 10, 0)
    boost = parse_field("xi = t; tau = 0; phi = 0")
    assert evaluate_field(boost, (1, 2, 0)) == (2, 0, 0)
    P1 = ExprField("(1+c)^(t/h)", "0", "0", params={"c": 1.0, "h": 1.0})
    assert evaluate_field(P1, (0.0, 1.0, 0.0)) == pytest.approx((2.0, 0.0, 0.0))


def _heat_lattice_stencil(s):
    vals = {}
    for v, i, j in s.stencil_keys:
        x, t = 4.0 + i, 1.0 + j
        vals[(v, i, j)] = {"x": x, "t": t, "u": x * x + 2 * t}[v]
    return StencilConfiguration(vals)


def test_translation_leaves_heat_invariant():
    e = instantiate("heat_fixed")
    cfg = sample_configurations(e.scheme, 20, np.random.default_rng(0), FinderOptions())
    pr = prolonged_action(parse_field("xi = 1; tau = 0; phi = 0"), e.scheme, cfg)
    assert pr.shape == (5, 20)
    assert np.all(pr == 0.0)


def test_dilation_breaks_fixed_lattice():
    e = instantiate("heat_fixed")
    pr = prolonged_action(parse_field("xi = x; tau = 2*t; phi = 0"), e.scheme, _heat_lattice_stencil(e.scheme))
    assert pr[0] == pytest.approx(1.0)


def test_dilation_preserves_four_point_lattice():
    e = instantiate("heat_dilation4")
    cfg = sample_configurations(e.scheme, 50, np.random.default_rng(1), FinderOptions())
    pr = prolonged_action(parse_field("xi = x; tau = 2*t; phi = 0"), e.scheme, cfg)
    assert float(np.max(np.abs(pr))) <= 1e-9


def test_known_brackets():
    dx, dt = field("xi=1;tau=0;phi=0"), field("xi=0;tau=1;phi=0")
    D, boost = field("xi=x;tau=2*t;phi=0"), field("xi=t;tau=0;phi=0")
    assert same(lie_bracket(dx, D), dx)
    assert same(lie_bracket(dt, boost), dx)


def test_bracket_re_expands_or_escapes():
    dx = field("xi=1;tau=0;phi=0")
    sq = field("xi=x^2;tau=0;phi=0")
    assert same(lie_bracket(dx, sq), parse_field("xi=2*x;tau=0;phi=0"))
    with pytest.raises(SpanEscapeError):
        lie_bracket(dx, sq, out_basis=AnsatzBasis(0, 2, 1))


def test_bracket_with_registered_function():
    params = {"c": 0.5, "h": 2.0}
    basis = AnsatzBasis(1, 1, 1, ("(1+c)^(t/h)",), params=params)
    growth = project(ExprField("(1+c)^(t/h)", "0", "0", params=params), basis)
    dt = project(parse_field("xi=0;tau=1;phi=0"), basis)
    br = lie_bracket(dt, growth)
    want = ExprField(f"{math.log(1.5) / 2.0}*(1+c)^(t/h)", "0", "0", params=params)
    assert np.linalg.norm(br.vector - project(want, basis).vector) <= 1e-9
    assert br.residual <= 1e-9


def test_projection_rejects_fields_outside_the_span():
    with pytest.raises(SpanEscapeError):
        project(parse_field("xi = exp(x); tau = 0; phi = 0"), B)


def test_field_text_round_trip(tmp_path):
    fs = [field("xi=x;tau=2*t;phi=-u"), field("xi=0;tau=0;phi=x^2+2*t")]
    path = tmp_path / "f.txt"
    write_fields(path, fs)
    back = read_fields(path)
    for a, b in zip(fs, back):
        assert same(a, b)


def test_field_parser_accepts_labels_comments_and_eta():
    f = parse_field("L: xi = x; eta = -y; phi = 0  # boost", coords=("x", "y"))
    assert f.label == "L"
    assert evaluate_field(f, (2.0, 3.0, 0.0)) == (2.0, -3.0, 0.0)
    with pytest.raises(DSLSyntaxError):
        parse_field("xi = 1; tau = 0")


# -- algebraic properties -----------------------------------------------------

SMALL = AnsatzBasis(2, 2, 1)
BIG = AnsatzBasis(6, 6, 3)
coeffs = st.lists(st.integers(-3, 3), min_size=3 * SMALL.size, max_size=3 * SMALL.size)


def _vf(c):
    return VectorField.from_vector(SMALL, np.array(c, dtype=float))


@given(coeffs, coeffs)
def test_antisymmetry_is_exact(a, b):
    x, y = _vf(a), _vf(b)
    assert np.array_equal(lie_bracket(x, y, BIG).vector, -lie_bracket(y, x, BIG).vector)


@settings(max_examples=40)
@given(coeffs, coeffs, coeffs)
def test_jacobi_identity(a, b, c):
    x, y, z = _vf(a), _vf(b), _vf(c)
    xy, yz, zx = lie_bracket(x, y, BIG), lie_bracket(y, z, BIG), lie_bracket(z, x, BIG)
    total = lie_bracket(xy, z, BIG).vector + lie_bracket(yz, x, BIG).vector + lie_bracket(zx, y, BIG).vector
    assert np.linalg.norm(total) <= 1e-10


@settings(max_examples=30)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10 ** 6))
def test_prolongation_is_linear(alpha, beta, seed):
    e = instantiate("burgers_linearizable")
    cfg = sample_configurations(e.scheme, 10, np.random.default_rng(seed), FinderOptions(), e.admissible)
    rng = np.random.default_rng(seed + 1)
    a = VectorField.from_vector(B, rng.normal(size=3 * B.size))
    b = VectorField.from_vector(B, rng.normal(size=3 * B.size))
    lhs = prolonged_action(a * alpha + b * beta, e.scheme, cfg)
    rhs = alpha * prolonged_action(a, e.scheme, cfg) + beta * prolonged_action(b, e.scheme, cfg)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, float(np.max(np.abs(rhs))))
