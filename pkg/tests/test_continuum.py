import numpy as np
import pytest
from dataclasses import replace

from latsym.catalog import instantiate
from latsym.continuum import (
    LimitProbe,
    drift_solution,
    leading_order_coefficients,
    verify_change_of_variables,
)
from latsym.dsl import Environment, evaluate
from latsym.errors import LimitError


def test_fixed_lattice_gives_heat_equation():
    rep = leading_order_coefficients(instantiate("heat_fixed"))
    assert rep.deviation({"u_t": 1.0, "u_xx": -1.0}) <= 1e-4
    for k, v in rep.coefficients.items():
        if k not in ("u_t", "u_xx"):
            assert abs(v) < 1e-6, k
    assert rep.order >= 0.9


@pytest.mark.parametrize("sigma", [2.0, 1.0, -0.5])
def test_galilei_lattice_gives_drifting_equation(sigma):
    rep = leading_order_coefficients(instantiate("heat_galilei", {"sigma": sigma}))
    want = {"u_t": 1.0, "u_xx": -1.0, "u_xt": -2.0 / sigma, "u_tt": -1.0 / sigma ** 2}
    assert rep.deviation(want) <= 1e-3
    assert rep.order >= 0.9


def test_discrete_heat_polynomial_has_no_truncation_error():
    rep = leading_order_coefficients(instantiate("heat_fixed"), LimitProbe(u="x^2+2*t"))
    assert rep.exact
    assert all(r == 0.0 for r in rep.residual_scale)


def test_degenerate_probe_is_rejected():
    # every derivative of sin(x)exp(-t) is a multiple of two functions
    with pytest.raises(LimitError):
        leading_order_coefficients(instantiate("heat_fixed"), LimitProbe(u="sin(x)*exp(-t)"))


def test_fit_ignores_probe_amplitude():
    e = instantiate("heat_galilei", {"sigma": 2.0})
    base = LimitProbe()
    a = leading_order_coefficients(e, base)
    b = leading_order_coefficients(e, replace(base, u=f"7.5*({base.u})"))
    assert max(abs(a.coefficients[k] - b.coefficients[k]) for k in a.coefficients) <= 1e-8


def test_nonlinear_tag_for_potential_burgers():
    e = instantiate("burgers_potential")
    rep = leading_order_coefficients(e)
    assert rep.deviation(e.limit["target"]) <= 1e-3
    assert "(u_x)^2" in rep.coefficients


@pytest.mark.parametrize("kw", [
    {"scales": (0.1, 0.2, 0.05)},
    {"scales": (0.1, 0.05)},
    {"scales": (0.1, 0.0, -0.1)},
    {"extra_terms": ("u_xxx",)},
])
def test_probe_validation(kw):
    with pytest.raises(ValueError):
        LimitProbe(**kw)


@pytest.mark.parametrize("c", [1.0, 0.5, -2.0])
def test_change_of_variables_solves_drifting_equation(c):
    rep = verify_change_of_variables(c)
    assert rep.residual <= 1e-8
    assert rep.negative_residual > 1e-2
    assert rep.samples == 100


def test_pulled_back_solution_is_real_and_finite():
    u = drift_solution(0.5)
    v = evaluate(u, Environment({"x": np.linspace(-1, 1, 5), "t": np.linspace(-1, 1, 5)}))
    assert np.all(np.isfinite(v)) and np.all(v > 0)
