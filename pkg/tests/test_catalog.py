import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latsym.catalog import (
    STANDARD_RUNS,
    catalog_ids,
    galilei_is_aligned,
    galilei_is_orthogonal,
    galilei_lattice,
    galilei_line_families,
    instantiate,
    parameter_specs,
    run_label,
    signature,
)
from latsym.errors import InvalidParameterError, UnknownSchemeError
from latsym.finder import FinderOptions, sample_configurations
from latsym.lattice import Window, grid_residuals
from latsym.symmetry import evaluate_field, prolonged_action

RUN_IDS = [run_label(*r) for r in STANDARD_RUNS]


def _configs(entry, count=50, seed=3):
    opts = FinderOptions(u_range=entry.u_range)
    return sample_configurations(entry.scheme, count, np.random.default_rng(seed), opts, entry.admissible)


def test_ids_and_signatures():
    assert set(catalog_ids()) == {
        "heat_fixed", "heat_dilation5", "heat_dilation4", "heat_exponential", "heat_galilei",
        "lorentz", "burgers_potential", "burgers_linearizable",
    }
    assert signature("heat_exponential").startswith("heat_exponential: c=0.1")
    assert len(STANDARD_RUNS) == 11


@pytest.mark.parametrize("run", STANDARD_RUNS, ids=RUN_IDS)
def test_oracles_annihilate_every_residual(run):
    e = instantiate(*run)
    cfg = _configs(e)
    for f in e.oracle_fields():
        assert float(np.max(np.abs(prolonged_action(f, e.scheme, cfg)))) <= 1e-8, f.to_text()


@pytest.mark.parametrize("run", STANDARD_RUNS, ids=RUN_IDS)
def test_non_symmetries_are_detected(run):
    e = instantiate(*run)
    cfg = _configs(e)
    for f in e.non_symmetry_fields():
        assert float(np.max(np.abs(prolonged_action(f, e.scheme, cfg)))) > 1e-3, f.to_text()


def test_unknown_scheme():
    with pytest.raises(UnknownSchemeError) as err:
        instantiate("no_such_scheme")
    assert "heat_fixed" in str(err.value)


@pytest.mark.parametrize("id_,params", [
    ("heat_exponential", {"c": 0}),
    ("heat_exponential", {"c": -1}),
    ("heat_fixed", {"h1": 0}),
    ("heat_galilei", {"zeta": 0}),
    ("lorentz", {"f": "cubic"}),
    ("lorentz", {"f": "power", "p": 1}),
    ("burgers_linearizable", {"c": 0}),
    ("heat_fixed", {"h3": 1}),
    ("heat_fixed", {"h1": "wide"}),
])
def test_invalid_parameters(id_, params):
    with pytest.raises(InvalidParameterError):
        instantiate(id_, params)


def test_greek_aliases():
    a = instantiate("heat_galilei", {"τ1": 1, "τ2": 2, "ζ": 2})
    b = instantiate("heat_galilei", {"tau1": 1, "tau2": 2, "zeta": 2})
    assert a.scheme.params == b.scheme.params


def test_power_dilation_at_cubic_interaction():
    e = instantiate("lorentz", {"f": "power", "p": 3})
    d = [f for f in e.oracle_fields() if f.label == "D"][0]
    assert evaluate_field(d, (2.0, 3.0, 5.0)) == pytest.approx((2.0, 3.0, -5.0))


def test_galilei_lattice_from_propagation():
    e = instantiate("heat_galilei", {"τ1": 1, "τ2": 2, "ζ": 2, "sigma": 1})
    g = e.grid(Window(0, 6, 0, 6))
    m, n = np.meshgrid(np.arange(7), np.arange(7), indexing="ij")
    # x = sigma tau1 m + (sigma tau1 tau2 - zeta)/tau1 n + x0, t = tau1 m + tau2 n + t0
    np.testing.assert_allclose(g.t, 1.0 * m + 2.0 * n, atol=1e-12)
    np.testing.assert_allclose(g.x, 1.0 * m + 0.0 * n, atol=1e-12)
    assert galilei_is_aligned(1, 2, 2, 1)
    assert not galilei_is_orthogonal(1, 2, 2, 1)


@settings(max_examples=40)
@given(tau1=st.floats(0.2, 3), tau2=st.floats(0.2, 3), zeta=st.floats(0.2, 3), sigma=st.floats(-2, 2))
def test_coordinate_lines_are_straight_families(tau1, tau2, zeta, sigma):
    fixed_m, fixed_n = galilei_line_families(tau1, tau2, zeta, sigma)
    for m in range(-2, 3):
        for n in range(-2, 3):
            x, t = galilei_lattice(m, n, tau1, tau2, zeta, sigma)
            scale = 1 + abs(x) + abs(t)
            assert abs(fixed_m(t, n) - x) <= 1e-12 * scale
            assert abs(fixed_n(t, m) - x) <= 1e-12 * scale


@settings(max_examples=40)
@given(tau1=st.floats(0.2, 3), tau2=st.floats(0.2, 3), sigma=st.floats(0.1, 2))
def test_orthogonality_predicate(tau1, tau2, sigma):
    zeta = (sigma ** 2 + 1) * tau1 * tau2 / sigma
    x1, t1 = galilei_lattice(1, 0, tau1, tau2, zeta, sigma)
    x2, t2 = galilei_lattice(0, 1, tau1, tau2, zeta, sigma)
    assert galilei_is_orthogonal(tau1, tau2, zeta, sigma, tol=1e-9)
    assert abs(x1 * x2 + t1 * t2) <= 1e-9 * (1 + abs(x1 * x2) + abs(t1 * t2))


def test_galilei_grid_obeys_scheme():
    e = instantiate("heat_galilei", {"τ1": 1, "τ2": 2, "ζ": 2})
    g = e.grid(Window(0, 9, 0, 9))
    assert float(np.max(np.abs(grid_residuals(e.scheme, g)))) <= 1e-9


def test_lattice_constants_are_not_scheme_parameters():
    specs = {p.name: p.kind for p in parameter_specs("heat_exponential")}
    assert specs["alpha"] == "lattice" and specs["c"] == "scheme"
    e = instantiate("heat_exponential", {"alpha": 3.0})
    assert "alpha" not in e.scheme.params and e.lattice_constants["alpha"] == 3.0


def test_lorentz_constant_has_shifted_scaling():
    # u_xy = 1 has the particular solution xy; scaling around it is a symmetry
    e = instantiate("lorentz", {"f": "constant"})
    labels = [f.label for f in e.oracle_fields()]
    assert "Wxy" in labels and e.expected_finite == 5
