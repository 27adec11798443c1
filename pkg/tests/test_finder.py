import numpy as np
import pytest
from dataclasses import replace

from latsym.catalog import STANDARD_RUNS, instantiate, run_label
from latsym.errors import SamplingError
from latsym.finder import (
    FinderOptions,
    find_for_entry,
    find_symmetries,
    nullspace,
    rref,
    structure_constants,
)
from latsym.symmetry import AnsatzBasis, parse_field, project

from slice_oracle import slice_dimension

RUN_IDS = [run_label(*r) for r in STANDARD_RUNS]
OPTS = FinderOptions(seed=42)
B = AnsatzBasis(2, 2, 1)


@pytest.fixture(scope="module")
def results():
    return {run_label(*r): find_for_entry(instantiate(*r), OPTS) for r in STANDARD_RUNS}


def _span_contains(res, texts, coords=("x", "t")):
    return max(res.containment_residual(parse_field(t, coords)) for t in texts)


def test_heat_fixed_algebra(results):
    res = results["heat_fixed"]
    assert res.dimension == 6
    assert len(res.finite) == 3 and len(res.superposition) == 3
    finite = ["xi=1;tau=0;phi=0", "xi=0;tau=1;phi=0", "xi=0;tau=0;phi=u"]
    sup = ["xi=0;tau=0;phi=1", "xi=0;tau=0;phi=x", "xi=0;tau=0;phi=x^2+2*t"]
    assert max(res.containment_residual(parse_field(t), "finite") for t in finite) <= 1e-8
    assert max(res.containment_residual(parse_field(t), "superposition") for t in sup) <= 1e-8


def test_dilation_added_on_four_point_lattice(results):
    res = results["heat_dilation4"]
    assert res.dimension == 7
    assert _span_contains(res, ["xi=x;tau=2*t;phi=0"]) <= 1e-8


def test_linearizable_burgers_has_no_superposition(results):
    res = results["burgers_linearizable"]
    assert res.dimension == 3 and not res.superposition
    assert _span_contains(res, ["xi=0;tau=1;phi=0", "xi=1;tau=0;phi=0", "xi=x;tau=2*t;phi=-u"]) <= 1e-8


def test_light_cone_superposition_is_separable(results):
    res = results["lorentz[f=constant]"]
    sup = ["xi=0;eta=0;phi=" + s for s in ("1", "x", "x^2", "y", "y^2")]
    assert len(res.superposition) == 5
    assert max(res.containment_residual(parse_field(t, ("x", "y")), "superposition") for t in sup) <= 1e-8


_ORACLE_NAME = {
    "heat_fixed": "heat_fixed", "heat_dilation5": "heat_dilation5", "heat_dilation4": "heat_dilation4",
    "heat_exponential": "heat_exponential", "heat_galilei": "heat_galilei",
    "lorentz[f=linear]": "lorentz_linear", "lorentz[f=constant]": "lorentz_constant",
}


@pytest.mark.parametrize("label", sorted(_ORACLE_NAME))
def test_superposition_slice_matches_exact_enumeration(results, label):
    res = results[label]
    entry = instantiate(*[r for r in STANDARD_RUNS if run_label(*r) == label][0])
    exact = slice_dimension(_ORACLE_NAME[label], entry.scheme.residuals[4].source)
    assert len(res.superposition) == exact


@pytest.mark.parametrize("label", RUN_IDS)
def test_catalog_dimensions_and_oracles(results, label):
    res = results[label]
    entry = instantiate(*[r for r in STANDARD_RUNS if run_label(*r) == label][0])
    if entry.expected_dimension is not None:
        assert res.dimension == entry.expected_dimension
    assert len(res.finite) == entry.expected_finite
    for f in entry.oracle_fields():
        assert res.containment_residual(f) <= 1e-6, f.to_text()
    for f in entry.non_symmetry_fields():
        assert res.containment_residual(f) > 1e-3, f.to_text()


@pytest.mark.parametrize("label", RUN_IDS)
def test_found_fields_hold_out_of_sample(results, label):
    res = results[label]
    assert res.holdout_residual <= 1e-7
    assert res.closure_residual is None or res.closure_residual <= 1e-8


def test_determinism():
    e = instantiate("heat_galilei")
    a = find_for_entry(e, OPTS)
    b = find_for_entry(e, OPTS)
    assert np.array_equal(a.singular_values, b.singular_values)
    assert [f.vector.tobytes() for f in a.fields] == [f.vector.tobytes() for f in b.fields]
    assert a.report() == b.report()


def test_larger_ansatz_never_loses_fields():
    e = instantiate("heat_fixed")
    small = find_symmetries(e.scheme, AnsatzBasis(1, 1, 1), OPTS)
    big = find_symmetries(e.scheme, AnsatzBasis(2, 2, 1), OPTS)
    assert small.dimension <= big.dimension
    for f in small.fields:
        assert big.containment_residual(f) <= 1e-8


def test_span_is_insensitive_to_u_scale():
    e = instantiate("heat_fixed")
    a = find_symmetries(e.scheme, B, OPTS)
    b = find_symmetries(e.scheme, B, replace(OPTS, u_range=(-20.0, 20.0)))
    assert a.dimension == b.dimension
    assert float(np.max(a.principal_angles(b))) < 1e-6


def test_u_dependent_coordinates_are_ruled_out():
    e = instantiate("heat_fixed")
    res = find_symmetries(e.scheme, B, replace(OPTS, coords_depend_on_u=True))
    assert res.dimension == 6


def test_registered_function_enters_the_exponential_algebra(results):
    res = results["heat_exponential"]
    e = instantiate("heat_exponential")
    p1 = e.oracle_fields()[0]
    assert res.containment_residual(p1, "finite") <= 1e-8
    assert res.containment_residual(parse_field("xi=x;tau=0;phi=0"), "finite") > 1e-3


def test_structure_constants_of_linearizable_burgers():
    P1 = project(parse_field("xi=1;tau=0;phi=0"), B)
    D = project(parse_field("xi=x;tau=2*t;phi=-u"), B)
    C, res = structure_constants([P1, D])
    assert res <= 1e-10
    assert C[0, 1] == pytest.approx([1.0, 0.0])


def test_galilei_closure_needs_translation():
    P0 = project(parse_field("xi=0;tau=1;phi=0"), B)
    Bst = project(parse_field("xi=t;tau=0;phi=0"), B)
    P1 = project(parse_field("xi=1;tau=0;phi=0"), B)
    _, partial = structure_constants([P0, Bst])
    assert partial > 1e-6
    C, full = structure_constants([P0, P1, Bst])
    assert full <= 1e-10
    assert C[0, 2] == pytest.approx([0.0, 1.0, 0.0])


def test_open_set_is_flagged():
    dx = project(parse_field("xi=1;tau=0;phi=0"), B)
    sq = project(parse_field("xi=x^2;tau=0;phi=0"), B)
    _, res = structure_constants([dx, sq])
    assert res > 1e-6


def test_rref_and_nullspace():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [1.0, 0.0, 1.0]])
    R, piv = rref(A)
    assert list(piv) == [0, 1]
    Y, sv = nullspace(A, 1e-10)
    assert Y.shape == (3, 1)
    assert np.linalg.norm(A @ Y) <= 1e-12


def test_sampling_gives_up_when_nothing_is_admissible():
    e = instantiate("heat_fixed")
    with pytest.raises(SamplingError):
        find_symmetries(e.scheme, B, OPTS, admissible=lambda c: np.zeros(c.batch_size, dtype=bool))


def test_found_fields_match_oracles_in_reduced_form(results):
    res = results["heat_galilei"]
    fin = [f.to_text() for f in res.finite]
    assert sorted(fin) == sorted(["xi = 1; tau = 0; phi = 0", "xi = t; tau = 0; phi = 0",
                                  "xi = 0; tau = 1; phi = 0", "xi = 0; tau = 0; phi = u"])
