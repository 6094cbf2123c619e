import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gaussian_expectation_quad
from projpursuit.dataset import generate
from projpursuit.measures import (
    EmpiricalMeasure,
    GaussianSpec,
    PiecewiseLinearFn,
    builtin_test_functions,
    gaussian_expectation,
    integrate,
    project,
    project_many,
    registry_function,
)
from projpursuit.randsphere import Direction


def test_project_cube_coordinate():
    mu = project(generate("cube", 2), Direction(np.array([1.0, 0.0])))
    np.testing.assert_array_equal(mu.atoms, [-0.5, -0.5, 0.5, 0.5])


def test_project_orthobasis():
    mu = project(generate("orthobasis", 3), np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(mu.atoms, [0.0, 0.0, math.sqrt(3)])


def test_project_negation():
    ds = generate("gaussian", 4, 33, seed=1)
    th = Direction.from_vector([1.0, -2.0, 0.5, 3.0])
    a = project(ds, th).atoms
    b = project(ds, -th.coords).atoms
    np.testing.assert_allclose(b, -a[::-1], atol=1e-15)


def test_project_shape_checks():
    ds = generate("cube", 3)
    with pytest.raises(ValueError):
        project(ds, np.ones(4) / 2)
    assert project_many(ds, np.eye(3)).shape == (3, 8)


def test_integrate_examples():
    half = PiecewiseLinearFn([0.0], [0.5])
    mu = EmpiricalMeasure(np.arange(5.0))
    assert integrate(mu, half) == 0.5
    f = PiecewiseLinearFn([-1.0, 1.0], [0.1, 0.5])
    assert integrate(EmpiricalMeasure([0.0]), f) == pytest.approx(0.3)
    clamp = registry_function("clamp")
    cube = project(generate("cube", 2), Direction(np.array([1.0, 0.0])))
    assert integrate(cube, clamp) == 0.0


def test_gaussian_expectation_odd_and_constant():
    odd = PiecewiseLinearFn([-2.0, -0.5, 0.5, 2.0], [-0.3, 0.2, -0.2, 0.3])
    for s in (0.1, 1.0, 10.0):
        assert gaussian_expectation(odd, GaussianSpec(s)) == pytest.approx(0.0, abs=1e-16)
        assert gaussian_expectation(PiecewiseLinearFn([1.0], [0.7]), GaussianSpec(s)) == pytest.approx(0.7)


def test_hat_expectation_against_quadrature():
    hat = PiecewiseLinearFn([-1.0, 0.0, 1.0], [0.0, 1.0, 0.0], name="unit_hat")
    got = gaussian_expectation(hat, GaussianSpec(1.0))
    assert got == pytest.approx(gaussian_expectation_quad(hat, 1.0), abs=1e-9)
    # 2 (Phi(1) - Phi(0)) - 2 (phi(0) - phi(1))
    assert got == pytest.approx(0.3687463804, abs=1e-10)


@pytest.mark.parametrize("sigma", [0.25, 1.0, 4.0])
def test_registry_expectations_against_quadrature(sigma):
    for f in builtin_test_functions():
        assert gaussian_expectation(f, GaussianSpec(sigma)) == pytest.approx(
            gaussian_expectation_quad(f, sigma), abs=1e-10
        ), f.name


def test_far_tail_segments_do_not_cancel():
    f = PiecewiseLinearFn([8.0, 9.0], [0.0, 1.0])
    got = gaussian_expectation(f, GaussianSpec(1.0))
    assert got == pytest.approx(gaussian_expectation_quad(f, 1.0), rel=1e-8)
    assert got > 0


def test_registry_contract():
    fns = builtin_test_functions()
    assert [f.name for f in fns] == [f.name for f in builtin_test_functions()]
    assert len({f.name for f in fns}) == len(fns)
    for f in fns:
        assert f.sup_norm + f.lip_const <= 1 + 1e-12, f.name
    assert registry_function("clamp").bl_norm == 1.0
    with pytest.raises(KeyError):
        registry_function("nope")


def test_piecewise_validation():
    with pytest.raises(ValueError):
        PiecewiseLinearFn([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        PiecewiseLinearFn([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        GaussianSpec(0.0)
    with pytest.raises(ValueError):
        EmpiricalMeasure([])


def test_constant_extension():
    f = PiecewiseLinearFn([0.0, 1.0], [0.2, 0.4])
    np.testing.assert_allclose(f([-5.0, 0.5, 5.0]), [0.2, 0.3, 0.4])
    assert f.lip_const == pytest.approx(0.2)


def test_csv_exports(tmp_path):
    EmpiricalMeasure([3.0, 1.0]).to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().split() == ["1.0", "3.0"]
    registry_function("hat").to_csv(tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "knot,value"


@st.composite
def pl_functions(draw):
    k = draw(st.integers(1, 8))
    gaps = draw(st.lists(st.floats(0.05, 3.0), min_size=k, max_size=k))
    start = draw(st.floats(-5.0, 2.0))
    knots = start + np.cumsum(gaps)
    vals = draw(st.lists(st.floats(-1.0, 1.0), min_size=k, max_size=k))
    return PiecewiseLinearFn(knots, vals)


@settings(max_examples=60, deadline=None)
@given(pl_functions(), st.floats(0.2, 5.0))
def test_expectation_property_against_quadrature(f, sigma):
    assert gaussian_expectation(f, GaussianSpec(sigma)) == pytest.approx(
        gaussian_expectation_quad(f, sigma), abs=1e-9
    )


@settings(max_examples=40, deadline=None)
@given(pl_functions(), st.floats(0.2, 5.0), st.floats(-1.0, 1.0))
def test_expectation_is_linear(f, sigma, c):
    g = GaussianSpec(sigma)
    assert gaussian_expectation(f.scaled(c), g) == pytest.approx(c * gaussian_expectation(f, g), abs=1e-14)
