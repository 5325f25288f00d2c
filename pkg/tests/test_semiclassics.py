import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from varstring.perturb import cp_constrained, gkdv_example, kdv, symbolic
from varstring.semiclassics import (
    XSYM,
    CharacteristicSolution,
    CompiledExpr,
    InitialData,
    NearCausticError,
    compute_v1,
    compute_v2,
    cp_relation_holds,
    critical_time,
    k3_density,
    k3_density_reduced,
    kdv_example_v1,
    kdv_example_v2,
    quasi_triviality_check,
    series_solution,
    transport_fd_residual,
    transport_residual_symbolic,
    v1_formula,
    v1_from_k1,
)
from varstring.stringeq import ObstructionError

MAX_JET = 11


@pytest.fixture(scope="module")
def kdv_sin():
    D = InitialData(sp.sin(XSYM), period=2 * math.pi)
    return CharacteristicSolution(kdv(), D)


def test_critical_time_sin(kdv_sin):
    assert kdv_sin.t_c == pytest.approx(1.0, abs=1e-12)


def test_characteristics_residual(kdv_sin):
    x = np.linspace(0, 2 * math.pi, 101)
    assert np.max(np.abs(kdv_sin.residual(x, 0.5))) < 1e-12


def test_jets_match_finite_differences(kdv_sin):
    x, h = np.linspace(0.3, 5.9, 7), 1e-4
    jets = kdv_sin.jets_v0(x, 0.5, 3)
    fd1 = (kdv_sin.solve_v0(x + h, 0.5) - kdv_sin.solve_v0(x - h, 0.5)) / (2 * h)
    fd2 = (kdv_sin.jets_v0(x + h, 0.5, 1)[1] - kdv_sin.jets_v0(x - h, 0.5, 1)[1]) / (2 * h)
    assert np.allclose(jets[1], fd1, atol=1e-7)
    assert np.allclose(jets[2], fd2, atol=1e-6)


def test_near_caustic_is_refused():
    D = InitialData(sp.sin(XSYM), period=2 * math.pi)
    S = CharacteristicSolution(kdv(), D)
    with pytest.raises(NearCausticError):
        S.labels(np.array([0.0]), 1.0)


def test_v1_formula_solves_transport_symbolically():
    P = cp_constrained()
    r = transport_residual_symbolic(P, 1, v1_formula(P))
    assert sp.simplify(sp.together(r)) == 0


def test_v1_formula_equals_k1_route_symbolically():
    P = symbolic()
    assert sp.simplify(sp.together(v1_formula(P) - v1_from_k1(P))) == 0


def test_v1_routes_agree_numerically(kdv_sin):
    x = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    a = compute_v1(kdv_sin, x, 0.5)
    b = compute_v1(kdv_sin, x, 0.5, route="k1")
    assert np.max(np.abs(a - b)) < 1e-10


def test_kdv_example_formulas(kdv_sin):
    x = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    jets = kdv_sin.jets_v0(x, 0.5, MAX_JET)
    assert np.max(np.abs(compute_v1(kdv_sin, x, 0.5) - CompiledExpr(kdv_example_v1())(jets, 0.5))) < 1e-8
    assert np.max(np.abs(compute_v2(kdv_sin, x, 0.5) - CompiledExpr(kdv_example_v2())(jets, 0.5))) < 1e-8


def test_kdv_example_literal_v2_differs(kdv_sin):
    x = np.linspace(0, 2 * math.pi, 16, endpoint=False)
    jets = kdv_sin.jets_v0(x, 0.5, MAX_JET)
    diff = compute_v2(kdv_sin, x, 0.5) - CompiledExpr(kdv_example_v2(literal=True))(jets, 0.5)
    assert np.max(np.abs(diff)) > 1e-3


def test_transport_fd_residual_v2_shrinks(kdv_sin):
    x = np.linspace(-1.2, 1.2, 9)
    r = [np.max(np.abs(transport_fd_residual(kdv_sin, x, 0.4, dt, 2))) for dt in (1e-3, 5e-4)]
    assert r[1] < r[0] / 3


def test_k3_reduced_matches_general_at_h2_u():
    P = cp_constrained()
    P = dataclasses.replace(P, closed_forms={"a": sp.Symbol("u"), "c": 1 / (1 + sp.Symbol("u") ** 2 / 5),
                                             "s": sp.Symbol("u") / 5})
    from varstring.jetcalc import LocalDensity, variational_derivative

    diff = variational_derivative(LocalDensity(k3_density(P, bind=True) - k3_density_reduced(P, bind=True)))
    assert sp.simplify(sp.together(diff)) == 0


def test_cp_relation_guard():
    assert cp_relation_holds(kdv())
    assert not cp_relation_holds(symbolic())
    P = gkdv_example(Fraction(1), Fraction(1, 2), a=sp.Symbol("u") + sp.Symbol("u") ** 2 / 4)
    assert not cp_relation_holds(P)
    S = CharacteristicSolution(P, InitialData(sp.sin(XSYM) / 2, period=2 * math.pi))
    with pytest.raises(ObstructionError):
        compute_v2(S, np.array([0.0]), 0.3)


def test_series_solution_partial_sums(kdv_sin):
    x = np.linspace(0, 2 * math.pi, 8, endpoint=False)
    sol = series_solution(kdv_sin, x, 0.5)
    eps = 0.1
    assert np.allclose(sol.partial_sum(eps, 0), sol.v0)
    assert np.allclose(sol.partial_sum(eps, 2), sol.v0 + eps ** 2 * sol.v1 + eps ** 4 * sol.v2)


def test_critical_time_without_steepening():
    D = InitialData(sp.Integer(0) * XSYM + 1, period=2 * math.pi)
    assert math.isinf(critical_time(D, kdv()))


def test_quasi_triviality_kdv():
    rep = quasi_triviality_check(kdv(), order=1)
    assert rep.pure_powers and rep.finite_at_zero_slope
    assert rep.exponents == (3,)


def test_k3_is_regular_at_t0():
    # the 1/t² and 1/t parts cancel and K3 vanishes at t = 0 for generic h, c, s
    from varstring.jetcalc import T, sym

    t = sym(T)
    series = sp.series(k3_density(cp_constrained()), t, 0, 1).removeO()
    for k in (-2, -1, 0):
        assert sp.simplify(series.coeff(t, k)) == 0
