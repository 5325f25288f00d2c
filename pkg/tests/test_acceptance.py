"""Acceptance criteria 1-10, each at its stated tolerance, with one PASS/FAIL line per criterion."""

import math
import time
import warnings

import numpy as np
import pytest
import sympy as sp

from conftest import record
from varstring.checks import gelfand_dikii_checks, transport_checks
from varstring.jetcalc import DiffPoly
from varstring.kdvlab import (
    FEvaluator,
    GKdVParams,
    GridSpec,
    convergence_study,
    integrate,
    sigma_residual,
    soliton_transit,
    window_mask,
)
from varstring.perturb import cp_constrained, fsym, kdv, symbolic, verify_conservation
from varstring.semiclassics import (
    XSYM,
    CharacteristicSolution,
    CompiledExpr,
    InitialData,
    compute_v1,
    compute_v2,
    kdv_example_v1,
    kdv_example_v2,
    quasi_triviality_check,
    transport_residual_symbolic,
    v1_formula,
)
from varstring.stringeq import assemble, gauge_e, s0_residual, solve_e

MAX_JET = 11
EPSILONS = [0.2, 0.14, 0.1, 0.07, 0.05]
T_END = 0.5
# level below which σ counts as round-off for O(1) data on these grids
SIGMA_FLOOR = 1e-9


def _sin_data():
    return InitialData(sp.sin(XSYM), (-math.pi / 2, math.pi / 2), 2 * math.pi)


def test_criterion_01_conservation():
    start = time.perf_counter()
    r = verify_conservation(symbolic(), fsym("f"))
    zero = {k: r.eps_coeff(k).is_zero() for k in (0, 2, 4)}
    elapsed = time.perf_counter() - start
    ok = all(zero.values()) and elapsed < 300
    record(1, ok, f"{{D(f), D(h)}} zero at eps^0,2,4: {zero}, {elapsed:.1f} s")
    assert ok


def test_criterion_02_special_conserved():
    P, Q = symbolic(), cp_constrained()
    eps2 = s0_residual(P, eps_max=2).eps_coeff(2).is_zero()
    eps4_cp = s0_residual(Q, e=gauge_e(Q), eps_max=4).eps_coeff(4).is_zero()
    eps4_free = s0_residual(P, e=solve_e(P), eps_max=4).eps_coeff(4).is_zero()
    control = s0_residual(Q, e=gauge_e(Q) + DiffPoly.const(1), eps_max=4).eps_coeff(4).is_zero()
    ok = eps2 and eps4_cp and not eps4_free and not control
    record(2, ok, f"eps^2 {eps2}, eps^4 under cp {eps4_cp}, eps^4 without cp {eps4_free}, "
                  f"perturbed e {control}")
    assert ok


def test_criterion_03_transport():
    results = transport_checks(symbolic())
    ok = all(r.passed for r in results)
    record(3, ok, ", ".join(f"{r.order} {'matches' if r.passed else 'differs'}" for r in results))
    assert ok


def test_criterion_04_v1():
    P = symbolic()
    symbolic_zero = sp.simplify(sp.together(transport_residual_symbolic(P, 1, v1_formula(P)))) == 0
    u = sp.Symbol("u")
    worst = 0.0
    cases = [(kdv(), _sin_data(), 0.5),
             (_cp_model(u), InitialData(sp.sin(XSYM) / 2, (-math.pi / 2, math.pi / 2), 2 * math.pi), 0.4)]
    for model, D, t in cases:
        S = CharacteristicSolution(model, D)
        for N in (256, 1024):
            x = GridSpec(2 * math.pi, N, -math.pi).x
            diff = compute_v1(S, x, t) - compute_v1(S, x, t, route="k1")
            worst = max(worst, float(np.abs(diff).max()))
    ok = symbolic_zero and worst < 1e-10
    record(4, ok, f"symbolic residual zero {symbolic_zero}, max |v1 - D_x dK1/du| = {worst:.2e} (tol 1e-10)")
    assert ok


def _cp_model(u):
    import dataclasses
    from fractions import Fraction

    P = cp_constrained(lam=Fraction(1, 3))
    return dataclasses.replace(P, closed_forms={"a": u, "c": 1 / (1 + u ** 2 / 5), "s": u / 5}, name="test")


def test_criterion_05_kdv_example():
    S = CharacteristicSolution(kdv(), _sin_data())
    worst = 0.0
    for N in (256, 512):
        x = GridSpec(2 * math.pi, N, -math.pi).x
        jets = S.jets_v0(x, T_END, MAX_JET)
        e1 = np.abs(compute_v1(S, x, T_END) - CompiledExpr(kdv_example_v1())(jets, T_END)).max()
        e2 = np.abs(compute_v2(S, x, T_END) - CompiledExpr(kdv_example_v2())(jets, T_END)).max()
        worst = max(worst, float(e1), float(e2))
    ok = worst < 1e-8
    record(5, ok, f"max pointwise difference {worst:.2e} (tol 1e-8)")
    assert ok


def test_criterion_06_gelfand_dikii():
    (r,) = gelfand_dikii_checks(pairs=50, seed=0)
    record(6, r.passed, f"{r.order}, {r.detail or 'all exact zero'}")
    assert r.passed


@pytest.fixture(scope="module")
def study():
    P, D = kdv(), _sin_data()
    grid = GridSpec(2 * math.pi, 1024, -math.pi)
    start = time.perf_counter()
    res = convergence_study(P, D, EPSILONS, T_END, grid, 1e-3,
                            sigma={"sigma1": assemble(P, 1), "sigma2": assemble(P, 2)})
    return res, time.perf_counter() - start


def test_criterion_07_convergence_orders(study):
    res, elapsed = study
    targets = {"err0": (2.0, 0.3), "err1": (4.0, 0.4), "err2": (6.0, 0.7)}
    got = {k: res.slopes[k]["slope"] for k in targets}
    ok = all(abs(got[k] - c) <= tol for k, (c, tol) in targets.items())
    detail = ", ".join(f"{k} {got[k]:.3f} (want {c} ± {tol})" for k, (c, tol) in targets.items())
    record(7, ok, f"{detail}; {elapsed:.0f} s at N = 1024")
    assert ok, detail


def test_criterion_08_sigma_scaling(study):
    res, _ = study
    s1, s2 = res.slopes["sigma1"]["slope"], res.slopes["sigma2"]["slope"]
    P, D = kdv(), _sin_data()
    S = CharacteristicSolution(P, D)
    fine = GridSpec(2 * math.pi, 1024, -math.pi).refined()
    branch = D.interval
    t0, e0 = 0.0, 0.0
    for N in (1, 2):
        SF = assemble(P, N)
        F = FEvaluator(P, D, SF.chains(), branch)
        expr = SF.variational_derivative()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            w0 = window_mask(S, fine.x, 0.0, branch)
            t0 = max(t0, max(sigma_residual(expr, F, D(fine.x), fine, 0.0, eps, w0) for eps in EPSILONS))
            u = integrate(GKdVParams.kdv(0.0), D, T_END, fine, 5e-4).final
            e0 = max(e0, sigma_residual(expr, F, u, fine, T_END, 0.0, res.window))
    ok = s1 >= 3.5 and s2 >= 5.4 and t0 < SIGMA_FLOOR and e0 < SIGMA_FLOOR
    record(8, ok, f"slope N=1 {s1:.3f} (>= 3.5), N=2 {s2:.3f} (>= 5.4); sup sigma at t=0 {t0:.1e}, "
                  f"at eps=0 {e0:.1e} (floor {SIGMA_FLOOR:.0e})")
    assert ok


def test_criterion_09_soliton():
    err, traj = soliton_transit()
    ok = err < 1e-6
    record(9, ok, f"shape error after one transit {err:.2e} (tol 1e-6), N = {traj.grid.N}")
    assert ok


def test_criterion_10_quasi_triviality():
    rep = quasi_triviality_check(kdv())
    # ξ take no initial-data input, so one serialized ξ serves every φ; check that it
    # reproduces the corrections along the characteristics of two distinct data
    worst = 0.0
    for D in (_sin_data(), InitialData(sp.cos(XSYM) / 2 + sp.sin(2 * XSYM) / 5, period=2 * math.pi)):
        S = CharacteristicSolution(kdv(), D)
        x = np.linspace(0, 2 * math.pi, 64, endpoint=False)
        jets = S.jets_v0(x, 0.3, MAX_JET)
        for xi, ref in zip(rep.xi, (compute_v1(S, x, 0.3), compute_v2(S, x, 0.3))):
            worst = max(worst, float(np.abs(CompiledExpr(xi)(jets, 0.3) - ref).max()))
    stable = quasi_triviality_check(kdv(), order=1).serialized[0] == rep.serialized[0]
    ok = rep.pure_powers and rep.finite_at_zero_slope and stable and worst < 1e-8
    record(10, ok, f"denominators (1 + t v0_x)^{list(rep.exponents)}, finite at v0_x = 0 "
                   f"{rep.finite_at_zero_slope}, serialized xi reproducible {stable}, "
                   f"max deviation on two data {worst:.1e}")
    assert ok
