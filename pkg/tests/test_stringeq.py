import pytest

from varstring.jetcalc import DiffPoly, to_text
from varstring.perturb import cp_constrained, kdv, quadratic_h, symbolic
from varstring.stringeq import (
    ObstructionError,
    assemble,
    build_f2,
    check_cp_constraint,
    displayed_string_equation,
    explicit_string_equation,
    f1_display,
    gauge_e,
    gauge_e_display,
    s0_residual,
    solve_e,
    t0_residual,
    to_f_form,
    build_f1,
    uniqueness_rank,
    verify_string_conditions,
)

# f2' for KdV in preimage form (x eliminated, jets of φ at the label)
KDV_F2_PRIME = (
    "-1/8 u_x^-3 u_6x + 29/40 u_x^-4 u_xx u_5x + 47/40 u_x^-4 u_xxx u_xxxx - 53/20 u_x^-5 u_xx^2 u_xxxx"
    " - 7/2 u_x^-5 u_xx u_xxx^2 + 7 u_x^-6 u_xx^3 u_xxx - 21/8 u_x^-7 u_xx^5"
)


def test_cp_constraint_vanishes_when_imposed():
    assert check_cp_constraint(cp_constrained()).is_zero()
    assert check_cp_constraint(kdv()).is_zero()
    assert not check_cp_constraint(symbolic()).is_zero()


def test_s0_commutes_at_eps2_symbolically():
    assert s0_residual(symbolic(), eps_max=2).eps_coeff(2).is_zero()


def test_s0_commutes_at_eps4_under_cp():
    P = cp_constrained()
    assert s0_residual(P, e=gauge_e(P), eps_max=4).eps_coeff(4).is_zero()


def test_s0_negative_controls():
    P = cp_constrained()
    shifted = gauge_e(P) + DiffPoly.const(1)
    assert not s0_residual(P, e=shifted, eps_max=4).eps_coeff(4).is_zero()
    # the displayed gauge value is twice the one that works
    assert (gauge_e_display(P) - 2 * gauge_e(P)).is_zero()
    assert not s0_residual(P, e=gauge_e_display(P), eps_max=4).eps_coeff(4).is_zero()


def test_gauge_e_is_the_unique_solution():
    P = cp_constrained()
    assert (solve_e(P) - gauge_e(P)).is_zero()


def test_kdv_gauge_vanishes():
    assert gauge_e(kdv()).is_zero()


def test_uniqueness_rank_kdv():
    rank, basis = uniqueness_rank(kdv())
    assert rank == 1
    assert basis[0]["a0_1"] == 2 * basis[0]["b0_2"]


@pytest.mark.parametrize("make", [kdv, quadratic_h, cp_constrained])
def test_string_functional_conditions(make):
    for N in (1, 2):
        rep = verify_string_conditions(assemble(make(), N))
        assert rep.passed, rep.as_dict()


def test_kdv_f2_prime_golden():
    assert to_text(assemble(kdv(), 2).f2_prime) == KDV_F2_PRIME


def test_f2_needed_for_t0_condition():
    S = assemble(kdv(), 2)
    assert t0_residual(S).is_zero()
    assert not t0_residual(S, include_f2=False).eps_coeff(4).is_zero()


def test_build_f2_requires_N2():
    with pytest.raises(ValueError):
        build_f2(assemble(kdv(), 1))


def test_f1_preimage_matches_closed_form():
    P = symbolic()
    assert (to_f_form(P, build_f1(P)) - f1_display(P)).is_zero()


def test_explicit_string_equation_kdv():
    text = to_text(explicit_string_equation(assemble(kdv(), 1)))
    assert text == "x + t u - f'(u) - eps^2 f1'(u) - eps^2 f'''(u) u_xx - 1/2 eps^2 f^(4)(u) u_x^2"


def test_displayed_string_equation_sign():
    P = symbolic()
    derived = explicit_string_equation(assemble(P, 1))
    assert (derived - displayed_string_equation(P)).is_zero()
    assert not (derived - displayed_string_equation(P, literal=True)).is_zero()


def test_obstruction_error_is_value_error():
    assert issubclass(ObstructionError, ValueError)
