from fractions import Fraction

import pytest

from varstring.jetcalc import EPS, DiffPoly, JetVar, to_text
from varstring.perturb import (
    apply_D,
    check_grading,
    cp_constrained,
    displayed_transport,
    evolution_crosscheck,
    evolution_rhs,
    expand_fields,
    fsym,
    gkdv_example,
    jv,
    kdv,
    quadratic_h,
    semiclassical_expand,
    symbolic,
    verify_conservation,
)


def test_kdv_evolution_rhs():
    assert to_text(evolution_rhs(kdv())) == "u u_x + eps^2 u_xxx"


def test_quadratic_h_has_no_dispersion():
    # every correction carries a factor h''' = 0
    assert to_text(evolution_rhs(quadratic_h())) == "u_x"


def test_gkdv_rhs_has_fifth_order_term():
    P = gkdv_example(Fraction(1), Fraction(1, 2))
    rhs = evolution_rhs(P)
    assert not rhs.eps_coeff(4).coeff_of(JetVar("u", 5), 1).is_zero()


@pytest.mark.parametrize("make", [kdv, quadratic_h, cp_constrained, symbolic])
def test_evolution_matches_hamiltonian_flow(make):
    assert evolution_crosscheck(make()).is_zero()


def test_D_of_f_is_graded():
    H = apply_D(symbolic(), fsym("f"))
    assert check_grading(H.body)


def test_conservation_kdv():
    r = verify_conservation(kdv(), fsym("f"))
    for k in (0, 2, 4):
        assert r.eps_coeff(k).is_zero()


def test_conservation_fails_for_unrelated_density():
    # the eps^0 part of D(f) is f; adding u_x^2 without its partner breaks conservation
    from varstring.jetcalc import LocalDensity, bracket_residual
    from varstring.perturb import hamiltonian

    P = kdv()
    bad = apply_D(P, fsym("f")).body + DiffPoly.gen(EPS, 2) * jv(1) ** 2 * jv(0)
    r = bracket_residual(LocalDensity(bad), LocalDensity(hamiltonian(P).body))
    assert not r.eps_coeff(2).is_zero()


def test_expand_fields_linear_term():
    e = expand_fields(jv(0), orders=2)
    assert to_text(e) == "v0 + eps^2 v1 + eps^4 v2"


def test_semiclassical_orders_kdv():
    system = semiclassical_expand(kdv(), 2)
    assert len(system) == 3
    assert to_text(system[0]) == "v0 v0_x"
    assert (system[1] - displayed_transport(kdv(), 1)).is_zero()


def test_transport_matches_closed_form_symbolic():
    P = symbolic()
    system = semiclassical_expand(P, 2)
    for k in (0, 1, 2):
        assert (system[k] - displayed_transport(P, k)).is_zero()


def test_literal_v2_transport_differs():
    P = symbolic()
    assert not (semiclassical_expand(P, 2)[2] - displayed_transport(P, 2, literal=True)).is_zero()


def test_semiclassical_orders_range():
    with pytest.raises(ValueError):
        semiclassical_expand(kdv(), 3)
