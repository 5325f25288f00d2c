"""The symbolic verification suite behind ``varstring verify``.

Each check returns a ``CheckResult``; a suite is a flat list of them so that
the CLI can print and serialise it without knowing what was checked.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass
from fractions import Fraction

from .jetcalc import EPS, DiffPoly, JetVar, LocalDensity, gelfand_dikii_residual, variational_derivative
from .perturb import (
    PerturbationData,
    displayed_transport,
    evolution_crosscheck,
    fsym,
    semiclassical_expand,
    verify_conservation,
)
from .stringeq import assemble, check_cp_constraint, gauge_e, s0_residual, verify_string_conditions


@dataclass(frozen=True)
class CheckResult:
    name: str
    order: str
    passed: bool
    detail: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _orders(r: DiffPoly, name: str, eps_orders) -> list:
    return [CheckResult(name, f"eps^{k}", r.eps_coeff(k).is_zero()) for k in eps_orders]


def evolution_checks(P: PerturbationData) -> list:
    return [CheckResult("evolution equation vs Hamiltonian flow", "eps^0..4", evolution_crosscheck(P).is_zero())]


def conservation_checks(P: PerturbationData) -> list:
    """{∫D(f), ∫D(h)} = 0 at each order for a symbolic f."""
    return _orders(verify_conservation(P, fsym("f")), "conservation of D(f)", (0, 2, 4))


def cp_holds(P: PerturbationData) -> bool:
    return check_cp_constraint(P).is_zero()


def s0_checks(P: PerturbationData, e_offset=0) -> list:
    """S0 commutes with the flow at eps² and, under the cp relation, at eps⁴."""
    out = [CheckResult("S0 commutation", "eps^2", s0_residual(P, eps_max=2).eps_coeff(2).is_zero())]
    if cp_holds(P):
        e = gauge_e(P) + DiffPoly.lift(Fraction(e_offset))
        detail = "" if not e_offset else f"e shifted by {Fraction(e_offset)}"
        out.append(CheckResult("S0 commutation", "eps^4",
                               s0_residual(P, e=e, eps_max=4).eps_coeff(4).is_zero(), detail))
    else:
        out.append(CheckResult("S0 commutation", "eps^4", True, "skipped: p ≠ (3/5)cc' + λc³"))
    return out


def string_checks(P: PerturbationData) -> list:
    """Commutation and t = 0 conditions of the string functional for N = 1 and, if it exists, N = 2."""
    out = []
    for N in (1, 2):
        if N == 2 and not cp_holds(P):
            out.append(CheckResult("string functional N=2", "-", True, "skipped: p ≠ (3/5)cc' + λc³"))
            continue
        rep = verify_string_conditions(assemble(P, N))
        for k, ok in rep.commutation.items():
            out.append(CheckResult(f"string functional N={N} commutation", f"eps^{k}", ok))
        for k, ok in rep.initial.items():
            out.append(CheckResult(f"string functional N={N} at t=0", f"eps^{k}", ok))
    return out


def transport_checks(P: PerturbationData) -> list:
    system = semiclassical_expand(P, 2)
    return [CheckResult("transport equation", f"v{k}", (system[k] - displayed_transport(P, k)).is_zero())
            for k in (1, 2)]


def random_density(rng: random.Random, jet_order: int = 3, eps_order: int = 4, terms: int = 3) -> DiffPoly:
    """A random polynomial density in u, ..., u^(jet_order) with even eps powers up to eps_order."""
    out = DiffPoly()
    for _ in range(terms):
        m = DiffPoly.const(Fraction(rng.randint(-9, 9) or 1, rng.randint(1, 5)))
        for k in range(jet_order + 1):
            e = rng.choice((0, 0, 1, 2))
            if e:
                m = m * DiffPoly.gen(JetVar("u", k), e)
        m = m * DiffPoly.gen(EPS, 2 * rng.randint(0, eps_order // 2)) if eps_order else m
        out = out + m
    return out


def gelfand_dikii_checks(pairs: int = 50, seed: int = 0) -> list:
    """The Gel'fand–Dikii identity for δF/δu, δG/δu over random density pairs (one result per batch)."""
    rng = random.Random(seed)
    bad = 0
    for _ in range(pairs):
        F, G = (LocalDensity(random_density(rng)) for _ in range(2))
        if not gelfand_dikii_residual(variational_derivative(F), variational_derivative(G)).is_zero():
            bad += 1
    return [CheckResult("Gel'fand-Dikii identity", f"{pairs} pairs", bad == 0, f"{bad} failures" if bad else "")]


def run_suite(P: PerturbationData, seed: int = 0, e_offset=0, gd_pairs: int = 50) -> list:
    return (evolution_checks(P) + conservation_checks(P) + s0_checks(P, e_offset) + string_checks(P)
            + transport_checks(P) + gelfand_dikii_checks(gd_pairs, seed))


__all__ = [
    "CheckResult", "run_suite", "evolution_checks", "conservation_checks", "s0_checks", "string_checks",
    "transport_checks", "gelfand_dikii_checks", "random_density", "cp_holds",
]
