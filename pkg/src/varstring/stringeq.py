"""Special conserved quantity S0, initial-data corrections and the string functional.

The string functional is

    S_f = ∫ (x·D(r) + t·D(q) + eps⁴ e(u) u_x³) dx − ∫ D(f + eps² f1 + eps⁴ f2) dx

with r' = 1/c and q' = h''/c.  Its critical point equation δS_f/δu = 0
deforms the method of characteristics.

Initial data enter through f, defined by c(φ(x)) f'(φ(x)) = x.  At t = 0 on
u = φ(x) every f-derivative is a function of x and the jets of φ, which we
call the *preimage form*:

    f'(u) = x / c(u),        f^(k+1)(u) = u_x^{-1} D_x f^(k)(u).

The same rule gives f1 and f2.  In preimage form the condition
δS_f/δu|_{t=0, u=φ} = 0 is an identity between differential polynomials in
(x, u, u_x, ...), which are algebraically independent for generic φ, so it can
be checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .jetcalc import (
    EPS,
    T,
    X,
    DiffPoly,
    FuncSymbol,
    JetVar,
    LocalDensity,
    commutation_residual,
    d_du,
    fderiv,
    total_x_derivative,
    variational_derivative,
)
from .perturb import EPS_P, PerturbationData, D_operator, fsym, hamiltonian, jv

F_SYM = FuncSymbol("f")
F1_SYM = FuncSymbol("f1")
F2_SYM = FuncSymbol("f2")
MAX_F_ORDER = 8


class ObstructionError(ValueError):
    """The order-eps⁴ string functional does not exist for this perturbation."""


# --- S0 ------------------------------------------------------------------------

def r_symbol(P: PerturbationData) -> FuncSymbol:
    return FuncSymbol("r", 0, "u", P.c ** -1)


def q_symbol(P: PerturbationData) -> FuncSymbol:
    return FuncSymbol("q", 0, "u", P.a * P.c ** -1)


def check_cp_constraint(P: PerturbationData) -> DiffPoly:
    """(h'''/c²)(p'c − 3pc' + (6/5)c(c')² − (3/5)c²c''); zero iff the eps⁴ S0 exists."""
    c, p = P.c, P.p
    c1, c2 = d_du(c), fderiv(c, 2)
    inner = d_du(p) * c - 3 * p * c1 + Fraction(6, 5) * c * c1 ** 2 - Fraction(3, 5) * c ** 2 * c2
    return fderiv(P.h, 3) * c ** -2 * inner


def gauge_e_display(P: PerturbationData) -> DiffPoly:
    """e(u) exactly as commonly printed; twice the value S0 actually needs."""
    c, s, lam = P.c, P.s, P.lam
    c1, c2, c3, c4 = (fderiv(c, k) for k in (1, 2, 3, 4))
    ci = c ** -1
    return (Fraction(53, 24) * c2 * c1 ** 2 * ci ** 2 - Fraction(8, 15) * c1 ** 4 * ci ** 3 + d_du(s) * ci
            - Fraction(157, 120) * c2 ** 2 * ci - 5 * s * c1 * ci ** 2 - Fraction(173, 120) * c1 * c3 * ci
            + Fraction(5, 12) * c4
            + lam * (-Fraction(13, 2) * c2 * c1 + 2 * c1 ** 3 * ci + Fraction(11, 6) * c * c3))


def gauge_e(P: PerturbationData) -> DiffPoly:
    """The coefficient e(u) of eps⁴ u_x³ in S0."""
    return gauge_e_display(P).scale(Fraction(1, 2))


def s0_density(P: PerturbationData, e=None, eps_max: int = 4) -> DiffPoly:
    x, t = DiffPoly.gen(X), DiffPoly.gen(T)
    body = x * D_operator(P, r_symbol(P), eps_max) + t * D_operator(P, q_symbol(P), eps_max)
    if eps_max >= 4:
        e = gauge_e(P) if e is None else DiffPoly.lift(e)
        body = body + EPS_P ** 4 * e * jv(1) ** 3
    return body


def build_S0(P: PerturbationData, N: int = 2, e=None) -> LocalDensity:
    """S0 density at order eps^{2N}; N = 2 requires p = (3/5)cc' + λc³."""
    if N not in (1, 2):
        raise ValueError("N must be 1 or 2")
    if N == 2 and not check_cp_constraint(P).is_zero():
        raise ObstructionError("p ≠ (3/5)cc' + λc³: no eps⁴ conserved quantity of string type")
    return LocalDensity(s0_density(P, e, 2 * N))


def s0_residual(P: PerturbationData, e=None, eps_max: int = 4) -> DiffPoly:
    """∂_t δS0/δu + E(δS0/δu · D_x δH_h/δu), truncated at eps_max."""
    S = LocalDensity(s0_density(P, e, eps_max))
    return commutation_residual(S, hamiltonian(P).density, eps_max)


def solve_e(P: PerturbationData) -> DiffPoly:
    """Derive e from the coefficient of h''' u_x² u_xx in the eps⁴ residual (linear in e)."""
    res = s0_residual(P, fsym("e")).eps_coeff(4)
    h3 = fderiv(P.h, 3)
    target = res.coeff_of(JetVar("u", 1), 2).coeff_of(JetVar("u", 2), 1)
    e_gen = FuncSymbol("e")
    e_part = target.coeff_of(e_gen, 1)
    rest = target.coeff_of(e_gen, 0)
    if len(e_part) != 1 or (e_part * h3 ** -1) != DiffPoly.const(-24):
        raise ValueError("unexpected structure of the eps⁴ residual")
    return rest * h3 ** -1 * Fraction(1, 24)


def uniqueness_rank(P: PerturbationData, degree: int = 4):
    """Dimension of the space of eps²-conserved normal-form densities with polynomial coefficients.

    α0, α1, β0, β1 range over polynomials in u of the given degree without
    constant term (constants give trivial functionals).  Returns
    ``(nullity, basis)``; S0 is unique up to scale iff nullity == 1.
    """
    import sympy as sp

    from .jetcalc import Const

    u = jv(0)
    unknowns = []

    def poly(name):
        out = DiffPoly()
        for k in range(1, degree + 1):
            g = Const(f"{name}_{k}")
            unknowns.append(g)
            out = out + DiffPoly.gen(g) * u ** k
        return out

    a0, a1, b0, b1 = poly("a0"), poly("a1"), poly("b0"), poly("b1")
    x, t = DiffPoly.gen(X), DiffPoly.gen(T)
    body = x * (a0 + EPS_P ** 2 * a1 * jv(1) ** 2) + t * (b0 + EPS_P ** 2 * b1 * jv(1) ** 2)
    res = commutation_residual(LocalDensity(body), hamiltonian(P).density, 2)
    rows: dict = {}
    ukeys = set(unknowns)
    for m, c in res.items():
        lin = [g for g, _ in m if g in ukeys]
        rest = frozenset((g, e) for g, e in m if g not in ukeys)
        col = unknowns.index(lin[0]) if lin else None
        if col is None:
            raise ValueError("inhomogeneous term in the linear system")
        rows.setdefault(rest, [0] * len(unknowns))[col] += c
    M = sp.Matrix([[sp.Rational(v.numerator, v.denominator) if isinstance(v, Fraction) else v for v in row]
                   for row in rows.values()])
    basis = M.nullspace()
    return len(basis), [{str(g.name): b[i] for i, g in enumerate(unknowns) if b[i] != 0} for b in basis]


# --- preimage forms ----------------------------------------------------------------

def _raise_order(form: DiffPoly) -> DiffPoly:
    return jv(1) ** -1 * total_x_derivative(form)


def preimage_chain(first: DiffPoly, max_order: int = MAX_F_ORDER) -> list:
    """[None, F', F'', ...] with F^(k+1) = u_x^{-1} D_x F^(k)."""
    out = [None, first]
    while len(out) <= max_order:
        out.append(_raise_order(out[-1]))
    return out


def f_prime_preimage(P: PerturbationData) -> DiffPoly:
    return DiffPoly.gen(X) * P.c ** -1


def f1_prime_preimage(P: PerturbationData) -> DiffPoly:
    """f1' = (1/(2c)) d²/dv² (c/(cf')'), using (cf')'(φ) = 1/φ_x."""
    ux = jv(1)
    inner = _raise_order(_raise_order(P.c * ux))
    return Fraction(1, 2) * P.c ** -1 * inner


def substitute_preimage(expr: DiffPoly, chains: dict) -> DiffPoly:
    """Replace f-family symbols f^(k)(u) by their preimage forms (k ≥ 1)."""

    def fn(g):
        if isinstance(g, FuncSymbol) and g.arg == "u" and g.base in chains:
            if g.order == 0:
                raise ValueError(f"{g.name} appears undifferentiated")
            return chains[g.base][g.order]
        return None

    return expr.map_generators(fn)


def drop_t(expr: DiffPoly) -> DiffPoly:
    return expr.map_generators(lambda g: DiffPoly() if g == T else None)


# --- assembly -----------------------------------------------------------------------

@dataclass(frozen=True)
class StringFunctional:
    """S_f = S0 − H^eps_f with its order N and the data it was built from."""

    density: LocalDensity
    N: int
    P: PerturbationData
    e: DiffPoly
    f2_prime: DiffPoly | None = field(default=None, compare=False)

    @property
    def body(self) -> DiffPoly:
        return self.density.body

    def variational_derivative(self) -> DiffPoly:
        return variational_derivative(self.density)

    def chains(self, max_order: int = MAX_F_ORDER) -> dict:
        out = {"f": preimage_chain(f_prime_preimage(self.P), max_order),
               "f1": preimage_chain(f1_prime_preimage(self.P), max_order)}
        if self.f2_prime is not None:
            out["f2"] = preimage_chain(self.f2_prime, max_order)
        return out


def hamiltonian_f(P: PerturbationData, N: int = 2) -> DiffPoly:
    """eps^{2N}-truncation of D(f + eps² f1 + eps⁴ f2)."""
    eps_max = 2 * N
    out = D_operator(P, F_SYM, eps_max) + EPS_P ** 2 * D_operator(P, F1_SYM, eps_max - 2)
    if N == 2:
        out = out + EPS_P ** 4 * DiffPoly.gen(F2_SYM)
    return out.truncate(eps_max)


def assemble(P: PerturbationData, N: int = 2, e=None, derive_f2: bool = True) -> StringFunctional:
    S0 = build_S0(P, N, e)
    body = S0.body - hamiltonian_f(P, N)
    e_used = (gauge_e(P) if e is None else DiffPoly.lift(e)) if N == 2 else DiffPoly()
    S = StringFunctional(LocalDensity(body), N, P, e_used)
    if N == 2 and derive_f2:
        S = StringFunctional(S.density, N, P, e_used, build_f2(S))
    return S


def t0_residual(S: StringFunctional, include_f2: bool = True) -> DiffPoly:
    """δS_f/δu at t = 0, u = φ in preimage form."""
    chains = S.chains()
    if not include_f2:
        chains.pop("f2", None)
        chains["f2"] = [None] + [DiffPoly()] * MAX_F_ORDER
    return substitute_preimage(drop_t(S.variational_derivative()), chains)


def build_f1(P: PerturbationData) -> DiffPoly:
    """f1' in preimage form (x, u-jets); see ``to_f_form`` for the form in f and c."""
    return f1_prime_preimage(P)


def build_f2(S: StringFunctional) -> DiffPoly:
    """Derive f2' from δS_f/δu|_{t=0,u=φ} = 0 at order eps⁴ (f2 enters only as −f2')."""
    if S.N != 2:
        raise ValueError("f2 only exists for N = 2")
    probe = StringFunctional(S.density, 2, S.P, S.e, None)
    chains = probe.chains()
    chains["f2"] = [None] + [DiffPoly()] * MAX_F_ORDER
    r4 = substitute_preimage(drop_t(probe.variational_derivative()), chains).eps_coeff(4)
    return r4


# --- f-form conversion -----------------------------------------------------------

def to_f_form(P: PerturbationData, preimage: DiffPoly, max_jet: int = 12) -> DiffPoly:
    """Rewrite a preimage form as a function of v through f, c and w = 1/(cf')'.

    Uses x = c f'(v) and φ_x = w(v), φ^(k+1) = w · d/dv φ^(k).
    """
    w_gen = FuncSymbol("w", 0, "u")
    f = DiffPoly.gen(F_SYM)
    cf2 = fderiv(P.c * d_du(f), 2)
    w = DiffPoly.gen(w_gen)

    def ddv(e: DiffPoly) -> DiffPoly:
        out = d_du(e)
        # d/du misses w since it carries no rewrite on the plain symbol
        pw = e.pdiff(w_gen)
        if pw:
            out = out + pw * (-(w ** 2) * cf2)
        return out

    jets = [None, w]
    while len(jets) <= max_jet:
        jets.append(w * ddv(jets[-1]))

    def fn(g):
        if g == X:
            return P.c * d_du(f)
        if isinstance(g, JetVar) and g.field == "u" and g.order >= 1:
            return jets[g.order]
        return None

    return preimage.map_generators(fn)


def f1_display(P: PerturbationData) -> DiffPoly:
    """(1/(2c)) d²/dv² (c w) in the f-form, for comparison with ``to_f_form(build_f1)``."""
    w_gen = FuncSymbol("w", 0, "u")
    f = DiffPoly.gen(F_SYM)
    cf2 = fderiv(P.c * d_du(f), 2)
    w = DiffPoly.gen(w_gen)

    def ddv(e):
        out = d_du(e)
        pw = e.pdiff(w_gen)
        if pw:
            out = out + pw * (-(w ** 2) * cf2)
        return out

    return Fraction(1, 2) * P.c ** -1 * ddv(ddv(P.c * w))


# --- reports -------------------------------------------------------------------------

@dataclass(frozen=True)
class StringResidualReport:
    commutation: dict
    initial: dict
    N: int

    @property
    def passed(self) -> bool:
        return all(self.commutation.values()) and all(self.initial.values())

    def as_dict(self) -> dict:
        return {"N": self.N,
                "2stcomm": {f"eps^{k}": v for k, v in self.commutation.items()},
                "2stt0": {f"eps^{k}": v for k, v in self.initial.items()},
                "pass": self.passed}


def verify_string_conditions(S: StringFunctional) -> StringResidualReport:
    eps_max = 2 * S.N
    comm = commutation_residual(S.density, hamiltonian(S.P).density, eps_max)
    t0 = t0_residual(S)
    orders = range(0, eps_max + 1, 2)
    return StringResidualReport({k: comm.eps_coeff(k).is_zero() for k in orders},
                                {k: t0.eps_coeff(k).is_zero() for k in orders}, S.N)


# --- explicit string equation ---------------------------------------------------------

def explicit_string_equation(S: StringFunctional) -> DiffPoly:
    """δS_f/δu through eps², with f1' left as the symbol f1'(u)."""
    return S.variational_derivative().truncate(2)


def displayed_string_equation(P: PerturbationData, literal: bool = False) -> DiffPoly:
    """The eps² string equation written out in closed form.

    With ``literal=True`` the term (1/2)(c f''')' u_x² carries a plus sign as it
    is commonly printed; the default has the minus sign the variational
    derivative actually produces.
    """
    c = P.c
    ci = c ** -1
    x, t = DiffPoly.gen(X), DiffPoly.gen(T)
    f = DiffPoly.gen(F_SYM)
    f1 = fderiv(f, 1)
    f3 = fderiv(f, 3)
    u1, u2 = jv(1), jv(2)

    def block(G):
        g = c * fderiv(G, 2)
        return g * u2 + Fraction(1, 2) * d_du(g) * u1 ** 2

    sign = 1 if literal else -1
    order0 = ci * (x + t * P.a - c * f1)
    order2 = (x * block(ci) + c * fderiv(ci, 2) * u1 - c * f3 * u2
              + sign * Fraction(1, 2) * d_du(c * f3) * u1 ** 2 - DiffPoly.gen(FuncSymbol("f1", 1))
              + t * block(P.a * ci))
    return order0 + EPS_P ** 2 * order2


__all__ = [
    "ObstructionError", "StringFunctional", "StringResidualReport", "check_cp_constraint", "gauge_e",
    "gauge_e_display", "solve_e", "build_S0", "s0_density", "s0_residual", "uniqueness_rank", "assemble",
    "build_f1", "build_f2", "t0_residual", "verify_string_conditions", "explicit_string_equation",
    "displayed_string_equation", "to_f_form", "f1_display", "preimage_chain", "substitute_preimage",
    "f_prime_preimage", "f1_prime_preimage", "hamiltonian_f", "F_SYM", "F1_SYM", "F2_SYM",
]
