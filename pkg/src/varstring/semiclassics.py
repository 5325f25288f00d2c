"""Characteristics and the semiclassical corrections v1, v2.

The dispersionless solution is computed in label form: a characteristic
starting at X carries v0 = φ(X) to the point x = X − t·a(φ(X)), a = h''.  For
t < t_c the map X ↦ x is strictly increasing, so v0(x, t) = φ(X(x, t)) with
X found by safeguarded Newton.  Jets of v0 come from truncated Taylor series
of φ and a composed and inverted in power-series arithmetic.

The corrections are explicit rational expressions in (t, v0, v0_x, ...):

    v1 = D_x δK1/δu,   v2 = D_x δK3/δu + ½ {D_x δK1/δu, K1},

both evaluated at u = v0.  The symbolic layer builds them once per model;
the numeric layer lambdifies them over jet arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import sympy as sp

from .jetcalc import (
    T,
    Const,
    DiffPoly,
    FuncSymbol,
    JetVar,
    LocalDensity,
    evolve,
    lie_action,
    total_x_derivative,
    variational_derivative,
)
from .jetcalc.jetexpr import gen_of_symbol, lambdify, sym, to_sympy
from .perturb import PerturbationData, displayed_transport, rebase
from .stringeq import ObstructionError, check_cp_constraint

USYM = sp.Symbol("u")
XSYM = sp.Symbol("x")
MAX_JET = 8


class OutsideDomainError(ValueError):
    """No characteristic from the monotone interval reaches the requested point."""


class NearCausticError(ValueError):
    """|1 + t a'(φ) φ_x| fell below the caustic floor."""


# --- closed forms -------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarFunction:
    """A closed-form function of one variable with cached numeric derivatives."""

    expr: sp.Expr
    var: sp.Symbol = USYM

    @lru_cache(maxsize=None)
    def derivative_expr(self, k: int) -> sp.Expr:
        return sp.diff(self.expr, self.var, k) if k else self.expr

    @lru_cache(maxsize=None)
    def _fn(self, k: int):
        return sp.lambdify(self.var, self.derivative_expr(k), modules="numpy")

    def __call__(self, v, k: int = 0):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(np.asarray(self._fn(k)(v), dtype=float), v.shape).copy()

    def derivs(self, v, m: int) -> np.ndarray:
        """Array of shape (m+1, *v.shape) with the 0..m-th derivatives."""
        return np.stack([self(v, k) for k in range(m + 1)])


def bind_closed_forms(expr, P: PerturbationData) -> sp.Expr:
    """Replace function symbols and named constants by the closed forms bound on P.

    ``P.closed_forms`` maps a base name to a sympy expression in ``u``; the
    key ``"a"`` binds h'' (so h^(k) ↦ a^(k−2)).  Constants such as λ or κ1 are
    bound by name to numbers.
    """
    expr = to_sympy(expr) if isinstance(expr, DiffPoly) else sp.sympify(expr)
    cf = P.closed_forms
    u0 = sym(JetVar("u", 0))
    repl = {}
    for s in expr.free_symbols:
        g = gen_of_symbol(s)
        if isinstance(g, FuncSymbol):
            if g.base in cf:
                repl[s] = sp.diff(sp.sympify(cf[g.base]), USYM, g.order).subs(USYM, u0)
            elif g.base == "h" and "a" in cf and g.order >= 2:
                repl[s] = sp.diff(sp.sympify(cf["a"]), USYM, g.order - 2).subs(USYM, u0)
            else:
                raise KeyError(f"no closed form bound for {g.name}")
        elif isinstance(g, Const) and g.name in cf:
            repl[s] = sp.sympify(cf[g.name])
    return expr.xreplace(repl)


def closed_a(P: PerturbationData) -> ScalarFunction:
    """a = h'' as a closed form in u."""
    u0 = sym(JetVar("u", 0))
    a = bind_closed_forms(P.a, P).subs(u0, USYM)
    return ScalarFunction(sp.sympify(a))


def closed_coefficient(P: PerturbationData, value) -> ScalarFunction:
    u0 = sym(JetVar("u", 0))
    return ScalarFunction(sp.sympify(bind_closed_forms(value, P).subs(u0, USYM)))


# --- initial data -------------------------------------------------------------------

@dataclass(frozen=True)
class InitialData:
    """φ as a closed form in x, with the interval on which it is used.

    ``period`` marks data meant for the periodic solver; ``interval`` is the
    monotone interval used when binding the string equation.
    """

    expr: sp.Expr
    interval: tuple = (-math.inf, math.inf)
    period: float | None = None

    @cached_property
    def fn(self) -> ScalarFunction:
        return ScalarFunction(sp.sympify(self.expr), XSYM)

    def __call__(self, x, k: int = 0):
        return self.fn(x, k)

    def derivs(self, x, m: int) -> np.ndarray:
        return self.fn.derivs(x, m)

    def sample_domain(self, n: int = 20001) -> np.ndarray:
        if self.period is not None:
            return np.linspace(0.0, self.period, n, endpoint=False)
        lo, hi = self.interval
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("finite interval or period required")
        return np.linspace(lo, hi, n)


def critical_time(D: InitialData, P: PerturbationData, n: int = 20001) -> float:
    """t_c = 1 / max(φ_x a'(φ)) over the positive set; +inf when that set is empty."""
    from scipy.optimize import minimize_scalar

    a = closed_a(P)
    xs = D.sample_domain(n)
    g = D(xs, 1) * a(D(xs), 1)
    i = int(np.argmax(g))
    if g[i] <= 0:
        return math.inf
    h = xs[1] - xs[0]
    lo, hi = xs[max(i - 1, 0)] - (h if i == 0 else 0), xs[min(i + 1, len(xs) - 1)] + (h if i == len(xs) - 1 else 0)
    res = minimize_scalar(lambda x: -float(D(np.array([x]), 1)[0] * a(D(np.array([x])), 1)[0]),
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-14})
    peak = max(-res.fun, g[i])
    return 1.0 / peak


# --- truncated power series ---------------------------------------------------------

def _series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m = a.shape[0] - 1
    out = np.zeros_like(a)
    for i in range(m + 1):
        out[i:] += a[i] * b[: m + 1 - i]
    return out


def _series_compose(fderivs: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Σ_k f^(k)/k! · inner^k for a series ``inner`` with zero constant term."""
    m = inner.shape[0] - 1
    out = np.zeros_like(inner)
    out[0] = fderivs[0]
    power = np.zeros_like(inner)
    power[0] = 1.0
    for k in range(1, m + 1):
        power = _series_mul(power, inner)
        out += fderivs[k] / math.factorial(k) * power
    return out


def _series_revert(y: np.ndarray) -> np.ndarray:
    """Inverse series s(y) of y(s) = y1 s + y2 s² + ... (zero constant term)."""
    m = y.shape[0] - 1
    s = np.zeros_like(y)
    s[1] = 1.0 / y[1]
    for _ in range(m):
        comp = np.zeros_like(y)
        power = np.zeros_like(y)
        power[0] = 1.0
        for k in range(1, m + 1):
            power = _series_mul(power, s)
            comp += y[k] * power
        # Newton-free fixed point: s ← s + (id − y∘s)/y1
        ident = np.zeros_like(y)
        ident[1] = 1.0
        s = s + (ident - comp) / y[1]
    return s


# --- characteristics ------------------------------------------------------------------

@dataclass(frozen=True)
class CharacteristicSolution:
    """v0 by characteristics for a = h'' bound in closed form."""

    P: PerturbationData
    D: InitialData
    tol: float = 1e-13
    caustic_floor: float = 1e-6
    max_iter: int = 200

    @cached_property
    def a(self) -> ScalarFunction:
        return closed_a(self.P)

    @cached_property
    def t_c(self) -> float:
        return critical_time(self.D, self.P)

    @cached_property
    def _a_bound(self) -> float:
        xs = self.D.sample_domain()
        return float(np.max(np.abs(self.a(self.D(xs)))))

    def _bracket(self, x: np.ndarray, t: float):
        if self.D.period is not None:
            b = abs(t) * self._a_bound * 1.01 + 1e-12
            return x - b, x + b
        lo, hi = self.D.interval
        return np.full_like(x, lo), np.full_like(x, hi)

    def labels(self, x, t: float) -> np.ndarray:
        """Characteristic labels X with X − t a(φ(X)) = x (safeguarded Newton)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo, hi = self._bracket(x, t)

        def F(X):
            return X - t * self.a(self.D(X)) - x

        flo, fhi = F(lo), F(hi)
        if np.any(flo > 0) or np.any(fhi < 0):
            raise OutsideDomainError("root not bracketed by the monotone interval")
        X = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), x)
        X = np.clip(X, lo, hi)
        for _ in range(self.max_iter):
            f = F(X)
            lo = np.where(f < 0, X, lo)
            hi = np.where(f > 0, X, hi)
            dF = 1.0 - t * self.a(self.D(X), 1) * self.D(X, 1)
            step = np.where(np.abs(dF) > 0, f / np.where(dF == 0, 1.0, dF), np.inf)
            Xn = X - step
            bad = ~np.isfinite(Xn) | (Xn <= lo) | (Xn >= hi)
            Xn = np.where(bad, 0.5 * (lo + hi), Xn)
            done = np.abs(Xn - X) <= self.tol * (1.0 + np.abs(X))
            X = Xn
            if np.all(done):
                break
        slope = 1.0 - t * self.a(self.D(X), 1) * self.D(X, 1)
        if np.any(slope < self.caustic_floor):
            raise NearCausticError("characteristics are too close to crossing")
        return X

    def solve_v0(self, x, t: float) -> np.ndarray:
        return self.D(self.labels(x, t))

    def residual(self, x, t: float) -> np.ndarray:
        """x + t a(v0) − g'(v0), with g'(v0) = X on the monotone branch."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        X = self.labels(x, t)
        return x + t * self.a(self.D(X)) - X

    def jets_v0(self, x, t: float, m: int = 7) -> np.ndarray:
        """Array (m+1, n): v0, v0_x, ..., v0^(m) at the points x."""
        X = self.labels(x, t)
        phi = self.D.derivs(X, m)
        # series in s = X' − X
        phi_s = np.stack([phi[k] / math.factorial(k) for k in range(m + 1)])
        inner = phi_s.copy()
        inner[0] = 0.0
        a_derivs = self.a.derivs(phi[0], m)
        a_of_phi = _series_compose(a_derivs, inner)
        xs = -t * a_of_phi
        xs[1] += 1.0
        xs[0] = 0.0
        s_of_y = _series_revert(xs)
        v = _series_compose(phi, s_of_y)
        return np.stack([v[k] * math.factorial(k) for k in range(m + 1)])


# --- symbolic corrections ----------------------------------------------------------------

def _u(k: int):
    return sym(JetVar("u", k))


def _coeffs(P: PerturbationData, bind: bool):
    """c, h''', ... as sympy expressions in the jet symbol u (optionally bound)."""
    from .jetcalc import fderiv

    out = {"c": P.c, "s": P.s, "lam": P.lam}
    for k in range(3, 7):
        out[f"h{k}"] = fderiv(P.h, k)
    out = {k: to_sympy(v) for k, v in out.items()}
    if bind:
        out = {k: bind_closed_forms(v, P) for k, v in out.items()}
    return out


def _d(e, k: int = 1):
    """d/du of a function of u (chain rule through function symbols)."""
    from .jetcalc import fderiv

    return fderiv(e, k)


def k1_density(P: PerturbationData, bind: bool = False) -> sp.Expr:
    C = _coeffs(P, bind)
    t = sym(T)
    return -sp.Rational(1, 2) * C["c"] * _u(1) * sp.log(1 + t * C["h3"] * _u(1))


def k3_density(P: PerturbationData, bind: bool = False) -> sp.Expr:
    """K3 for perturbations with p = (3/5)cc' + λc³."""
    C = _coeffs(P, bind)
    c, s, lam = C["c"], C["s"], C["lam"]
    h3, h4, h5, h6 = C["h3"], C["h4"], C["h5"], C["h6"]
    c1, c2, c3, c4 = (_d(c, k) for k in (1, 2, 3, 4))
    t = sym(T)
    ux, uxx = _u(1), _u(2)
    w = 1 + t * h3 * ux
    R = sp.Rational
    ch = c / h3 ** 2
    third = _d(ch, 3)
    terms = [
        -(third + c3 / h3 ** 2) * c * ux * sp.log(w) / (8 * t ** 2),
        -R(1, 40) * c ** 2 * h3 ** 3 * t ** 3 * uxx ** 3 * (5 + 5 * t * h3 * ux + t ** 2 * h3 ** 2 * ux ** 2) / w ** 5,
        R(3, 40) * c ** 2 * t * h4 * uxx ** 2 * (4 + 10 * t * h3 * ux + 5 * t ** 2 * h3 ** 2 * ux ** 2) / w ** 5,
        R(1, 2) * t * h3 * s * ux ** 4 * (2 + t * h3 * ux) / w ** 2,
        R(1, 20) * (3 * c * c1 + 5 * lam * c ** 3) * t * h3 * uxx ** 2 * (2 + t * h3 * ux)
        * (2 + 2 * t * h3 * ux + t ** 2 * h3 ** 2 * ux ** 2) / w ** 4,
        -t * ux ** 4 * (c1 / 20 + lam / 12 * c ** 2)
        * ((2 * c * h5 + 6 * c1 * h4) / w ** 3 - 3 * t * c * h4 ** 2 * ux / w ** 4),
    ]
    bracket = (
        12 * c ** 2 * h4 ** 3 / (h3 ** 4 * w ** 5)
        + 3 * c * h4 * (3 * h3 * h4 * c1 + 3 * h5 * h3 * c - 16 * c * h4 ** 2) / (h3 ** 4 * w ** 4)
        - 3 * h4 * (8 * c * c2 * h3 ** 2 - 4 * c ** 2 * h4 ** 2 + 9 * c * c1 * h3 * h4 + 9 * c ** 2 * h3 * h5
                    - 16 * c1 ** 2 * h3 ** 2) / (h3 ** 4 * w ** 3)
        - (96 * c1 ** 2 * h3 ** 2 * h4 - 48 * c * c2 * h3 ** 2 * h4 + 63 * c * c1 * h3 * h4 ** 2
           + 5 * c * c3 * h3 ** 3) / (h3 ** 4 * w ** 2)
        + (252 * c ** 2 * h4 ** 3 - 63 * c ** 2 * h3 * h4 * h5) / (h3 ** 4 * w ** 2)
        + (-30 * c ** 2 * h3 ** 2 * h6 + 441 * c ** 2 * h3 * h4 * h5) / (h3 ** 4 * w)
        - (90 * c * c1 * h3 ** 2 * h5 - 441 * c * c1 * h3 * h4 ** 2 + 768 * c ** 2 * h4 ** 3
           + 114 * c * c2 * h3 ** 2 * h4) / (h3 ** 4 * w)
        + (48 * c1 ** 2 * h3 ** 2 * h4 + 35 * c * c3 * h3 ** 3) / (h3 ** 4 * w)
        + 180 * c * h4 / h3 ** 3 * _d(c * h4) - 90 * c / h3 ** 2 * _d(c1 * h4)
        - 30 * c ** 2 * h6 / h3 ** 2 - 180 * c ** 2 * h4 ** 3 / h3 ** 4 + 35 * c * c3 / h3
        - 5 * c * c3 / h3 * w
    )
    terms.append(ux ** 2 / (240 * t) * bracket)
    del c4
    return sp.Add(*terms)


def k3_density_reduced(P: PerturbationData, bind: bool = False) -> sp.Expr:
    """K3 written out for h'' = u."""
    C = _coeffs(P, bind)
    c, s, lam = C["c"], C["s"], C["lam"]
    c1, c3 = _d(c, 1), _d(c, 3)
    t = sym(T)
    ux, uxx = _u(1), _u(2)
    w = 1 + t * ux
    R = sp.Rational
    return (-R(1, 4) * c * c3 * ux * sp.log(w) / t ** 2
            - R(1, 40) * t ** 3 * c ** 2 * uxx ** 3 * (5 + 5 * t * ux + t ** 2 * ux ** 2) / w ** 5
            + R(1, 20) * t * c * (3 * c1 + 5 * c ** 2 * lam) * uxx ** 2 * (2 + t * ux)
            * (2 + 2 * t * ux + t ** 2 * ux ** 2) / w ** 4
            + R(1, 48) * ux ** 2 * (2 + t * ux) * (c * c3 * (6 + 6 * t * ux - t ** 2 * ux ** 2) + 24 * s * t ** 2 * ux ** 2)
            / (t * w ** 2))


def k_densities(P: PerturbationData, bind: bool = False):
    return LocalDensity(k1_density(P, bind)), LocalDensity(k3_density(P, bind))


def v1_formula(P: PerturbationData, bind: bool = False) -> sp.Expr:
    """The closed formula for v1 in terms of the jets of v0 (written in u)."""
    C = _coeffs(P, bind)
    c, h3 = C["c"], C["h3"]
    t = sym(T)
    ux, uxx = _u(1), _u(2)
    num = (_d(c * h3) * ux ** 2 + 2 * c * h3 * uxx + t * c * h3 ** 2 * ux * uxx + t * _d(c) * h3 ** 2 * ux ** 3)
    return t / 2 * total_x_derivative(num / (1 + t * h3 * ux) ** 2)


def v1_from_k1(P: PerturbationData, bind: bool = False) -> sp.Expr:
    return total_x_derivative(variational_derivative(LocalDensity(k1_density(P, bind))))


def v2_from_k(P: PerturbationData, bind: bool = False, k3: sp.Expr | None = None) -> sp.Expr:
    K1 = LocalDensity(k1_density(P, bind))
    K3 = LocalDensity(k3_density(P, bind) if k3 is None else k3)
    v1 = total_x_derivative(variational_derivative(K1))
    return total_x_derivative(variational_derivative(K3)) + sp.Rational(1, 2) * lie_action(v1, K1)


def kdv_example_v1() -> sp.Expr:
    t = sym(T)
    w = 1 + t * _u(1)
    return sp.Rational(1, 2) * total_x_derivative(sp.log(w) - 1 / w, 2)


def kdv_example_v2(literal: bool = False) -> sp.Expr:
    """The eps⁴ coefficient of the KdV example.

    ``literal=True`` reproduces the middle term without its (v0_xx)² factor, as
    commonly printed; that version is not homogeneous and is kept for the record.
    """
    t = sym(T)
    ux, uxx = _u(1), _u(2)
    w = 1 + t * ux
    R = sp.Rational
    middle = R(3, 10) * (20 + 15 * t * ux + 3 * t ** 2 * ux ** 2) / w ** 5
    if not literal:
        middle = middle * uxx ** 2
    inner = (-t ** 2 / 10 * (5 + t * ux) * uxx ** 3 / w ** 5 + t * total_x_derivative(middle)
             + total_x_derivative((2 + t * ux) ** 2 / w ** 4 * uxx, 2))
    return t ** 2 / 8 * total_x_derivative(inner, 2)


def time_derivative(xi: sp.Expr, P: PerturbationData, bind: bool = False) -> sp.Expr:
    """∂_t of ξ(t, v0, v0_x, ...) along v0_t = a(v0) v0_x."""
    a = to_sympy(P.a)
    if bind:
        a = bind_closed_forms(a, P)
    return sp.diff(xi, sym(T)) + evolve(xi, a * _u(1))


def transport_residual_symbolic(P: PerturbationData, order: int, xi1, xi2=None, bind: bool = False) -> sp.Expr:
    """∂_t ξ^k − (transport right-hand side) with v1 = ξ1, v2 = ξ2 (all in u-jets)."""
    rhs = to_sympy(displayed_transport(P, order))
    rep = {}
    for s in rhs.free_symbols:
        g = gen_of_symbol(s)
        if isinstance(g, JetVar) and g.field in ("v0", "v1", "v2"):
            src = {"v0": _u(0), "v1": xi1, "v2": xi2}[g.field]
            rep[s] = total_x_derivative(src, g.order) if g.order else src
        elif isinstance(g, FuncSymbol) and g.arg == "v0":
            rep[s] = sym(FuncSymbol(g.base, g.order, "u", _unrebase(g.rewrite)))
    rhs = rhs.xreplace(rep)
    if bind:
        rhs = bind_closed_forms(rhs, P)
    xi = xi1 if order == 1 else xi2
    return time_derivative(xi, P, bind) - rhs


def _unrebase(rule):
    return rebase(rule, "v0", "u") if isinstance(rule, DiffPoly) else rule


# --- numeric evaluation --------------------------------------------------------------------

def cp_relation_holds(P: PerturbationData) -> bool:
    """Whether the bound closed forms satisfy p = (3/5)cc' + λc³ (the condition for K3)."""
    res = check_cp_constraint(P)
    if res.is_zero():
        return True
    try:
        bound = bind_closed_forms(res, P)
    except KeyError:
        return False  # symbolic p, c with a nonzero residual
    return sp.simplify(bound) == 0


def _jet_symbols(m: int):
    return [JetVar("u", k) for k in range(m + 1)]


@dataclass(frozen=True)
class CompiledExpr:
    """A jet expression compiled to numpy: call with jets (m+1, n) and t."""

    expr: sp.Expr
    m: int = MAX_JET

    @cached_property
    def _fn(self):
        gens = _jet_symbols(self.m) + [T]
        fn, _ = lambdify(self.expr, gens)
        return fn

    def __call__(self, jets: np.ndarray, t: float) -> np.ndarray:
        args = [jets[k] if k < jets.shape[0] else np.zeros_like(jets[0]) for k in range(self.m + 1)]
        out = self._fn(*args, t)
        return np.broadcast_to(np.asarray(out, dtype=float), jets[0].shape).copy()


@dataclass(frozen=True)
class Corrections:
    """Compiled v1 (two routes) and v2 for one perturbation with closed forms bound."""

    P: PerturbationData

    @cached_property
    def v1(self) -> CompiledExpr:
        return CompiledExpr(v1_formula(self.P, bind=True))

    @cached_property
    def v1_k1(self) -> CompiledExpr:
        return CompiledExpr(v1_from_k1(self.P, bind=True))

    @cached_property
    def v2_expr(self) -> sp.Expr:
        if not cp_relation_holds(self.P):
            raise ObstructionError("v2 needs p = (3/5)cc' + λc³ for the bound closed forms")
        if self.P.name == "kdv":
            return v2_from_k(self.P, bind=True, k3=k3_density_reduced(self.P, bind=True))
        return v2_from_k(self.P, bind=True)

    @cached_property
    def v2(self) -> CompiledExpr:
        return CompiledExpr(self.v2_expr)

    @cached_property
    def v1_jets(self) -> list:
        base = v1_formula(self.P, bind=True)
        return [CompiledExpr(total_x_derivative(base, k) if k else base) for k in range(4)]


def compute_v1(S: CharacteristicSolution, x, t: float, route: str = "formula") -> np.ndarray:
    jets = S.jets_v0(x, t, MAX_JET)
    C = _corrections(S.P)
    return (C.v1 if route == "formula" else C.v1_k1)(jets, t)


def compute_v2(S: CharacteristicSolution, x, t: float) -> np.ndarray:
    jets = S.jets_v0(x, t, MAX_JET)
    return _corrections(S.P).v2(jets, t)


_CORR_CACHE: dict = {}


def _corrections(P: PerturbationData) -> Corrections:
    key = id(P)
    hit = _CORR_CACHE.get(key)
    if hit is None or hit[0] is not P:
        hit = (P, Corrections(P))
        _CORR_CACHE[key] = hit
    return hit[1]


@dataclass(frozen=True)
class SeriesSolution:
    """v0, v1, v2 on a grid at one time."""

    x: np.ndarray
    t: float
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    def partial_sum(self, eps: float, order: int) -> np.ndarray:
        out = self.v0.copy()
        if order >= 1:
            out = out + eps ** 2 * self.v1
        if order >= 2:
            out = out + eps ** 4 * self.v2
        return out


def series_solution(S: CharacteristicSolution, x, t: float, with_v2: bool = True) -> SeriesSolution:
    x = np.asarray(x, dtype=float)
    jets = S.jets_v0(x, t, MAX_JET)
    C = _corrections(S.P)
    v2 = C.v2(jets, t) if with_v2 else np.zeros_like(x)
    return SeriesSolution(x, t, jets[0], C.v1(jets, t), v2)


def transport_fd_residual(S: CharacteristicSolution, x, t: float, dt: float, order: int = 1) -> np.ndarray:
    """∂_t v^k by central differences minus the transport right-hand side."""
    C = _corrections(S.P)
    target = C.v1 if order == 1 else C.v2
    dvdt = (target(S.jets_v0(x, t + dt, MAX_JET), t + dt) - target(S.jets_v0(x, t - dt, MAX_JET), t - dt)) / (2 * dt)
    rhs = _transport_rhs(S, x, t, order)
    return dvdt - rhs


def _v2_x(S: CharacteristicSolution, x, t: float, h: float = 1e-3) -> np.ndarray:
    """∂_x v2 by a fourth-order central difference (the symbolic derivative is too large to compile)."""
    C = _corrections(S.P)
    x = np.asarray(x, dtype=float)
    f = {k: C.v2(S.jets_v0(x + k * h, t, MAX_JET), t) for k in (-2, -1, 1, 2)}
    return (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * h)


def _transport_rhs(S: CharacteristicSolution, x, t: float, order: int) -> np.ndarray:
    P = S.P
    rhs = displayed_transport(P, order)
    jets = S.jets_v0(x, t, MAX_JET)
    C = _corrections(P)
    v1j = [f(jets, t) for f in C.v1_jets]
    v2 = C.v2(jets, t) if order == 2 else None
    v2x = _v2_x(S, x, t) if order == 2 else None
    coeffs = {}
    for g in rhs.generators():
        if isinstance(g, FuncSymbol):
            f = closed_coefficient(P, DiffPoly.gen(FuncSymbol(g.base, g.order, "u", _unrebase(g.rewrite))))
            coeffs[g] = f(jets[0])

    def val(g):
        if isinstance(g, JetVar):
            if g.field == "v0":
                return jets[g.order]
            if g.field == "v1":
                return v1j[g.order]
            if g.field == "v2":
                return v2 if g.order == 0 else v2x
        if isinstance(g, FuncSymbol):
            return coeffs[g]
        if isinstance(g, Const) and g.name in P.closed_forms:
            return float(P.closed_forms[g.name])
        raise KeyError(g)

    return np.asarray(rhs.evaluate(val), dtype=float) * np.ones_like(jets[0])


# --- quasi-triviality --------------------------------------------------------------------

@dataclass(frozen=True)
class QuasiTrivialityReport:
    xi: tuple
    denominators: tuple
    exponents: tuple
    pure_powers: bool
    finite_at_zero_slope: bool
    serialized: tuple = field(default=())


def _denominator_power(expr: sp.Expr):
    """Return (denominator, exponent) if the denominator is c·(1 + t u_x)^k, else (den, None)."""
    t, ux = sym(T), _u(1)
    num, den = sp.fraction(sp.together(expr))
    den = sp.factor(den)
    base = 1 + t * ux
    const, rest = den.as_coeff_Mul()
    if rest == 1:
        return den, 0
    b, e = rest.as_base_exp()
    if sp.expand(b - base) == 0 and e.is_Integer:
        return den, int(e)
    return den, None


def quasi_triviality_check(P: PerturbationData, order: int = 2, points: int = 25, seed: int = 7):
    """ξ1, ξ2 as rational functions of (t, v0_x, v0_xx, ...) with denominators (1 + t v0_x)^k."""
    from .jetcalc import to_sexpr

    # cancel, not together: the reported powers are then the minimal ones
    xis = [sp.cancel(sp.together(v1_from_k1(P, bind=True)))]
    if order >= 2:
        xis.append(sp.cancel(sp.together(v2_from_k(P, bind=True, k3=k3_density_reduced(P, bind=True)))))
    dens, exps = [], []
    for xi in xis:
        d, k = _denominator_power(xi)
        dens.append(d)
        exps.append(k)
    rng = np.random.default_rng(seed)
    finite = True
    for xi in xis:
        fn = CompiledExpr(xi)
        jets = rng.uniform(-1.0, 1.0, size=(MAX_JET + 1, points))
        jets[1] = 0.0
        vals = fn(jets, float(rng.uniform(0.1, 0.9)))
        finite = finite and bool(np.all(np.isfinite(vals)))
    return QuasiTrivialityReport(tuple(xis), tuple(dens), tuple(exps), all(e is not None for e in exps), finite,
                                 tuple(to_sexpr(sp.expand(sp.numer(x)) / sp.denom(x)) for x in xis))


__all__ = [
    "InitialData", "ScalarFunction", "CharacteristicSolution", "SeriesSolution", "Corrections", "CompiledExpr",
    "OutsideDomainError", "NearCausticError", "critical_time", "bind_closed_forms", "closed_a",
    "k1_density", "k3_density", "k3_density_reduced", "k_densities", "v1_formula", "v1_from_k1", "v2_from_k",
    "kdv_example_v1", "kdv_example_v2", "compute_v1", "compute_v2", "series_solution", "transport_fd_residual",
    "transport_residual_symbolic", "time_derivative", "quasi_triviality_check", "QuasiTrivialityReport",
]
