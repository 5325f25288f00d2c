"""Exact symbolic calculus on densities of local functionals."""

from .calculus import (
    Dx,
    ExplicitXError,
    LocalDensity,
    bracket_residual,
    commutation_residual,
    d_du,
    epsilon_truncate,
    eps_part,
    euler_lagrange,
    evolve,
    explicit_x_split,
    fderiv,
    gelfand_dikii_residual,
    lie_action,
    max_jet,
    partial_jet,
    pdiff,
    total_x_derivative,
    variational_derivative,
    variational_derivative_x_affine,
)
from .diffpoly import DiffPoly, dsum
from .generators import EPS, LAM, T, X, Const, FuncSymbol, JetVar, jet
from .jetexpr import (
    NotPolynomialError,
    ZeroTestInconclusive,
    from_sympy,
    lambdify,
    sym,
    to_sympy,
    zero_test,
)
from .normal_form import NotStringShapeError, normal_form, normal_form_parts
from .sexpr import from_sexpr, to_sexpr, to_text

__all__ = [
    "normal_form", "normal_form_parts", "NotStringShapeError",
    "Const", "DiffPoly", "Dx", "EPS", "ExplicitXError", "FuncSymbol", "JetVar", "LAM", "LocalDensity",
    "NotPolynomialError", "T", "X", "ZeroTestInconclusive", "bracket_residual", "commutation_residual",
    "d_du", "dsum", "eps_part", "epsilon_truncate", "euler_lagrange", "evolve", "explicit_x_split",
    "fderiv", "from_sexpr", "from_sympy", "gelfand_dikii_residual", "jet", "lambdify", "lie_action",
    "max_jet", "partial_jet", "pdiff", "sym", "to_sexpr", "to_sympy", "to_text", "total_x_derivative",
    "variational_derivative", "variational_derivative_x_affine", "zero_test",
]
