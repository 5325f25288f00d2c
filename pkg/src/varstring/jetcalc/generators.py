"""Atomic generators of the jet algebra.

Three kinds of atoms appear in densities:

* ``JetVar(field, k)``: the k-th x-derivative of a dependent field (``u``,
  ``v0``, ``v1``, ...).
* ``FuncSymbol(name, k, arg)``: the k-th derivative of a one-variable
  function evaluated at the field ``arg``; e.g. ``h'''(u)``.
* ``Const(name)``: scalar parameters and independent variables
  (``x``, ``t``, ``eps``, ``lam``, ...).

Generators are immutable and hashable.  A function symbol may carry a
``rewrite`` rule for its first derivative (``r' -> 1/c``); such a symbol is
only ever materialised at derivative order zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Union

if TYPE_CHECKING:  # pragma: no cover
    from .diffpoly import DiffPoly

_KIND_RANK = {"const": 0, "func": 1, "jet": 2}
_CONST_ORDER = {"eps": 0, "x": 1, "t": 2}


def jet_suffix(k: int) -> str:
    if k == 0:
        return ""
    if k <= 4:
        return "_" + "x" * k
    return f"_{k}x"


def prime_suffix(k: int) -> str:
    if k <= 3:
        return "'" * k
    return f"^({k})"


@dataclass(frozen=True)
class JetVar:
    field: str = "u"
    order: int = 0

    @property
    def kind(self) -> str:
        return "jet"

    @property
    def name(self) -> str:
        return self.field + jet_suffix(self.order)

    def sort_key(self) -> tuple:
        return (_KIND_RANK["jet"], self.field, self.order)

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class FuncSymbol:
    """Derivative of a scalar function, evaluated at a field.

    The rewrite rule takes part in equality and hashing, so that caches
    never mix up two defined symbols that share a name but not a rule.
    """

    base: str
    order: int = 0
    arg: str = "u"
    rewrite: Any = field(default=None, repr=False)

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("derivative order must be non-negative")
        if self.rewrite is not None and self.order != 0:
            raise ValueError(f"symbol {self.base} has a rewrite rule; it cannot carry order {self.order}")

    @property
    def kind(self) -> str:
        return "func"

    @property
    def name(self) -> str:
        return f"{self.base}{prime_suffix(self.order)}({self.arg})"

    def sort_key(self) -> tuple:
        return (_KIND_RANK["func"], self.base, self.arg, self.order)

    def derivative(self) -> "FuncSymbol":
        if self.rewrite is not None:
            raise ValueError(f"{self.base} is a defined symbol; use its rewrite rule")
        return FuncSymbol(self.base, self.order + 1, self.arg)

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    name: str

    @property
    def kind(self) -> str:
        return "const"

    def sort_key(self) -> tuple:
        return (_KIND_RANK["const"], _CONST_ORDER.get(self.name, 9), self.name)

    def __repr__(self) -> str:
        return self.name


Generator = Union[JetVar, FuncSymbol, Const]

X = Const("x")
T = Const("t")
EPS = Const("eps")
LAM = Const("lam")


def jet(k: int = 0, field: str = "u") -> JetVar:
    return JetVar(field, k)


def weight(g: Generator) -> int:
    """Differential degree: ``deg u^(j) = j``; everything else has degree 0."""
    return g.order if isinstance(g, JetVar) else 0
