"""Exact rational arithmetic, polynomials, rational functions and their parser."""

from fractions import Fraction as BigRational

from geoflow.expr.compile import CompiledFunctions, compile_functions
from geoflow.expr.parser import (
    ExpressionError,
    ExpressionTree,
    Node,
    parse_expression,
    parse_polynomial,
    parse_rational,
    to_rational_function,
)
from geoflow.expr.polynomial import Polynomial, as_fraction
from geoflow.expr.rational import PoleError, RationalFunction


def differentiate(f: RationalFunction, var: str) -> RationalFunction:
    return f.diff(var)


def evaluate_exact(f: RationalFunction, point):
    return f.evaluate_exact(point)


def evaluate_float(f: RationalFunction, point) -> float:
    return f.evaluate_float(point)


def equals(f, g) -> bool:
    return RationalFunction.lift(f, getattr(g, "vars", ())).equals(g)


def to_text(f) -> str:
    return f.to_text()


__all__ = [
    "BigRational",
    "CompiledFunctions",
    "ExpressionError",
    "ExpressionTree",
    "Node",
    "PoleError",
    "Polynomial",
    "RationalFunction",
    "as_fraction",
    "compile_functions",
    "differentiate",
    "equals",
    "evaluate_exact",
    "evaluate_float",
    "parse_expression",
    "parse_polynomial",
    "parse_rational",
    "to_rational_function",
    "to_text",
]
