"""Exact rational functions over Q.

A RationalFunction stores its numerator as a Polynomial and its denominator
as a product of powers of primitive base polynomials, so that repeated
derivatives of expressions like ``1/(1+u^2+v^2)^2`` keep denominators of the
form ``base^k`` instead of swelling. Constants always live in the numerator.
Cancellation is by trial division against the known bases; no multivariate
gcd is computed, and ``equals`` never needs one.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Mapping, Sequence

from geoflow.expr.polynomial import Polynomial, as_fraction, merge_vars


class PoleError(ZeroDivisionError):
    """Raised when a denominator vanishes at an evaluation point."""


def _var_poly(vars, i):
    exp = [0] * len(vars)
    exp[i] = 1
    return Polynomial._raw(vars, {tuple(exp): Fraction(1)})


def _normalize_denominator(p: Polynomial, known: Sequence[Polynomial]):
    """Factor a nonzero polynomial as c * prod(base^e) using monomial factors and
    the already-known bases. Returns (c, {base: e})."""
    c, mono, rest = p.primitive()
    factors: dict = {}
    for i, e in enumerate(mono):
        if e:
            factors[_var_poly(p.vars, i)] = e
    if not rest.is_constant():
        for b in known:
            if b.is_constant() or b.total_degree() > rest.total_degree():
                continue
            while True:
                q = rest.exact_div(b)
                if q is None:
                    break
                factors[b] = factors.get(b, 0) + 1
                rest = q
                if rest.is_constant():
                    break
            if rest.is_constant():
                break
    if not rest.is_constant():
        rc, rmono, rest = rest.primitive()
        c = c * rc
        factors[rest] = factors.get(rest, 0) + 1
    else:
        c = c * rest.constant_value()
    return c, factors


class RationalFunction:
    """Immutable quotient num / prod(base^e) over an ordered variable tuple."""

    __slots__ = ("vars", "num", "factors")

    def __init__(self, num: Polynomial, den: Polynomial | None = None):
        vars = num.vars if den is None else merge_vars(num.vars, den.vars)
        num = num.with_vars(vars)
        if den is None:
            self.vars, self.num, self.factors = vars, num, ()
            return
        den = den.with_vars(vars)
        if den.is_zero():
            raise ZeroDivisionError("denominator is the zero polynomial")
        c, factors = _normalize_denominator(den, ())
        r = RationalFunction._make(vars, num.scale(1 / c), factors)
        self.vars, self.num, self.factors = r.vars, r.num, r.factors

    @classmethod
    def _make(cls, vars, num: Polynomial, factors: dict, cancel: bool = True):
        r = object.__new__(cls)
        r.vars = vars
        if num.is_zero():
            r.num, r.factors = num, ()
            return r
        if cancel:
            for b in list(factors):
                e = factors[b]
                while e > 0:
                    q = num.exact_div(b)
                    if q is None:
                        break
                    num = q
                    e -= 1
                factors[b] = e
        r.num = num
        r.factors = tuple(sorted(((b, e) for b, e in factors.items() if e > 0),
                                 key=lambda t: (t[0].total_degree(), t[0].to_text())))
        return r

    # constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, vars: Sequence[str], c) -> "RationalFunction":
        return cls(Polynomial.constant(tuple(vars), c))

    @classmethod
    def variable(cls, vars: Sequence[str], name: str) -> "RationalFunction":
        return cls(Polynomial.variable(tuple(vars), name))

    @classmethod
    def lift(cls, value, vars: Sequence[str]) -> "RationalFunction":
        if isinstance(value, RationalFunction):
            return value
        if isinstance(value, Polynomial):
            return cls(value)
        return cls.constant(vars, value)

    # structure ------------------------------------------------------------
    @property
    def den(self) -> Polynomial:
        out = Polynomial.constant(self.vars, 1)
        for b, e in self.factors:
            out = out * b ** e
        return out

    def with_vars(self, vars: Sequence[str]) -> "RationalFunction":
        vars = tuple(vars)
        if vars == self.vars:
            return self
        r = object.__new__(RationalFunction)
        r.vars = vars
        r.num = self.num.with_vars(vars)
        r.factors = tuple((b.with_vars(vars), e) for b, e in self.factors)
        return r

    def _coerce(self, other):
        if isinstance(other, RationalFunction):
            if other.vars == self.vars:
                return self, other
            vars = merge_vars(self.vars, other.vars)
            return self.with_vars(vars), other.with_vars(vars)
        if isinstance(other, Polynomial):
            return self._coerce(RationalFunction(other))
        if isinstance(other, (int, Fraction, Rational)):
            return self, RationalFunction.constant(self.vars, other)
        return NotImplemented

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_polynomial(self) -> bool:
        return not self.factors

    def is_constant(self) -> bool:
        return not self.factors and self.num.is_constant()

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError("not a constant")
        return self.num.constant_value()

    def used_vars(self) -> tuple:
        used = set(self.num.used_vars())
        for b, _ in self.factors:
            used.update(b.used_vars())
        return tuple(v for v in self.vars if v in used)

    # arithmetic -----------------------------------------------------------
    def _cofactor(self, target: dict) -> Polynomial:
        out = Polynomial.constant(self.vars, 1)
        own = dict(self.factors)
        for b, e in target.items():
            k = e - own.get(b, 0)
            if k:
                out = out * b ** k
        return out

    def __add__(self, other):
        co = self._coerce(other)
        if co is NotImplemented:
            return co
        a, b = co
        if a.is_zero():
            return b
        if b.is_zero():
            return a
        target = dict(a.factors)
        for base, e in b.factors:
            target[base] = max(target.get(base, 0), e)
        num = a.num * a._cofactor(target) + b.num * b._cofactor(target)
        return RationalFunction._make(a.vars, num, target)

    __radd__ = __add__

    def __neg__(self):
        r = object.__new__(RationalFunction)
        r.vars, r.num, r.factors = self.vars, -self.num, self.factors
        return r

    def __sub__(self, other):
        co = self._coerce(other)
        if co is NotImplemented:
            return co
        a, b = co
        return a + (-b)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            r = object.__new__(RationalFunction)
            r.vars, r.factors = self.vars, (self.factors if other else ())
            r.num = self.num.scale(other)
            return r
        co = self._coerce(other)
        if co is NotImplemented:
            return co
        a, b = co
        if a.is_zero() or b.is_zero():
            return RationalFunction.constant(a.vars, 0)
        target = dict(a.factors)
        for base, e in b.factors:
            target[base] = target.get(base, 0) + e
        return RationalFunction._make(a.vars, a.num * b.num, target)

    __rmul__ = __mul__

    def reciprocal(self) -> "RationalFunction":
        if self.is_zero():
            raise ZeroDivisionError("reciprocal of the zero rational function")
        known = [b for b, _ in self.factors]
        c, factors = _normalize_denominator(self.num, known)
        num = self.den.scale(1 / c)
        return RationalFunction._make(self.vars, num, factors)

    def __truediv__(self, other):
        co = self._coerce(other)
        if co is NotImplemented:
            return co
        a, b = co
        if b.is_zero():
            raise ZeroDivisionError("division by the identically-zero rational function")
        if b.is_constant():
            return a * (1 / b.constant_value())
        known = [base for base, _ in a.factors] + [base for base, _ in b.factors]
        c, bfactors = _normalize_denominator(b.num, known)
        target = dict(a.factors)
        for base, e in bfactors.items():
            target[base] = target.get(base, 0) + e
        num = a.num * b.den.scale(1 / c)
        return RationalFunction._make(a.vars, num, target)

    def __rtruediv__(self, other):
        co = self._coerce(other)
        if co is NotImplemented:
            return co
        a, b = co
        return b / a

    def __pow__(self, k: int):
        if not isinstance(k, int):
            raise ValueError("integer powers only")
        if k < 0:
            return self.reciprocal() ** (-k)
        if k == 0:
            return RationalFunction.constant(self.vars, 1)
        factors = {b: e * k for b, e in self.factors}
        return RationalFunction._make(self.vars, self.num ** k, factors, cancel=False)

    def equals(self, other) -> bool:
        """Exact identity test: the cross-multiplied difference expands to zero."""
        co = self._coerce(other)
        if co is NotImplemented:
            raise TypeError(f"cannot compare with {other!r}")
        a, b = co
        target = dict(a.factors)
        for base, e in b.factors:
            target[base] = max(target.get(base, 0), e)
        return (a.num * a._cofactor(target) - b.num * b._cofactor(target)).is_zero()

    def __eq__(self, other):
        if isinstance(other, (RationalFunction, Polynomial, int, Fraction)):
            return self.equals(other)
        return NotImplemented

    __hash__ = None

    # calculus -------------------------------------------------------------
    def diff(self, var: str) -> "RationalFunction":
        if var not in self.vars:
            raise ValueError(f"unknown variable {var!r}")
        involved = [(b, e) for b, e in self.factors if b.degree_in(var) > 0]
        if not involved:
            return RationalFunction._make(self.vars, self.num.diff(var), dict(self.factors))
        one = Polynomial.constant(self.vars, 1)
        prod_all = one
        for b, _ in involved:
            prod_all = prod_all * b
        num = self.num.diff(var) * prod_all
        for i, (b, e) in enumerate(involved):
            others = one
            for j, (b2, _) in enumerate(involved):
                if j != i:
                    others = others * b2
            num = num - self.num * b.diff(var) * others * e
        factors = dict(self.factors)
        for b, e in involved:
            factors[b] = e + 1
        return RationalFunction._make(self.vars, num, factors)

    # evaluation -----------------------------------------------------------
    def _values(self, point):
        if isinstance(point, Mapping):
            return [point[v] for v in self.vars]
        values = list(point)
        if len(values) != len(self.vars):
            raise ValueError(f"expected {len(self.vars)} values, got {len(values)}")
        return values

    def evaluate_exact(self, point) -> Fraction:
        values = [as_fraction(v) for v in self._values(point)]
        den = Fraction(1)
        for b, e in self.factors:
            bv = b.evaluate(values)
            if bv == 0:
                raise PoleError(f"denominator factor {b.to_text()} vanishes at {values}")
            den *= bv ** e
        return self.num.evaluate(values) / den

    def evaluate_float(self, point) -> float:
        values = [float(v) for v in self._values(point)]
        den = 1.0
        for b, e in self.factors:
            bv = b.evaluate(values)
            if bv == 0.0:
                raise PoleError(f"denominator factor {b.to_text()} vanishes at {values}")
            den *= bv ** e
        return float(self.num.evaluate(values)) / den

    def substitute(self, mapping: Mapping[str, "RationalFunction"]) -> "RationalFunction":
        """Compose: replace variables by rational functions (exact)."""
        if not mapping:
            return self
        vars = self.vars
        for v in mapping.values():
            if isinstance(v, (RationalFunction, Polynomial)):
                vars = merge_vars(vars, v.vars)
        subs = {}
        for name in self.vars:
            if name in mapping:
                subs[name] = RationalFunction.lift(mapping[name], vars).with_vars(vars)
            else:
                subs[name] = RationalFunction.variable(vars, name)
        out = _substitute_poly(self.num, subs, vars)
        for b, e in self.factors:
            out = out / _substitute_poly(b, subs, vars) ** e
        return out

    # printing -------------------------------------------------------------
    def to_text(self) -> str:
        num = self.num.to_text()
        if not self.factors:
            return num
        den = "*".join(
            f"({b.to_text()})" + (f"^{e}" if e > 1 else "") for b, e in self.factors
        )
        return f"({num})/({den})"

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        return f"RationalFunction({self.to_text()!r})"


def _substitute_poly(p: Polynomial, subs: dict, vars) -> RationalFunction:
    total = RationalFunction.constant(vars, 0)
    cache: dict = {}
    for exp, c in p.terms.items():
        term = RationalFunction.constant(vars, c)
        for name, e in zip(p.vars, exp):
            if e:
                key = (name, e)
                if key not in cache:
                    cache[key] = subs[name] ** e
                term = term * cache[key]
        total = total + term
    return total


def as_rational(value, vars: Sequence[str]) -> RationalFunction:
    return RationalFunction.lift(value, vars).with_vars(
        merge_vars(tuple(vars), value.vars) if isinstance(value, (RationalFunction, Polynomial)) else tuple(vars)
    )
