"""Sparse multivariate polynomials with exact rational coefficients."""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence

Exponent = tuple


def as_fraction(value) -> Fraction:
    """Coerce ints, Fractions and decimal strings to Fraction; floats convert exactly."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, (float, str)):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a rational number")


def _grlex_key(exp: Exponent):
    return (sum(exp), exp)


def merge_vars(a: Sequence[str], b: Sequence[str]) -> tuple:
    if tuple(a) == tuple(b):
        return tuple(a)
    out = list(a)
    for v in b:
        if v not in out:
            out.append(v)
    return tuple(out)


class Polynomial:
    """Immutable sparse polynomial over Q in an ordered tuple of variables.

    ``terms`` maps exponent tuples (one entry per variable) to nonzero
    Fraction coefficients. Binary operations between polynomials over
    different variable tuples work on the merged tuple.
    """

    __slots__ = ("vars", "terms", "_hash")

    def __init__(self, vars: Sequence[str], terms: Mapping[Exponent, object] | None = None):
        self.vars = tuple(vars)
        clean = {}
        if terms:
            nv = len(self.vars)
            for exp, c in terms.items():
                exp = tuple(int(e) for e in exp)
                if len(exp) != nv:
                    raise ValueError(f"exponent {exp} does not match variables {self.vars}")
                if any(e < 0 for e in exp):
                    raise ValueError(f"negative exponent in {exp}")
                c = as_fraction(c)
                if c:
                    clean[exp] = clean.get(exp, 0) + c
                    if not clean[exp]:
                        del clean[exp]
        self.terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, vars: tuple, terms: dict) -> "Polynomial":
        # trusted constructor: terms already clean
        p = object.__new__(cls)
        p.vars = vars
        p.terms = terms
        p._hash = None
        return p

    # constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, vars: Sequence[str], c) -> "Polynomial":
        c = as_fraction(c)
        vars = tuple(vars)
        return cls._raw(vars, {(0,) * len(vars): c} if c else {})

    @classmethod
    def variable(cls, vars: Sequence[str], name: str) -> "Polynomial":
        vars = tuple(vars)
        if name not in vars:
            raise KeyError(f"unknown variable {name!r}")
        exp = tuple(1 if v == name else 0 for v in vars)
        return cls._raw(vars, {exp: Fraction(1)})

    # structure ------------------------------------------------------------
    def with_vars(self, vars: Sequence[str]) -> "Polynomial":
        """Re-express over another variable tuple (must cover every variable in use)."""
        vars = tuple(vars)
        if vars == self.vars:
            return self
        index = {v: i for i, v in enumerate(vars)}
        moves = []
        for i, v in enumerate(self.vars):
            if v in index:
                moves.append((i, index[v]))
            elif any(exp[i] for exp in self.terms):
                raise ValueError(f"variable {v!r} is used but missing from {vars}")
        n = len(vars)
        out = {}
        for exp, c in self.terms.items():
            new = [0] * n
            for i, j in moves:
                new[j] = exp[i]
            out[tuple(new)] = c
        return Polynomial._raw(vars, out)

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.vars == self.vars:
                return self, other
            vars = merge_vars(self.vars, other.vars)
            return self.with_vars(vars), other.with_vars(vars)
        if isinstance(other, (int, Fraction, Rational)):
            return self, Polynomial.constant(self.vars, other)
        return NotImplemented

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and not any(next(iter(self.terms))))

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError("polynomial is not constant")
        return next(iter(self.terms.values())) if self.terms else Fraction(0)

    def total_degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def degree_in(self, var: str) -> int:
        i = self.vars.index(var)
        return max((e[i] for e in self.terms), default=-1)

    def used_vars(self) -> tuple:
        return tuple(v for i, v in enumerate(self.vars) if any(e[i] for e in self.terms))

    def leading(self):
        """Leading (exponent, coefficient) in graded lexicographic order."""
        exp = max(self.terms, key=_grlex_key)
        return exp, self.terms[exp]

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda t: _grlex_key(t[0]), reverse=True)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        co = self._coerce(other)
        if co is NotImplemented:
            return co
        a, b = co
        out = dict(a.terms)
        for exp, c in b.terms.items():
            s = out.get(exp, 0) + c
            if s:
                out[exp] = s
            else:
                out.pop(exp, None)
        return Polynomial._raw(a.vars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self.vars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        co = self._coerce(other)
        if co is NotImplemented:
            return co
        a, b = co
        return a + (-b)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Polynomial":
        c = as_fraction(c)
        if not c:
            return Polynomial._raw(self.vars, {})
        return Polynomial._raw(self.vars, {e: v * c for e, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, Rational)):
            return self.scale(other)
        co = self._coerce(other)
        if co is NotImplemented:
            return co
        a, b = co
        if len(a.terms) > len(b.terms):
            a, b = b, a
        out: dict = {}
        for e1, c1 in a.terms.items():
            for e2, c2 in b.terms.items():
                e = tuple(x + y for x, y in zip(e1, e2))
                s = out.get(e, 0) + c1 * c2
                if s:
                    out[e] = s
                else:
                    del out[e]
        return Polynomial._raw(a.vars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("polynomial powers must be non-negative integers")
        result = Polynomial.constant(self.vars, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Polynomial.constant(self.vars, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        a, b = self._coerce(other)
        return a.terms == b.terms

    def __hash__(self):
        if self._hash is None:
            used = self.used_vars()
            p = self.with_vars(used)
            self._hash = hash((used, frozenset(p.terms.items())))
        return self._hash

    # calculus and evaluation ---------------------------------------------
    def diff(self, var: str) -> "Polynomial":
        if var not in self.vars:
            raise ValueError(f"unknown variable {var!r}")
        i = self.vars.index(var)
        out = {}
        for exp, c in self.terms.items():
            if exp[i]:
                new = list(exp)
                new[i] -= 1
                out[tuple(new)] = c * exp[i]
        return Polynomial._raw(self.vars, out)

    def evaluate(self, point):
        """Evaluate at a point given as a mapping or a sequence aligned with ``vars``.

        The arithmetic follows the input type: Fractions give exact results,
        floats give floats.
        """
        if isinstance(point, Mapping):
            values = [point[v] for v in self.vars]
        else:
            values = list(point)
            if len(values) != len(self.vars):
                raise ValueError(f"expected {len(self.vars)} values, got {len(values)}")
        use_float = any(isinstance(v, float) for v in values)
        total = 0.0 if use_float else Fraction(0)
        powers: dict = {}
        for exp, c in self.terms.items():
            term = float(c) if use_float else c
            for i, e in enumerate(exp):
                if e:
                    key = (i, e)
                    if key not in powers:
                        powers[key] = values[i] ** e
                    term = term * powers[key]
            total = total + term
        return total

    def substitute(self, mapping: Mapping[str, "Polynomial"]) -> "Polynomial":
        """Replace variables by polynomials; unmapped variables stay."""
        out = None
        cache: dict = {}
        for exp, c in self.terms.items():
            term = None
            for v, e in zip(self.vars, exp):
                if not e:
                    continue
                base = mapping.get(v)
                if base is None:
                    base = Polynomial.variable(self.vars, v)
                key = (v, e)
                if key not in cache:
                    cache[key] = base ** e
                term = cache[key] if term is None else term * cache[key]
            if term is None:
                term = Polynomial.constant(self.vars, c)
            else:
                term = term.scale(c)
            out = term if out is None else out + term
        return out if out is not None else Polynomial._raw(self.vars, {})

    # division helpers ----------------------------------------------------
    def exact_div(self, other: "Polynomial"):
        """Return q with self == q*other, or None when other does not divide self."""
        a, b = self._coerce(other)
        if b.is_zero():
            raise ZeroDivisionError("division by the zero polynomial")
        if a.is_zero():
            return a
        lt, lc = b.leading()
        rest = dict(a.terms)
        quot: dict = {}
        bterms = list(b.terms.items())
        while rest:
            exp = max(rest, key=_grlex_key)
            if any(x < y for x, y in zip(exp, lt)):
                return None
            coef = rest[exp] / lc
            shift = tuple(x - y for x, y in zip(exp, lt))
            quot[shift] = coef
            for e2, c2 in bterms:
                e = tuple(x + y for x, y in zip(shift, e2))
                s = rest.get(e, 0) - coef * c2
                if s:
                    rest[e] = s
                else:
                    rest.pop(e, None)
        return Polynomial._raw(a.vars, quot)

    def content(self) -> Fraction:
        """Positive rational c such that self/c has coprime integer coefficients."""
        from math import gcd

        if not self.terms:
            return Fraction(0)
        num = 0
        den = 1
        for c in self.terms.values():
            num = gcd(num, c.numerator)
            den = den * c.denominator // gcd(den, c.denominator)
        return Fraction(num, den)

    def monomial_gcd(self) -> tuple:
        if not self.terms:
            return (0,) * len(self.vars)
        exps = list(self.terms)
        return tuple(min(e[i] for e in exps) for i in range(len(self.vars)))

    def primitive(self):
        """Split self = c * m * P with P primitive, positive leading coefficient and
        no monomial factor; returns (c, monomial exponent, P)."""
        if not self.terms:
            raise ValueError("zero polynomial has no primitive part")
        c = self.content()
        if self.leading()[1] < 0:
            c = -c
        m = self.monomial_gcd()
        out = {tuple(x - y for x, y in zip(e, m)): v / c for e, v in self.terms.items()}
        return c, m, Polynomial._raw(self.vars, out)

    # printing -------------------------------------------------------------
    def to_text(self) -> str:
        """Canonical re-parseable text, grlex order descending."""
        if not self.terms:
            return "0"
        parts = []
        for k, (exp, c) in enumerate(self.sorted_terms()):
            mono = "*".join(
                (v if e == 1 else f"{v}^{e}") for v, e in zip(self.vars, exp) if e
            )
            mag = abs(c)
            coef = str(mag.numerator) if mag.denominator == 1 else f"{mag.numerator}/{mag.denominator}"
            if k == 0:
                if c < 0:
                    body = f"-{coef}*{mono}" if mono else f"-{coef}"
                else:
                    body = (mono if mag == 1 else f"{coef}*{mono}") if mono else coef
                parts.append(body)
            else:
                body = (mono if mag == 1 else f"{coef}*{mono}") if mono else coef
                parts.append(("- " if c < 0 else "+ ") + body)
        return " ".join(parts)

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        return f"Polynomial({self.to_text()!r}, vars={self.vars})"


def monomial(vars: Sequence[str], exp: Iterable[int], c=1) -> Polynomial:
    return Polynomial(tuple(vars), {tuple(exp): c})
