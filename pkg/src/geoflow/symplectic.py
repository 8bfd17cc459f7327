"""Canonical symplectic structure on cotangent coordinates and Hamiltonian fields.

Phase variables are ordered (x_1..x_n, p_1..p_n). Momentum names are the
configuration names prefixed with ``p_``.

Two sign conventions are supported:

* ``"mechanics"``: x' = dH/dp, p' = -dH/dx (textbook Hamilton equations).
* ``"paper"``: the field X with omega(X, .) = dH for omega = sum dp_i ^ dx_i,
  which is the time reversal of the above.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from geoflow.expr import Polynomial, RationalFunction, compile_functions, parse_rational
from geoflow.geometry import ChartMetric, GeometryError

CONVENTIONS = ("mechanics", "paper")


def momentum_names(config_vars: Sequence[str]) -> tuple:
    return tuple(f"p_{v}" for v in config_vars)


@dataclass(frozen=True)
class OneForm:
    variables: tuple
    coeffs: tuple  # coefficient on d(variables[i])


@dataclass(frozen=True)
class TwoForm:
    """omega(e_a, e_b) = matrix[a][b]."""

    variables: tuple
    matrix: tuple

    def is_antisymmetric(self) -> bool:
        n = len(self.variables)
        return all((self.matrix[a][b] + self.matrix[b][a]).is_zero() for a in range(n) for b in range(n))

    def rank_at(self, point) -> int:
        M = np.array([[float(e.evaluate_float(point)) for e in row] for row in self.matrix])
        return int(np.linalg.matrix_rank(M))


def exterior_derivative(theta: OneForm) -> TwoForm:
    """(d theta)(e_a, e_b) = d_a theta_b - d_b theta_a."""
    V = theta.variables
    n = len(V)
    M = [[theta.coeffs[b].diff(V[a]) - theta.coeffs[a].diff(V[b]) for b in range(n)] for a in range(n)]
    return TwoForm(V, tuple(tuple(r) for r in M))


def canonical_structure(n: int, config_vars: Sequence[str] | None = None):
    """theta = sum p_i dx_i and omega = sum dp_i ^ dx_i on 2n phase variables."""
    if n < 1:
        raise ValueError("n must be at least 1")
    xs = tuple(config_vars) if config_vars is not None else tuple(f"x{i + 1}" for i in range(n))
    if len(xs) != n:
        raise ValueError("config variable count does not match n")
    V = xs + momentum_names(xs)
    zero = RationalFunction.constant(V, 0)
    one = RationalFunction.constant(V, 1)
    theta = OneForm(V, tuple(RationalFunction.variable(V, V[n + i]) for i in range(n)) + (zero,) * n)
    M = [[zero] * (2 * n) for _ in range(2 * n)]
    for i in range(n):
        M[n + i][i] = one
        M[i][n + i] = -one
    return theta, TwoForm(V, tuple(tuple(r) for r in M))


class HamiltonianSystem:
    def __init__(self, H: RationalFunction, config_vars: Sequence[str], convention: str = "mechanics",
                 guard: Polynomial | None = None, metric: ChartMetric | None = None,
                 potential: RationalFunction | None = None):
        if convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
        self.config_vars = tuple(config_vars)
        self.n = len(self.config_vars)
        self.momentum_vars = momentum_names(self.config_vars)
        self.variables = self.config_vars + self.momentum_vars
        extra = set(H.used_vars()) - set(self.variables)
        if extra:
            raise ValueError(f"Hamiltonian uses undeclared variables {sorted(extra)}")
        self.H = H.with_vars(self.variables)
        self.convention = convention
        self.guard = guard.with_vars(self.variables) if guard is not None else None
        self.metric = metric
        self.potential = potential
        sign = 1 if convention == "mechanics" else -1
        xs, ps = self.config_vars, self.momentum_vars
        self.field = tuple(self.H.diff(p) * sign for p in ps) + tuple(self.H.diff(x) * (-sign) for x in xs)

    @property
    def dim(self) -> int:
        return 2 * self.n

    def lie_derivative(self, f: RationalFunction) -> RationalFunction:
        """X_H(f) as an exact rational function."""
        f = f.with_vars(self.variables)
        total = RationalFunction.constant(self.variables, 0)
        for v, X in zip(self.variables, self.field):
            d = f.diff(v)
            if not d.is_zero() and not X.is_zero():
                total = total + d * X
        return total

    def conserves(self, f: RationalFunction | None = None) -> bool:
        return self.lie_derivative(self.H if f is None else f).is_zero()

    @cached_property
    def jacobian_symbolic(self):
        return tuple(tuple(X.diff(v) for v in self.variables) for X in self.field)

    @cached_property
    def _field_eval(self):
        return compile_functions(self.field, self.variables)

    @cached_property
    def _jac_eval(self):
        return compile_functions([d for row in self.jacobian_symbolic for d in row], self.variables)

    @cached_property
    def _H_eval(self):
        return compile_functions([self.H], self.variables)

    @cached_property
    def _guard_eval(self):
        if self.guard is None:
            return None
        return compile_functions([RationalFunction(self.guard)], self.variables)

    def vector_field(self, z) -> np.ndarray:
        """X(z); z may be shape (2n,) or (2n, N) for an ensemble."""
        z = np.asarray(z, dtype=float)
        out = self._field_eval(*z)
        return np.array([np.broadcast_to(c, z.shape[1:]) for c in out], dtype=float)

    def jacobian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        d = self.dim
        vals = self._jac_eval(*z)
        return np.array([np.broadcast_to(c, z.shape[1:]) for c in vals], dtype=float).reshape((d, d) + z.shape[1:])

    def energy(self, z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(self._H_eval(*z)[0], z.shape[1:]).astype(float)

    def guard_value(self, z):
        z = np.asarray(z, dtype=float)
        if self._guard_eval is None:
            return np.ones(z.shape[1:])
        return np.broadcast_to(self._guard_eval(*z)[0], z.shape[1:]).astype(float)

    def with_convention(self, convention: str) -> "HamiltonianSystem":
        return HamiltonianSystem(self.H, self.config_vars, convention, self.guard, self.metric, self.potential)

    def __repr__(self):
        return f"HamiltonianSystem(H={self.H.to_text()}, convention={self.convention!r})"


def hamiltonian_vector_field(H: RationalFunction, n: int, convention: str = "mechanics",
                             config_vars: Sequence[str] | None = None, guard=None) -> HamiltonianSystem:
    if config_vars is None:
        names = [v for v in H.vars if not v.startswith("p_")]
        config_vars = tuple(names)
    if len(config_vars) != n:
        raise ValueError(f"expected {n} configuration variables, got {len(config_vars)}")
    return HamiltonianSystem(H, config_vars, convention, guard)


def _quadratic_form(ginv, ps, V):
    n = len(ps)
    P = [RationalFunction.variable(V, p) for p in ps]
    total = RationalFunction.constant(V, 0)
    for i in range(n):
        for j in range(n):
            e = ginv[i][j]
            if not e.is_zero():
                total = total + e.with_vars(V) * P[i] * P[j]
    return total


def geodesic_hamiltonian(m: ChartMetric, V=None, convention: str = "mechanics") -> HamiltonianSystem:
    """H = 1/2 g^{ij}(x) p_i p_j + V(x)."""
    xs = m.variables
    Vars = xs + momentum_names(xs)
    H = _quadratic_form(m.inverse, momentum_names(xs), Vars) * Fraction(1, 2)
    pot = None
    if V is not None:
        pot = parse_rational(V, xs) if isinstance(V, str) else RationalFunction.lift(V, xs)
        if set(pot.used_vars()) - set(xs):
            raise ValueError("potential may depend on configuration variables only")
        if not pot.is_zero():
            H = H + pot.with_vars(Vars)
        else:
            pot = None
    return HamiltonianSystem(H, xs, convention, guard=m.guard, metric=m, potential=pot)


def is_fiber_homogeneous(sys: HamiltonianSystem, degree: int = 2) -> bool:
    """Exact check of H(x, t p) = t^degree H(x, p) with t an auxiliary variable."""
    t = "_t"
    V = sys.variables + (t,)
    T = RationalFunction.variable(V, t)
    scaled = sys.H.substitute({p: T * RationalFunction.variable(V, p) for p in sys.momentum_vars})
    return (scaled - sys.H.with_vars(V) * T ** degree).is_zero()


def fiber_rescaling(sys: HamiltonianSystem, b):
    """psi_b(x, p) = (x, b p) and an exact verification report."""
    b = Fraction(b)
    if b == 0:
        raise ValueError("rescaling factor must be nonzero")
    if not is_fiber_homogeneous(sys, 2):
        raise ValueError("Hamiltonian is not fiberwise homogeneous of degree 2 (a potential breaks rescaling)")
    V = sys.variables
    subs = {p: RationalFunction.variable(V, p) * b for p in sys.momentum_vars}
    H_psi = sys.H.substitute(subs)
    field_psi = [X.substitute(subs) for X in sys.field]
    report = {
        "b": str(b),
        "homogeneous": True,
        "energy_scaling": H_psi.equals(sys.H * b ** 2),
        # X o psi_b = b * dpsi_b(X): x-components scale by b, p-components by b^2
        "field_conjugacy": all(Xp.equals(X * b) for Xp, X in zip(field_psi[:sys.n], sys.field[:sys.n]))
        and all(Xp.equals(X * b ** 2) for Xp, X in zip(field_psi[sys.n:], sys.field[sys.n:])),
    }
    n = sys.n
    bf = float(b)

    def psi(z):
        z = np.array(z, dtype=float)
        z[n:] *= bf
        return z

    return psi, report


def sphere_bundle_constraint(m: ChartMetric) -> RationalFunction:
    """C(x, p) = g^{ij} p_i p_j - 1."""
    xs = m.variables
    Vars = xs + momentum_names(xs)
    return _quadratic_form(m.inverse, momentum_names(xs), Vars) - 1


def velocity_names(config_vars: Sequence[str]) -> tuple:
    return tuple(f"v_{v}" for v in config_vars)


def second_order_geodesic_field(m: ChartMetric):
    """(variables, field) for x' = v, v'^k = -Gamma^k_ij v^i v^j."""
    xs = m.variables
    vs = velocity_names(xs)
    Vars = xs + vs
    n = m.n
    G = m.christoffel
    Vv = [RationalFunction.variable(Vars, v) for v in vs]
    acc = []
    for k in range(n):
        total = RationalFunction.constant(Vars, 0)
        for i in range(n):
            for j in range(n):
                c = G[k, i, j]
                if not c.is_zero():
                    total = total - c.with_vars(Vars) * Vv[i] * Vv[j]
        acc.append(total)
    return Vars, tuple(Vv) + tuple(acc)


def legendre_consistency(m: ChartMetric) -> bool:
    """Exact check that p = g v carries the second-order field onto X_{H_g}.

    Under the substitution, the Hamiltonian field must give x' = v and
    p' = d/dt(g v) = (d_k g) v^k v + g v'.
    """
    sys = geodesic_hamiltonian(m)
    Vars, second = second_order_geodesic_field(m)
    n = m.n
    xs = m.variables
    gV = [[e.with_vars(Vars) for e in row] for row in m.g]
    Vv = second[:n]
    acc = second[n:]
    subs = {}
    for i, p in enumerate(sys.momentum_vars):
        subs[p] = sum((gV[i][j] * Vv[j] for j in range(n)), RationalFunction.constant(Vars, 0))
    pulled = [X.substitute(subs).with_vars(Vars) for X in sys.field]
    for i in range(n):
        if not pulled[i].equals(Vv[i]):
            return False
    for i in range(n):
        rhs = RationalFunction.constant(Vars, 0)
        for j in range(n):
            rhs = rhs + gV[i][j] * acc[j]
            for k in range(n):
                d = gV[i][j].diff(xs[k])
                if not d.is_zero():
                    rhs = rhs + d * Vv[k] * Vv[j]
        if not pulled[n + i].equals(rhs):
            return False
    return True


def linear_chart_change(m: ChartMetric, A) -> ChartMetric:
    """Metric in coordinates y with x = A y: g~(y) = A^T g(A y) A."""
    n = m.n
    A = [[Fraction(a) for a in row] for row in A]
    xs = m.variables
    Y = [RationalFunction.variable(xs, v) for v in xs]
    subs = {xs[i]: sum((Y[j] * A[i][j] for j in range(n)), RationalFunction.constant(xs, 0)) for i in range(n)}
    gx = [[e.substitute(subs).with_vars(xs) for e in row] for row in m.g]
    zero = RationalFunction.constant(xs, 0)
    gy = [[zero] * n for _ in range(n)]
    for a in range(n):
        for b in range(n):
            total = zero
            for i in range(n):
                for j in range(n):
                    c = A[i][a] * A[j][b]
                    if c and not gx[i][j].is_zero():
                        total = total + gx[i][j] * c
            gy[a][b] = total
    guard = None
    if m.user_guard is not None:
        guard = m.user_guard.substitute({xs[i]: subs[xs[i]].num for i in range(n)})
    return ChartMetric(xs, gy, guard=guard, name=f"{m.name}_linear")


def coordinate_naturality_check(m: ChartMetric, A) -> bool:
    """The geodesic field built in the chart y (x = A y, p~ = A^T p) equals the
    transformed original field, exactly."""
    n = m.n
    Af = [[Fraction(a) for a in row] for row in A]
    from geoflow import _exact

    det = _exact.determinant(Af)
    if det == 0:
        raise GeometryError("linear change of coordinates must be invertible")
    Ainv = [[c / det for c in row] for row in _exact.adjugate(Af)]
    orig = geodesic_hamiltonian(m)
    new = geodesic_hamiltonian(linear_chart_change(m, A))
    V = new.variables
    ys = [RationalFunction.variable(V, v) for v in new.config_vars]
    pt = [RationalFunction.variable(V, v) for v in new.momentum_vars]
    zero = RationalFunction.constant(V, 0)
    subs = {}
    for i in range(n):
        subs[orig.config_vars[i]] = sum((ys[j] * Af[i][j] for j in range(n)), zero)
        # p = A^{-T} p~
        subs[orig.momentum_vars[i]] = sum((pt[j] * Ainv[j][i] for j in range(n)), zero)
    Xo = [X.substitute(subs).with_vars(V) for X in orig.field]
    for a in range(n):
        want = sum((Xo[i] * Ainv[a][i] for i in range(n)), zero)
        if not new.field[a].equals(want):
            return False
        want_p = sum((Xo[n + i] * Af[i][a] for i in range(n)), zero)
        if not new.field[n + a].equals(want_p):
            return False
    return True


def system_to_model(sys: HamiltonianSystem) -> dict:
    """Model-file dictionary for a chart-based system, with its hamiltonian block."""
    m = sys.metric
    if m is None:
        raise ValueError("only metric-derived systems serialize to model files")
    out = {
        "kind": "chart",
        "variables": list(m.variables),
        "metric": [[e.to_text() for e in row] for row in m.g],
        "periods": {v: (None if p is None else str(p)) for v, p in m.periods.items()},
        "hamiltonian": {
            "potential": None if sys.potential is None else sys.potential.to_text(),
            "convention": sys.convention,
        },
    }
    if m.user_guard is not None:
        out["guard"] = m.user_guard.to_text()
    if m.name:
        out["name"] = m.name
    return out
