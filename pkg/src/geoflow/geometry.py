"""Pseudo-Riemannian charts and embedded varieties.

Everything on a chart is exact: the metric is a symmetric matrix of
RationalFunctions, and the Levi-Civita connection and curvature are derived
symbolically. Curvature convention::

    R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z
    R(e_i, e_j) e_k = R^l_{ijk} e_l

and sectional curvature is ``g(R(v,w)w, v) / (g(v,v)g(w,w) - g(v,w)^2)``,
which is +1/r^2 on a round sphere of radius r.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from geoflow import _exact
from geoflow.expr import (
    Polynomial,
    RationalFunction,
    compile_functions,
    parse_polynomial,
    parse_rational,
)


class GeometryError(ValueError):
    pass


def is_exact_point(point) -> bool:
    return all(isinstance(c, (int, Fraction)) and not isinstance(c, bool) for c in point)


def _rf(entry, variables) -> RationalFunction:
    if isinstance(entry, RationalFunction):
        return entry.with_vars(variables)
    if isinstance(entry, Polynomial):
        return RationalFunction(entry.with_vars(variables))
    if isinstance(entry, str):
        return parse_rational(entry, variables)
    return RationalFunction.constant(variables, entry)


class ChartMetric:
    """Metric matrix of rational functions on a coordinate chart.

    The stored guard polynomial vanishes wherever some metric entry has a
    pole or the determinant vanishes (times any user guard), so every
    derived quantity is regular where ``guard != 0``.
    """

    def __init__(self, variables: Sequence[str], g, guard=None, periods=None, name: str = ""):
        self.variables = tuple(variables)
        self.n = n = len(self.variables)
        self.name = name
        if len(g) != n or any(len(row) != n for row in g):
            raise GeometryError(f"metric must be {n}x{n}")
        self.g = tuple(tuple(_rf(e, self.variables) for e in row) for row in g)
        for i in range(n):
            for j in range(i + 1, n):
                if not self.g[i][j].equals(self.g[j][i]):
                    raise GeometryError(
                        f"metric is not symmetric: g[{i}][{j}] = {self.g[i][j]} "
                        f"but g[{j}][{i}] = {self.g[j][i]}"
                    )
        self.det = _exact.determinant([list(r) for r in self.g])
        if self.det.is_zero():
            raise GeometryError("metric determinant is identically zero")
        self.user_guard = None
        if guard is not None:
            self.user_guard = guard if isinstance(guard, Polynomial) else parse_polynomial(guard, self.variables)
            self.user_guard = self.user_guard.with_vars(self.variables)
        self.periods = {v: None for v in self.variables}
        for v, p in (periods or {}).items():
            if v not in self.periods:
                raise GeometryError(f"period given for unknown variable {v!r}")
            if p is not None:
                p = Fraction(p)
                if p <= 0:
                    raise GeometryError(f"period of {v!r} must be positive")
            self.periods[v] = p

    @cached_property
    def guard(self) -> Polynomial:
        bases = []
        for row in self.g:
            for e in row:
                bases.extend(b for b, _ in e.factors)
        bases.extend(b for b, _ in self.det.factors)
        if not self.det.num.is_constant():
            bases.append(self.det.num.primitive()[2])
        out = Polynomial.constant(self.variables, 1)
        seen = []
        for b in bases:
            if b not in seen:
                seen.append(b)
                out = out * b
        if self.user_guard is not None:
            out = out * self.user_guard
        return out

    @cached_property
    def _guard_eval(self):
        return compile_functions([RationalFunction(self.guard)], self.variables)

    def guard_value(self, point) -> float:
        return float(self._guard_eval(*[float(c) for c in point])[0])

    def in_domain(self, point) -> bool:
        if is_exact_point(point):
            return self.guard.evaluate([Fraction(c) for c in point]) != 0
        return self.guard_value(point) != 0.0

    @property
    def has_periods(self) -> bool:
        return any(p is not None for p in self.periods.values())

    def period_array(self) -> np.ndarray:
        return np.array([float(p) if p is not None else 0.0 for p in self.periods.values()])

    # derived objects, cached ----------------------------------------------
    @cached_property
    def inverse(self):
        return inverse_metric(self)

    @cached_property
    def christoffel(self) -> "ChristoffelField":
        return christoffel(self)

    @cached_property
    def curvature(self) -> "CurvatureField":
        return curvature_tensor(self, self.christoffel)

    @cached_property
    def _g_eval(self):
        return compile_functions([e for row in self.g for e in row], self.variables)

    @cached_property
    def _ginv_eval(self):
        return compile_functions([e for row in self.inverse for e in row], self.variables)

    def metric_at(self, point) -> np.ndarray | list:
        if is_exact_point(point):
            pt = [Fraction(c) for c in point]
            return [[e.evaluate_exact(pt) for e in row] for row in self.g]
        vals = self._g_eval(*[float(c) for c in point])
        return np.array(vals, dtype=float).reshape(self.n, self.n)

    def inverse_at(self, point) -> np.ndarray:
        vals = self._ginv_eval(*[float(c) for c in point])
        return np.array(vals, dtype=float).reshape(self.n, self.n)

    def inner(self, point, v, w):
        g = self.metric_at(point)
        return sum(g[i][j] * v[i] * w[j] for i in range(self.n) for j in range(self.n))

    def __repr__(self):
        return f"ChartMetric({self.name or self.variables})"


@dataclass(frozen=True)
class ChristoffelField:
    """Gamma[k][i][j] = Gamma^k_{ij} as RationalFunctions."""

    variables: tuple
    gamma: tuple

    def __getitem__(self, idx):
        k, i, j = idx
        return self.gamma[k][i][j]

    def replace(self, k, i, j, value) -> "ChristoffelField":
        rows = [[list(r) for r in plane] for plane in self.gamma]
        rows[k][i][j] = value
        return ChristoffelField(self.variables, tuple(tuple(tuple(r) for r in p) for p in rows))


@dataclass(frozen=True)
class CurvatureField:
    """R[l][i][j][k] = R^l_{ijk} with R(e_i, e_j)e_k = R^l_{ijk} e_l."""

    variables: tuple
    R: tuple

    def __getitem__(self, idx):
        l, i, j, k = idx
        return self.R[l][i][j][k]

    @cached_property
    def _eval(self):
        n = len(self.variables)
        flat = [self.R[l][i][j][k] for l in range(n) for i in range(n) for j in range(n) for k in range(n)]
        return compile_functions(flat, self.variables)

    def at(self, point):
        n = len(self.variables)
        if is_exact_point(point):
            pt = [Fraction(c) for c in point]
            return [[[[self.R[l][i][j][k].evaluate_exact(pt) for k in range(n)] for j in range(n)]
                     for i in range(n)] for l in range(n)]
        vals = self._eval(*[float(c) for c in point])
        return np.array(vals, dtype=float).reshape(n, n, n, n)


@dataclass(frozen=True)
class TangentPlane:
    point: tuple
    v: tuple
    w: tuple


# operations ----------------------------------------------------------------

def inverse_metric(m: ChartMetric):
    """g^{-1} as adjugate / determinant."""
    adj = _exact.adjugate([list(r) for r in m.g])
    inv_det = m.det.reciprocal()
    return tuple(tuple(a * inv_det for a in row) for row in adj)


def christoffel(m: ChartMetric) -> ChristoffelField:
    n, V = m.n, m.variables
    ginv = m.inverse
    dg = [[[m.g[i][j].diff(V[l]) for j in range(n)] for i in range(n)] for l in range(n)]
    zero = RationalFunction.constant(V, 0)
    gamma = [[[None] * n for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            # lowered symbol Gamma_{ijl} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
            low = [(dg[i][j][l] + dg[j][i][l] - dg[l][i][j]) * Fraction(1, 2) for l in range(n)]
            for k in range(n):
                total = zero
                for l in range(n):
                    if not ginv[k][l].is_zero() and not low[l].is_zero():
                        total = total + ginv[k][l] * low[l]
                gamma[k][i][j] = total
                gamma[k][j][i] = total
    return ChristoffelField(V, tuple(tuple(tuple(r) for r in p) for p in gamma))


def curvature_tensor(m: ChartMetric, gamma: ChristoffelField) -> CurvatureField:
    n, V = m.n, m.variables
    G = gamma.gamma
    dG = [[[[G[l][j][k].diff(V[i]) for k in range(n)] for j in range(n)] for l in range(n)] for i in range(n)]
    zero = RationalFunction.constant(V, 0)
    R = [[[[None] * n for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for l in range(n):
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    val = dG[i][l][j][k] - dG[j][l][i][k]
                    for s in range(n):
                        if not G[l][i][s].is_zero() and not G[s][j][k].is_zero():
                            val = val + G[l][i][s] * G[s][j][k]
                        if not G[l][j][s].is_zero() and not G[s][i][k].is_zero():
                            val = val - G[l][j][s] * G[s][i][k]
                    R[l][i][j][k] = val if val is not None else zero
    return CurvatureField(V, tuple(tuple(tuple(tuple(r) for r in b) for b in a) for a in R))


def lowered_curvature(m: ChartMetric, R: CurvatureField):
    """R_{ijkl} = g_{lm} R^m_{ijk}."""
    n = m.n
    zero = RationalFunction.constant(m.variables, 0)
    out = [[[[zero] * n for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    val = zero
                    for s in range(n):
                        if not m.g[l][s].is_zero() and not R.R[s][i][j][k].is_zero():
                            val = val + m.g[l][s] * R.R[s][i][j][k]
                    out[i][j][k][l] = val
    return out


def _gram(g, v, w, n):
    gvv = sum(g[i][j] * v[i] * v[j] for i in range(n) for j in range(n))
    gww = sum(g[i][j] * w[i] * w[j] for i in range(n) for j in range(n))
    gvw = sum(g[i][j] * v[i] * w[j] for i in range(n) for j in range(n))
    return gvv * gww - gvw * gvw


def sectional_curvature(m: ChartMetric, R: CurvatureField | None, plane: TangentPlane):
    """Sectional curvature of the plane span(v, w) at plane.point.

    Exact (Fraction) when the point and vectors are rational, float otherwise.
    """
    R = R if R is not None else m.curvature
    n = m.n
    point, v, w = plane.point, plane.v, plane.w
    exact = is_exact_point(point) and is_exact_point(v) and is_exact_point(w)
    if exact:
        point = [Fraction(c) for c in point]
        v = [Fraction(c) for c in v]
        w = [Fraction(c) for c in w]
    else:
        point = [float(c) for c in point]
        v = [float(c) for c in v]
        w = [float(c) for c in w]
    if not m.in_domain(point):
        raise GeometryError(f"point {point} lies outside the chart (guard vanishes)")
    g = m.metric_at(point)
    gram = _gram(g, v, w, n)
    if gram == 0:
        raise GeometryError("isotropic (degenerate) plane")
    Rp = R.at(point)
    # g(R(v,w)w, v)
    num = 0
    for l in range(n):
        comp = 0
        for i in range(n):
            if not v[i]:
                continue
            for j in range(n):
                if not w[j]:
                    continue
                for k in range(n):
                    if w[k]:
                        comp = comp + Rp[l][i][j][k] * v[i] * w[j] * w[k]
        if comp:
            num = num + comp * sum(g[l][s] * v[s] for s in range(n))
    return num / gram


def verify_connection_identities(m: ChartMetric, gamma: ChristoffelField | None = None) -> dict:
    """Exact checks of torsion-freeness, metric compatibility and first Bianchi."""
    n, V = m.n, m.variables
    G = gamma if gamma is not None else m.christoffel
    torsion = all(G[k, i, j].equals(G[k, j, i]) for k in range(n) for i in range(n) for j in range(n))
    compat = True
    for k in range(n):
        for i in range(n):
            for j in range(n):
                rhs = RationalFunction.constant(V, 0)
                for l in range(n):
                    rhs = rhs + G[l, k, i] * m.g[l][j] + G[l, k, j] * m.g[i][l]
                if not m.g[i][j].diff(V[k]).equals(rhs):
                    compat = False
                    break
            if not compat:
                break
        if not compat:
            break
    R = curvature_tensor(m, G) if gamma is not None else m.curvature
    bianchi = all(
        (R[l, i, j, k] + R[l, j, k, i] + R[l, k, i, j]).is_zero()
        for l in range(n) for i in range(n) for j in range(n) for k in range(n)
    )
    antisym = all(
        (R[l, i, j, k] + R[l, j, i, k]).is_zero()
        for l in range(n) for i in range(n) for j in range(n) for k in range(n)
    )
    return {
        "torsion_free": torsion,
        "metric_compatible": compat,
        "first_bianchi": bianchi,
        "curvature_antisymmetric": antisym,
    }


def verify_curvature_symmetries(m: ChartMetric) -> dict:
    """R_ijkl = -R_jikl = -R_ijlk = R_klij, exactly."""
    n = m.n
    L = lowered_curvature(m, m.curvature)
    idx = [(i, j, k, l) for i in range(n) for j in range(n) for k in range(n) for l in range(n)]
    return {
        "antisym_first_pair": all((L[i][j][k][l] + L[j][i][k][l]).is_zero() for i, j, k, l in idx),
        "antisym_second_pair": all((L[i][j][k][l] + L[i][j][l][k]).is_zero() for i, j, k, l in idx),
        "pair_symmetry": all((L[i][j][k][l] - L[k][l][i][j]).is_zero() for i, j, k, l in idx),
    }


# embedded varieties --------------------------------------------------------

class EmbeddedVariety:
    """Zero set of polynomial constraints in affine m-space with a constant
    ambient symmetric form (Euclidean by default)."""

    def __init__(self, constraints, ambient_dim: int | None = None, variables=None,
                 ambient_form=None, name: str = ""):
        if variables is None:
            if ambient_dim is None:
                raise GeometryError("need ambient_dim or variables")
            variables = tuple(f"x{i + 1}" for i in range(ambient_dim))
        self.variables = tuple(variables)
        self.m = len(self.variables)
        if ambient_dim is not None and ambient_dim != self.m:
            raise GeometryError("ambient_dim does not match the variable list")
        self.constraints = tuple(
            (c if isinstance(c, Polynomial) else parse_polynomial(c, self.variables)).with_vars(self.variables)
            for c in constraints
        )
        self.c = len(self.constraints)
        if ambient_form is None or ambient_form == "euclidean":
            ambient_form = [[int(i == j) for j in range(self.m)] for i in range(self.m)]
        self.ambient_form = [[Fraction(x) for x in row] for row in ambient_form]
        A = self.ambient_form
        if any(A[i][j] != A[j][i] for i in range(self.m) for j in range(self.m)):
            raise GeometryError("ambient form must be symmetric")
        if _exact.rank(A) != self.m:
            raise GeometryError("ambient form must be non-degenerate")
        self.A = np.array(A, dtype=float)
        self.Ainv = np.linalg.inv(self.A)
        self.name = name

    @property
    def dimension(self) -> int:
        return self.m - self.c

    @cached_property
    def _jac_polys(self):
        return [[f.diff(v) for v in self.variables] for f in self.constraints]

    @cached_property
    def _hess_polys(self):
        return [[[d.diff(v) for v in self.variables] for d in row] for row in self._jac_polys]

    @cached_property
    def _evals(self):
        V = self.variables
        F = compile_functions([RationalFunction(f) for f in self.constraints], V)
        J = compile_functions([RationalFunction(d) for row in self._jac_polys for d in row], V)
        H = compile_functions([RationalFunction(h) for a in self._hess_polys for r in a for h in r], V)
        return F, J, H

    def residual(self, x) -> np.ndarray:
        if self.c == 0:
            return np.zeros(0)
        return np.array(self._evals[0](*[float(c) for c in x]), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        if self.c == 0:
            return np.zeros((0, self.m))
        return np.array(self._evals[1](*[float(c) for c in x]), dtype=float).reshape(self.c, self.m)

    def hessians(self, x) -> np.ndarray:
        if self.c == 0:
            return np.zeros((0, self.m, self.m))
        return np.array(self._evals[2](*[float(c) for c in x]), dtype=float).reshape(self.c, self.m, self.m)

    def jacobian_exact(self, x):
        pt = [Fraction(c) for c in x]
        return [[d.evaluate(pt) for d in row] for row in self._jac_polys]

    def check_regular(self, x, tol: float = 1e-10) -> np.ndarray:
        J = self.jacobian(x)
        if self.c and np.linalg.matrix_rank(J, tol=tol * max(1.0, np.abs(J).max())) < self.c:
            raise GeometryError(f"singular point {tuple(x)}: constraint Jacobian is rank deficient")
        return J

    def tangent_projector(self, x) -> np.ndarray:
        """Ambient-form orthogonal projector onto ker dF(x)."""
        J = self.check_regular(x)
        if self.c == 0:
            return np.eye(self.m)
        M = J @ self.Ainv @ J.T
        return np.eye(self.m) - self.Ainv @ J.T @ np.linalg.solve(M, J)

    def tangent_basis_exact(self, x):
        return _exact.nullspace(self.jacobian_exact(x), self.m)

    def project(self, x, tol: float = 1e-13, max_iter: int = 50) -> np.ndarray:
        """Newton projection of a nearby point onto F = 0 along the normal space."""
        x = np.array(x, dtype=float)
        for _ in range(max_iter):
            r = self.residual(x)
            if np.max(np.abs(r), initial=0.0) <= tol:
                return x
            J = self.check_regular(x)
            x = x - self.Ainv @ J.T @ np.linalg.solve(J @ self.Ainv @ J.T, r)
        raise GeometryError("projection onto the variety did not converge")

    def inner(self, v, w) -> float:
        return float(np.asarray(v, float) @ self.A @ np.asarray(w, float))

    def second_fundamental_form(self, x, v, w) -> np.ndarray:
        """Normal component of the ambient derivative, via constraint Hessians."""
        J = self.check_regular(x)
        H = self.hessians(x)
        hvw = np.einsum("aij,i,j->a", H, np.asarray(v, float), np.asarray(w, float))
        mu = np.linalg.solve(J @ self.Ainv @ J.T, hvw)
        return -self.Ainv @ J.T @ mu

    def __repr__(self):
        return f"EmbeddedVariety({self.name or [c.to_text() for c in self.constraints]})"


def curvature_embedded_point(V: EmbeddedVariety, x, v, w, tol: float = 1e-8) -> float:
    """Sectional curvature of the induced metric via the Gauss equation."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    scale = 1.0 + np.abs(x).max()
    if V.c and np.max(np.abs(V.residual(x))) > tol * scale ** 2:
        raise GeometryError(f"point {tuple(x)} is not on the variety")
    J = V.check_regular(x)
    for name, u in (("v", v), ("w", w)):
        if V.c and np.max(np.abs(J @ u)) > tol * max(1.0, np.abs(u).max()) * max(1.0, np.abs(J).max()):
            raise GeometryError(f"vector {name} is not tangent at {tuple(x)}")
    gram = V.inner(v, v) * V.inner(w, w) - V.inner(v, w) ** 2
    if abs(gram) <= 1e-14 * (np.dot(v, v) * np.dot(w, w)):
        raise GeometryError("isotropic (degenerate) plane")
    if V.c == 0:
        return 0.0
    IIvv = V.second_fundamental_form(x, v, v)
    IIww = V.second_fundamental_form(x, w, w)
    IIvw = V.second_fundamental_form(x, v, w)
    return float((V.inner(IIvv, IIww) - V.inner(IIvw, IIvw)) / gram)


# bundled metric constructors ----------------------------------------------

def euclidean(n: int = 2, variables=None) -> ChartMetric:
    variables = variables or (("x", "y", "z")[:n] if n <= 3 else tuple(f"x{i}" for i in range(n)))
    return ChartMetric(variables, [[int(i == j) for j in range(n)] for i in range(n)], name=f"euclidean{n}")


def half_plane() -> ChartMetric:
    return ChartMetric(("x", "y"), [["1/y^2", 0], [0, "1/y^2"]], name="halfplane")


def poincare_disk() -> ChartMetric:
    lam = "4/(1 - u^2 - v^2)^2"
    return ChartMetric(("u", "v"), [[lam, 0], [0, lam]], name="disk")


def stereographic_sphere(r=1) -> ChartMetric:
    r = Fraction(r)
    lam = f"{4 * r ** 4}/({r ** 2} + u^2 + v^2)^2"
    return ChartMetric(("u", "v"), [[lam, 0], [0, lam]], name=f"sphere_r{r}")


def mixed_metric() -> ChartMetric:
    return ChartMetric(("x", "y"), [[1, "x"], ["x", "1 + x^2"]], name="mixed")


def flat_torus(periods=(1, 1)) -> ChartMetric:
    return ChartMetric(("x", "y"), [[1, 0], [0, 1]], periods={"x": periods[0], "y": periods[1]}, name="torus")


def unit_sphere_embedded(radius=1) -> EmbeddedVariety:
    r2 = Fraction(radius) ** 2
    return EmbeddedVariety([f"x^2 + y^2 + z^2 - {r2}"], variables=("x", "y", "z"), name="sphere")


def sphere_from_stereographic(u, v, r=1.0):
    """Map a stereographic chart point (projection from the north pole) to R^3."""
    s = u * u + v * v
    return np.array([2 * r * r * u, 2 * r * r * v, r * (s - r * r)]) / (r * r + s)
