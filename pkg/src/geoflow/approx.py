"""Sampled approximation tools for metrics.

It covers:

* C^k seminorms taken over a grid;
* least-squares polynomial fits;
* the Nash twist and its polynomial fits;
* pointwise sum-of-squares decompositions of a target form;
* graph embeddings, whose pullback metric is checked exactly;
* sampled curvature certificates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import nnls

from geoflow import _exact
from geoflow.expr import Polynomial, RationalFunction, compile_functions, parse_polynomial
from geoflow.geometry import (
    ChartMetric,
    EmbeddedVariety,
    GeometryError,
    TangentPlane,
    curvature_embedded_point,
    is_exact_point,
    sectional_curvature,
)

FD_STEP = 1e-5


@dataclass
class SampleGrid:
    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] == 1 and self.points.shape[1] > 1 and np.ndim(self.points) == 2:
            pass
        if self.points.size == 0:
            raise ValueError("sample grid must not be empty")
        if self.weights is None:
            self.weights = np.ones(len(self.points))
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (len(self.points),):
                raise ValueError("one weight per grid point is required")
            if np.any(self.weights < 0):
                raise ValueError("weights must be non-negative")

    @classmethod
    def uniform(cls, lo, hi, n: int) -> "SampleGrid":
        return cls(np.linspace(lo, hi, n)[:, None])

    @classmethod
    def box(cls, bounds, n: int) -> "SampleGrid":
        axes = [np.linspace(a, b, n) for a, b in bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)


def multi_indices(dim: int, order: int):
    """All exponent tuples with total degree <= order, graded."""
    out = []
    for k in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(dim), k):
            a = [0] * dim
            for i in combo:
                a[i] += 1
            out.append(tuple(a))
    return out


class SmoothFunction:
    """Value and partial derivatives of a function on R^dim.

    ``derivative(x, alpha)`` returns the alpha-th partial. Exact derivatives
    come from rational functions or from a caller-supplied closed form;
    anything else falls back to central finite differences, and
    ``used_finite_differences`` records that it happened.
    """

    def __init__(self, value: Callable, dim: int, derivative: Callable | None = None,
                 gradient: Callable | None = None, order: int = 1, name: str = ""):
        if order < 1:
            raise ValueError("declared derivative order must be at least 1")
        self._value = value
        self.dim = dim
        self._derivative = derivative
        self._gradient = gradient
        self.order = order
        self.name = name
        self.used_finite_differences = False

    @classmethod
    def from_rational(cls, f, variables: Sequence[str] | None = None, order: int = 4) -> "SmoothFunction":
        if isinstance(f, Polynomial):
            f = RationalFunction(f)
        variables = tuple(variables) if variables is not None else f.vars
        f = f.with_vars(variables)
        cache: dict = {}

        def deriv(x, alpha):
            alpha = tuple(alpha)
            if alpha not in cache:
                g = f
                for v, k in zip(variables, alpha):
                    for _ in range(k):
                        g = g.diff(v)
                cache[alpha] = compile_functions([g], variables)
            return float(cache[alpha](*[float(c) for c in np.atleast_1d(x)])[0])

        sf = cls(lambda x: deriv(x, (0,) * len(variables)), len(variables), derivative=deriv,
                 order=order, name=f.to_text())
        sf.rational = f
        return sf

    @classmethod
    def constant(cls, c: float, dim: int) -> "SmoothFunction":
        return cls(lambda x: float(c), dim, derivative=lambda x, a: float(c) if sum(a) == 0 else 0.0,
                   order=8, name=repr(c))

    def value(self, x) -> float:
        return float(self._value(np.atleast_1d(np.asarray(x, float))))

    def __call__(self, x) -> float:
        return self.value(x)

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, float))
        if self._gradient is not None:
            return np.asarray(self._gradient(x), float)
        return np.array([self.derivative(x, tuple(int(i == j) for j in range(self.dim))) for i in range(self.dim)])

    def derivative(self, x, alpha) -> float:
        x = np.atleast_1d(np.asarray(x, float))
        alpha = tuple(alpha)
        k = sum(alpha)
        if k == 0:
            return self.value(x)
        if self._derivative is not None:
            return float(self._derivative(x, alpha))
        if k == 1 and self._gradient is not None:
            return float(np.asarray(self._gradient(x))[alpha.index(1)])
        self.used_finite_differences = True
        return _fd_derivative(self.value, x, alpha)

    @property
    def exact(self) -> bool:
        """True when every declared derivative order has a closed form."""
        return self._derivative is not None or (self._gradient is not None and self.order == 1)


def _fd_derivative(fn, x, alpha):
    """Nested central differences. Step 1e-5 for first derivatives, widened for
    higher orders so round-off stays below truncation error."""
    k = sum(alpha)
    step = max(FD_STEP, 10.0 ** (-16.0 / (k + 2)))
    order = [i for i, a in enumerate(alpha) for _ in range(a)]

    def rec(y, idx):
        if idx == len(order):
            return fn(y)
        e = np.zeros_like(y)
        e[order[idx]] = step
        return (rec(y + e, idx + 1) - rec(y - e, idx + 1)) / (2 * step)

    return float(rec(np.array(x, float), 0))


def as_smooth(f, dim: int | None = None, order: int = 4) -> SmoothFunction:
    if isinstance(f, SmoothFunction):
        return f
    if isinstance(f, (RationalFunction, Polynomial)):
        return SmoothFunction.from_rational(f, order=order)
    if callable(f):
        if dim is None:
            raise ValueError("dimension needed for a bare callable")
        return SmoothFunction(f, dim, order=order)
    raise TypeError(f"cannot treat {type(f).__name__} as a smooth function")


# seminorms -------------------------------------------------------------------

@dataclass
class SeminormResult:
    value: float
    per_order: list
    finite_differences: bool


def ck_seminorm(f, grid: SampleGrid, N: int) -> SeminormResult:
    """max over grid points and |alpha| <= N of |d^alpha f|."""
    sf = as_smooth(f, grid.dim, order=max(N, 1))
    if N > sf.order and sf.exact is False:
        pass
    per = [0.0] * (N + 1)
    sf.used_finite_differences = False
    for alpha in multi_indices(grid.dim, N):
        k = sum(alpha)
        for x in grid.points:
            try:
                v = abs(sf.derivative(x, alpha))
            except ZeroDivisionError as exc:
                raise ValueError(f"evaluation failed at grid point {tuple(x)}: {exc}") from None
            if not math.isfinite(v):
                raise ValueError(f"evaluation failed at grid point {tuple(x)}")
            per[k] = max(per[k], v)
    return SeminormResult(max(per), per, sf.used_finite_differences)


# polynomial fits -----------------------------------------------------------------

@dataclass
class FitResult:
    polynomial: Polynomial
    coefficients: np.ndarray
    residual_l2: float
    c0_error: float
    c1_error: float | None
    ridge: bool
    condition: float

    def to_text(self) -> str:
        return self.polynomial.to_text()


def _default_vars(dim):
    return ("x", "y", "z")[:dim] if dim <= 3 else tuple(f"x{i + 1}" for i in range(dim))


def _design(points, exps):
    cols = [np.prod(points ** np.array(e)[None, :], axis=1) for e in exps]
    return np.stack(cols, axis=1)


def _poly_from_coeffs(variables, exps, coeffs) -> Polynomial:
    terms = {}
    for e, c in zip(exps, coeffs):
        if c != 0.0 and math.isfinite(c):
            terms[tuple(e)] = Fraction(repr(float(c)))
    return Polynomial(variables, terms)


def polynomial_fit(values, grid: SampleGrid, degree: int, variables: Sequence[str] | None = None,
                   gradients=None) -> FitResult:
    """Weighted least squares in the monomial basis of total degree <= degree.

    ``values`` are f at the grid points; ``gradients`` (optional, shape
    (N, dim)) give the C^1 error. The returned polynomial has exact decimal
    coefficients, so its text form re-parses to the same polynomial.
    """
    X = grid.points
    y = np.asarray(values, dtype=float).ravel()
    if y.shape != (len(X),):
        raise ValueError("one value per grid point is required")
    variables = tuple(variables) if variables is not None else _default_vars(grid.dim)
    exps = multi_indices(grid.dim, degree)
    if len(X) < len(exps):
        raise ValueError(f"underdetermined fit: {len(X)} points for {len(exps)} monomials")
    A = _design(X, exps)
    sw = np.sqrt(grid.weights)
    Aw = A * sw[:, None]
    yw = y * sw
    cond = float(np.linalg.cond(Aw))
    ridge = False
    if not math.isfinite(cond) or cond > 1e12:
        ridge = True
        M = Aw.T @ Aw + 1e-12 * np.eye(len(exps))
        c = np.linalg.solve(M, Aw.T @ yw)
    else:
        c = np.linalg.lstsq(Aw, yw, rcond=None)[0]
    poly = _poly_from_coeffs(variables, exps, c)
    # evaluate the exact-decimal polynomial so reported errors match the output
    c_used = np.array([float(poly.terms.get(tuple(e), 0)) for e in exps])
    fitted = A @ c_used
    r = y - fitted
    res = float(np.sqrt(np.sum(grid.weights * r * r)))
    c0 = float(np.max(np.abs(r)))
    c1 = None
    if gradients is not None:
        G = np.asarray(gradients, float).reshape(len(X), grid.dim)
        dP = np.stack([_grad_eval(X, exps, c_used, i) for i in range(grid.dim)], axis=1)
        c1 = float(max(c0, np.max(np.abs(G - dP))))
    return FitResult(poly, c_used, res, c0, c1, ridge, cond)


def _grad_eval(X, exps, coeffs, i):
    out = np.zeros(len(X))
    for e, c in zip(exps, coeffs):
        if e[i] and c:
            e2 = list(e)
            e2[i] -= 1
            out += c * e[i] * np.prod(X ** np.array(e2)[None, :], axis=1)
    return out


def fit_smooth(f, grid: SampleGrid, degree: int, variables=None) -> FitResult:
    sf = as_smooth(f, grid.dim)
    vals = np.array([sf.value(x) for x in grid.points])
    grads = np.array([sf.gradient(x) for x in grid.points])
    return polynomial_fit(vals, grid, degree, variables, grads)


# Nash twist -------------------------------------------------------------------------

def nash_twist(f, phi, eps: float, dim: int | None = None):
    """h = eps phi cos(f/eps), k = eps phi sin(f/eps) with exact first derivatives.

    Then dh^2 + dk^2 = phi^2 df^2 + eps^2 dphi^2 as symmetric forms.
    """
    if not eps > 0:
        raise ValueError("twist parameter eps must be positive")
    f = as_smooth(f, dim)
    phi = as_smooth(phi, f.dim)

    def h(x):
        return eps * phi.value(x) * math.cos(f.value(x) / eps)

    def k(x):
        return eps * phi.value(x) * math.sin(f.value(x) / eps)

    def dh(x):
        c, s = math.cos(f.value(x) / eps), math.sin(f.value(x) / eps)
        return eps * phi.gradient(x) * c - phi.value(x) * s * f.gradient(x)

    def dk(x):
        c, s = math.cos(f.value(x) / eps), math.sin(f.value(x) / eps)
        return eps * phi.gradient(x) * s + phi.value(x) * c * f.gradient(x)

    H = SmoothFunction(h, f.dim, gradient=dh, order=1, name="twist_h")
    K = SmoothFunction(k, f.dim, gradient=dk, order=1, name="twist_k")
    return H, K


def _sq(g):
    return np.outer(g, g)


def twist_identity_residual(f, phi, eps: float, grid: SampleGrid, dim=None) -> float:
    """max over the grid of |dh^2 + dk^2 - phi^2 df^2 - eps^2 dphi^2| (entrywise)."""
    f = as_smooth(f, dim or grid.dim)
    phi = as_smooth(phi, f.dim)
    H, K = nash_twist(f, phi, eps)
    worst = 0.0
    for x in grid.points:
        lhs = _sq(H.gradient(x)) + _sq(K.gradient(x))
        rhs = phi.value(x) ** 2 * _sq(f.gradient(x)) + eps ** 2 * _sq(phi.gradient(x))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


@dataclass
class TwistFitReport:
    h: Polynomial
    k: Polynomial
    degree: int
    delta_c0: float  # sup |phi^2 df^2 + eps^2 dphi^2 - (dh_d^2 + dk_d^2)|
    target_c0: float  # sup |phi^2 df^2 - (dh_d^2 + dk_d^2)|, tends to eps^2 sup|dphi^2|
    fit_h: FitResult
    fit_k: FitResult


def twist_polynomialize(f, phi, eps: float, degree: int, grid: SampleGrid, variables=None) -> TwistFitReport:
    f = as_smooth(f, grid.dim)
    phi = as_smooth(phi, grid.dim)
    H, K = nash_twist(f, phi, eps)
    fh = fit_smooth(H, grid, degree, variables)
    fk = fit_smooth(K, grid, degree, variables)
    exps = multi_indices(grid.dim, degree)
    delta = target = 0.0
    X = grid.points
    gh = np.stack([_grad_eval(X, exps, fh.coefficients, i) for i in range(grid.dim)], axis=1)
    gk = np.stack([_grad_eval(X, exps, fk.coefficients, i) for i in range(grid.dim)], axis=1)
    for j, x in enumerate(X):
        poly_form = _sq(gh[j]) + _sq(gk[j])
        base = phi.value(x) ** 2 * _sq(f.gradient(x))
        corr = eps ** 2 * _sq(phi.gradient(x))
        delta = max(delta, float(np.max(np.abs(base + corr - poly_form))))
        target = max(target, float(np.max(np.abs(base - poly_form))))
    return TwistFitReport(fh.polynomial, fk.polynomial, degree, delta, target, fh, fk)


# sum of squares ------------------------------------------------------------------------

@dataclass
class FormSample:
    grid: SampleGrid
    matrices: np.ndarray

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=float)
        n = self.grid.dim
        if self.matrices.shape != (len(self.grid), n, n):
            raise ValueError(f"expected {len(self.grid)} symmetric {n}x{n} matrices")
        if not np.allclose(self.matrices, np.transpose(self.matrices, (0, 2, 1)), atol=1e-14, rtol=0):
            raise ValueError("form sample is not symmetric")

    @classmethod
    def from_function(cls, grid: SampleGrid, fn) -> "FormSample":
        return cls(grid, np.array([fn(x) for x in grid.points]))


@dataclass
class SOSResult:
    phi: np.ndarray  # (N, D): phi_i = sqrt(c_i) per point
    coefficients: np.ndarray  # (N, D): c_i >= 0
    residual: np.ndarray  # (N,): Frobenius residual per point

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))


def sos_decompose(target: FormSample, dictionary: Sequence) -> SOSResult:
    """Pointwise non-negative least squares of target against dpsi_i (x) dpsi_i."""
    grid = target.grid
    n = grid.dim
    dic = [as_smooth(p, n) for p in dictionary]
    if not dic:
        raise ValueError("dictionary must not be empty")
    Ns, D = len(grid), len(dic)
    coeffs = np.zeros((Ns, D))
    resid = np.zeros(Ns)
    iu = np.triu_indices(n)
    # off-diagonal entries appear twice in the Frobenius norm
    wts = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
    for j, x in enumerate(grid.points):
        rows = np.array([d.gradient(x) for d in dic])
        if np.linalg.matrix_rank(rows) < n:
            raise ValueError(f"rank-deficient dictionary at grid point {tuple(x)}")
        A = np.stack([_sq(r)[iu] * wts for r in rows], axis=1)
        b = target.matrices[j][iu] * wts
        c, rn = nnls(A, b)
        coeffs[j] = c
        resid[j] = rn
    return SOSResult(np.sqrt(coeffs), coeffs, resid)


# graph embedding ---------------------------------------------------------------------

@dataclass
class GraphEmbedding:
    base: EmbeddedVariety
    rho: tuple
    variety: EmbeddedVariety
    graph_variables: tuple

    def lift(self, x) -> list:
        pt = [Fraction(c) for c in x] if is_exact_point(x) else [float(c) for c in x]
        return list(pt) + [r.evaluate(pt) for r in self.rho]

    def graph_residual(self, x):
        """Graph equations evaluated on the lifted point (zero by construction)."""
        z = self.lift(x)
        m = self.base.m
        return [c.evaluate(z) for c in self.variety.constraints[self.base.c:]] if m else []

    def verify_pullback(self, x) -> dict:
        """At a rational point x of the base, compare the induced metric of Y on an
        exact tangent basis with g0 + sum (d rho_j)^2, in exact arithmetic."""
        if not is_exact_point(x):
            raise ValueError("pullback verification needs a rational point")
        x = [Fraction(c) for c in x]
        if any(f.evaluate(x) != 0 for f in self.base.constraints):
            raise GeometryError("point is not on the base variety")
        z = self.lift(x)
        basis_Y = self.variety.tangent_basis_exact(z)
        if len(basis_Y) != self.base.m - _exact.rank(self.base.jacobian_exact(x)):
            raise GeometryError("dimension bookkeeping mismatch between base and graph")
        m = self.base.m
        A_base = self.base.ambient_form
        A_Y = self.variety.ambient_form
        drho = [[d.evaluate(x) for d in (r.diff(v) for v in self.base.variables)] for r in self.rho]
        k = len(basis_Y)
        g1 = [[sum(A_Y[a][b] * u[a] * w[b] for a in range(len(u)) for b in range(len(w))) for w in basis_Y]
              for u in basis_Y]
        proj = [u[:m] for u in basis_Y]
        g0 = [[sum(A_base[a][b] * u[a] * w[b] for a in range(m) for b in range(m)) for w in proj] for u in proj]
        add = [[sum(sum(dr[a] * u[a] for a in range(m)) * sum(dr[a] * w[a] for a in range(m)) for dr in drho)
                for w in proj] for u in proj]
        diff = [[g1[i][j] - g0[i][j] - add[i][j] for j in range(k)] for i in range(k)]
        exact_zero = all(d == 0 for row in diff for d in row)
        return {
            "point": [str(c) for c in x],
            "g1": [[str(c) for c in row] for row in g1],
            "g0": [[str(c) for c in row] for row in g0],
            "addend": [[str(c) for c in row] for row in add],
            "residual_zero": exact_zero,
            "max_abs_residual": str(max((abs(d) for row in diff for d in row), default=Fraction(0))),
        }


def graph_embedding(base: EmbeddedVariety, rho: Sequence, prefix: str = "w") -> GraphEmbedding:
    """Y = graph of rho over the base, inside A^(m + len(rho))."""
    if len(rho) % 2:
        raise ValueError("dimension bookkeeping mismatch: rho must list pairs (h_i, k_i)")
    rho = tuple((r if isinstance(r, Polynomial) else parse_polynomial(r, base.variables)).with_vars(base.variables)
                for r in rho)
    names = tuple(f"{prefix}{j + 1}" for j in range(len(rho)))
    clash = set(names) & set(base.variables)
    if clash:
        raise ValueError(f"graph variable names clash with base variables: {sorted(clash)}")
    allv = tuple(base.variables) + names
    cons = [c.with_vars(allv) for c in base.constraints]
    for name, r in zip(names, rho):
        cons.append(Polynomial.variable(allv, name) - r.with_vars(allv))
    m, L2 = base.m, len(rho)
    form = [[Fraction(0)] * (m + L2) for _ in range(m + L2)]
    for i in range(m):
        for j in range(m):
            form[i][j] = base.ambient_form[i][j]
    for j in range(L2):
        form[m + j][m + j] = Fraction(1)
    Y = EmbeddedVariety(cons, variables=allv, ambient_form=form, name=f"graph({base.name})")
    if Y.dimension != base.dimension:
        raise ValueError("dimension bookkeeping mismatch")
    return GraphEmbedding(base, rho, Y, names)


# curvature certificate ---------------------------------------------------------------------

def sample_rational_points(metric: ChartMetric, count: int, rng, box=None, denominator: int = 64):
    """Random rational points inside the chart guard; box defaults to [-1, 1] per variable.
    Points on the guard locus or at a pole of some metric entry are redrawn."""
    n = metric.n
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > 1000 * count:
            raise GeometryError("could not sample points inside the chart")
        pt = []
        for i in range(n):
            lo, hi = box[i] if box is not None else (-1, 1)
            num = int(rng.integers(int(lo * denominator), int(hi * denominator) + 1))
            pt.append(Fraction(num, denominator))
        if metric.in_domain(pt) and _regular_everywhere(metric, pt):
            out.append(pt)
    return out


def _regular_everywhere(metric, pt):
    try:
        for row in metric.g:
            for e in row:
                e.evaluate_exact(pt)
    except ZeroDivisionError:
        return False
    return True


def random_rational_plane(n: int, rng, max_int: int = 5):
    while True:
        v = [Fraction(int(rng.integers(-max_int, max_int + 1))) for _ in range(n)]
        w = [Fraction(int(rng.integers(-max_int, max_int + 1))) for _ in range(n)]
        if _exact.rank([v, w]) == 2:
            return v, w


@dataclass
class CurvatureCertificate:
    min_K: float | None
    max_K: float | None
    margin: float
    certified: bool
    samples: int
    skipped_isotropic: int
    label: str = "sampled certificate, not a proof over the variety"
    values: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "min_K": self.min_K,
            "max_K": self.max_K,
            "margin": self.margin,
            "certified": self.certified,
            "samples": self.samples,
            "skipped_isotropic": self.skipped_isotropic,
            "label": self.label,
        }


def certify_negative_curvature(model, points, planes_per_point: int, margin: float, rng=None,
                               planes=None) -> CurvatureCertificate:
    """Sample K over planes at the given points; certified iff max K <= -margin < 0.

    Chart models are evaluated exactly at rational points. Embedded models
    use the Gauss equation in floating point.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    values = []
    skipped = 0
    for j, x in enumerate(points):
        for q in range(planes_per_point):
            try:
                if isinstance(model, ChartMetric):
                    v, w = planes[j][q] if planes is not None else random_rational_plane(model.n, rng)
                    K = sectional_curvature(model, None, TangentPlane(tuple(x), tuple(v), tuple(w)))
                else:
                    P = model.tangent_projector(x)
                    if planes is not None:
                        v, w = planes[j][q]
                    else:
                        v = P @ rng.normal(size=model.m)
                        w = P @ rng.normal(size=model.m)
                    K = curvature_embedded_point(model, x, v, w)
            except GeometryError as exc:
                if "isotropic" in str(exc):
                    skipped += 1
                    continue
                raise
            values.append(K)
    if not values:
        return CurvatureCertificate(None, None, margin, False, 0, skipped)
    mn, mx = min(values), max(values)
    certified = margin > 0 and float(mx) <= -margin
    return CurvatureCertificate(float(mn), float(mx), margin, certified, len(values), skipped, values=values)
