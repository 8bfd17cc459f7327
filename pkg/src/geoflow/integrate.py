"""Fixed-step flows of Hamiltonian systems and of particles on embedded varieties.

Single trajectories step in plain Python floats (the compiled evaluators are
cheapest that way for n <= 4); ensembles step a (dim, N) numpy array.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from geoflow.expr import RationalFunction, compile_functions
from geoflow.geometry import EmbeddedVariety, GeometryError
from geoflow.symplectic import HamiltonianSystem, sphere_bundle_constraint

METHODS = ("implicit-midpoint", "rk4", "constrained-projection")


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step: int | None = None, partial: "Trajectory | None" = None):
        self.step = step
        self.partial = partial
        super().__init__(message if step is None else f"{message} (step {step})")


@dataclass
class IntegratorConfig:
    method: str = "implicit-midpoint"
    h: float = 1e-3
    T: float = 1.0
    tol: float = 1e-14
    constraint_tol: float = 1e-12
    max_iter: int = 50
    record_every: int = 1
    # absolute threshold on |guard(x)| below which a run stops with guard-exit
    guard_tol: float = 1e-12

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        if not self.T >= 0:
            raise ValueError("horizon T must be non-negative")
        if not (self.tol > 0 and self.constraint_tol > 0 and self.guard_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.record_every < 1:
            raise ValueError("max_iter and record_every must be at least 1")

    def steps(self) -> tuple[int, float]:
        """Number of steps and the adjusted step that lands exactly on T."""
        if self.T == 0:
            return 0, self.h
        n = max(1, math.ceil(self.T / self.h - 1e-9))
        return n, self.T / n


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    variables: tuple
    energy: np.ndarray | None = None
    constraint: np.ndarray | None = None
    observables: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    reason: str = "horizon"

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self):
        return len(self.times)

    def energy_drift(self) -> float:
        if self.energy is None or len(self.energy) == 0:
            return 0.0
        return float(np.max(np.abs(self.energy - self.energy[0])))

    def constraint_drift(self) -> float:
        if self.constraint is None or len(self.constraint) == 0:
            return 0.0
        return float(np.max(np.abs(self.constraint)))

    def columns(self):
        cols = ["t", *self.variables]
        data = [self.times, *self.states.T]
        if self.energy is not None:
            cols.append("H")
            data.append(self.energy)
        if self.constraint is not None:
            cols.append("C")
            data.append(self.constraint)
        for k in sorted(self.observables):
            cols.append(k)
            data.append(np.asarray(self.observables[k]))
        return cols, data

    def to_csv(self, path) -> Path:
        """Write the CSV plus a JSON metadata sidecar next to it."""
        path = Path(path)
        cols, data = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in zip(*data):
                w.writerow([format(float(v), ".17g") for v in row])
        meta = {"reason": self.reason, "samples": len(self.times), "columns": cols, **self.metadata}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        path = Path(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        cols = rows[0]
        arr = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(cols))
        meta = {}
        side = path.with_suffix(".json")
        if side.exists():
            meta = json.loads(side.read_text())
        extra = [c for c in cols[1:] if c in ("H", "C") or c in meta.get("observable_names", [])]
        nvar = len(cols) - 1 - len(extra)
        tr = cls(arr[:, 0], arr[:, 1:1 + nvar], tuple(cols[1:1 + nvar]), reason=meta.pop("reason", "horizon"))
        for j, c in enumerate(cols[1 + nvar:], start=1 + nvar):
            if c == "H":
                tr.energy = arr[:, j]
            elif c == "C":
                tr.constraint = arr[:, j]
            else:
                tr.observables[c] = arr[:, j]
        meta.pop("samples", None)
        meta.pop("columns", None)
        tr.metadata = meta
        return tr


# stepping kernels -----------------------------------------------------------

def _midpoint_step(f, z, h, tol, max_iter):
    """One implicit-midpoint step by fixed-point iteration on floats.

    Returns (z1, iterations) or (None, iterations) if it fails to contract.
    """
    X0 = f(*z)
    z1 = [a + h * x for a, x in zip(z, X0)]
    scale = 1.0 + max(abs(a) for a in z)
    prev = math.inf
    for it in range(1, max_iter + 1):
        zm = [0.5 * (a + b) for a, b in zip(z, z1)]
        X = f(*zm)
        new = [a + h * x for a, x in zip(z, X)]
        err = max(abs(a - b) for a, b in zip(new, z1))
        z1 = new
        if err <= tol * scale:
            return z1, it
        if it > 3 and err >= prev:
            # contraction stalled at round-off level
            if err <= 1e3 * tol * scale:
                return z1, it
            return None, it
        prev = err
    return None, max_iter


def _midpoint_newton(f, jac, z, h, tol, max_iter, d):
    z0 = np.array(z, dtype=float)
    z1 = z0 + h * np.array(f(*z), dtype=float)
    eye = np.eye(d)
    scale = 1.0 + np.max(np.abs(z0))
    for it in range(1, max_iter + 1):
        zm = 0.5 * (z0 + z1)
        r = z1 - z0 - h * np.array(f(*zm), dtype=float)
        J = np.array(jac(*zm), dtype=float).reshape(d, d)
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(J)):
            return None, it
        dz = np.linalg.solve(eye - 0.5 * h * J, r)
        z1 = z1 - dz
        if np.max(np.abs(dz)) <= tol * scale:
            return z1.tolist(), it
    return None, max_iter


def _rk4_step(f, z, h):
    k1 = f(*z)
    k2 = f(*[a + 0.5 * h * k for a, k in zip(z, k1)])
    k3 = f(*[a + 0.5 * h * k for a, k in zip(z, k2)])
    k4 = f(*[a + h * k for a, k in zip(z, k3)])
    return [a + h / 6.0 * (p + 2 * q + 2 * r + s) for a, p, q, r, s in zip(z, k1, k2, k3, k4)]


class _Monitors:
    def __init__(self, sys: HamiltonianSystem, observables: Mapping[str, Callable] | None):
        self.H = sys._H_eval
        self.C = None
        if sys.metric is not None and sys.potential is None:
            self.C = compile_functions([sphere_bundle_constraint(sys.metric)], sys.variables)
        self.obs = dict(observables or {})
        self.guard = sys._guard_eval

    def guard_ok(self, z, guard_tol) -> bool:
        if self.guard is None:
            return True
        return abs(self.guard(*z[: len(z)])[0]) >= guard_tol


def _check_start(sys: HamiltonianSystem, z0, guard_tol):
    z0 = [float(c) for c in z0]
    if len(z0) != sys.dim:
        raise ValueError(f"initial state must have {sys.dim} components")
    if not all(math.isfinite(c) for c in z0):
        raise ValueError("initial state is not finite")
    if sys._guard_eval is not None and abs(sys._guard_eval(*z0)[0]) < guard_tol:
        raise IntegrationError("initial point lies outside the chart guard region")
    H0 = sys._H_eval(*z0)[0]
    if not math.isfinite(H0):
        raise IntegrationError("Hamiltonian is not finite at the initial point")
    return z0


def integrate_steps(sys: HamiltonianSystem, z0, h: float, nsteps: int, cfg: IntegratorConfig,
                    observables=None, raise_on_failure: bool = True, tangent=None):
    """Core loop with a signed step h. Returns a Trajectory.

    If ``tangent`` is a (dim, k) array, it is advanced by the exact
    linearization of the discrete map and stored in metadata["tangent"]
    at the recorded times (as a list of arrays).
    """
    z = _check_start(sys, z0, cfg.guard_tol)
    f = sys._field_eval._fn
    jac = sys._jac_eval._fn if (cfg.method == "implicit-midpoint" or tangent is not None) else None
    mon = _Monitors(sys, observables)
    d = sys.dim
    rec_t, rec_z = [0.0], [list(z)]
    U = None if tangent is None else np.array(tangent, dtype=float).reshape(d, -1)
    rec_u = [U.copy()] if U is not None else None
    reason = "horizon"
    iters = 0
    fail_msg = None
    eye = np.eye(d)
    step = 0
    for step in range(1, nsteps + 1):
        if cfg.method == "rk4":
            z1 = _rk4_step(f, z, h)
            if U is not None:
                U = _rk4_tangent(f, jac, z, U, h, d)
        else:
            z1, it = _midpoint_step(f, z, h, cfg.tol, cfg.max_iter)
            if z1 is None:
                z1, it = _midpoint_newton(f, jac, z, h, cfg.tol, cfg.max_iter, d)
            iters += it
            if z1 is None:
                fail_msg = "implicit-midpoint solver did not converge"
                reason = "divergence"
                break
            if U is not None:
                zm = [0.5 * (a + b) for a, b in zip(z, z1)]
                J = np.array(jac(*zm), dtype=float).reshape(d, d)
                U = np.linalg.solve(eye - 0.5 * h * J, (eye + 0.5 * h * J) @ U)
        if not all(math.isfinite(c) for c in z1):
            fail_msg = "state became non-finite"
            reason = "divergence"
            break
        if not mon.guard_ok(z1, cfg.guard_tol):
            reason = "guard-exit"
            break
        z = z1
        if step % cfg.record_every == 0 or step == nsteps:
            rec_t.append(step * h)
            rec_z.append(list(z))
            if U is not None:
                rec_u.append(U.copy())
    traj = _assemble(sys, rec_t, rec_z, mon, reason)
    traj.metadata.update({
        "method": cfg.method,
        "h": abs(h),
        "direction": 1 if h > 0 else -1,
        "steps_taken": step if reason == "horizon" else step - 1,
        "mean_iterations": (iters / max(step, 1)) if cfg.method == "implicit-midpoint" else None,
        "convention": sys.convention,
    })
    if rec_u is not None:
        traj.metadata["tangent"] = rec_u
    if fail_msg is not None:
        traj.metadata["failure"] = fail_msg
        traj.metadata["failure_step"] = step
        if raise_on_failure:
            raise IntegrationError(fail_msg, step, traj)
    return traj


def _rk4_tangent(f, jac, z, U, h, d):
    def J(zz):
        return np.array(jac(*zz), dtype=float).reshape(d, d)

    k1z = f(*z)
    z2 = [a + 0.5 * h * k for a, k in zip(z, k1z)]
    k2z = f(*z2)
    z3 = [a + 0.5 * h * k for a, k in zip(z, k2z)]
    k3z = f(*z3)
    z4 = [a + h * k for a, k in zip(z, k3z)]
    k1 = J(z) @ U
    k2 = J(z2) @ (U + 0.5 * h * k1)
    k3 = J(z3) @ (U + 0.5 * h * k2)
    k4 = J(z4) @ (U + h * k3)
    return U + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _assemble(sys, rec_t, rec_z, mon, reason):
    states = np.array(rec_z, dtype=float)
    times = np.array(rec_t, dtype=float)
    if times.size > 1 and times[-1] < times[0]:
        times = -times
    cols = states.T
    energy = np.array(np.broadcast_to(mon.H(*cols)[0], times.shape), dtype=float)
    constraint = None
    if mon.C is not None:
        constraint = np.array(np.broadcast_to(mon.C(*cols)[0], times.shape), dtype=float)
    obs = {k: np.array([fn(s) for s in states], dtype=float) for k, fn in mon.obs.items()}
    traj = Trajectory(times, states, sys.variables, energy, constraint, obs, {}, reason)
    traj.metadata["observable_names"] = sorted(obs)
    return traj


def flow_chart(sys: HamiltonianSystem, z0, cfg: IntegratorConfig, observables=None,
               raise_on_failure: bool = True) -> Trajectory:
    """Integrate the Hamiltonian field from z0 over [0, cfg.T]."""
    if cfg.method == "constrained-projection":
        raise ValueError("constrained-projection is for embedded varieties; use flow_embedded")
    n, h = cfg.steps()
    return integrate_steps(sys, z0, h, n, cfg, observables, raise_on_failure)


def flow_ensemble(sys: HamiltonianSystem, Z0, cfg: IntegratorConfig, observer=None):
    """Integrate N initial states at once; Z0 has shape (N, dim).

    ``observer(t, Z, alive)`` is called after every recorded step with Z of
    shape (dim, N). Members that leave the guard region or diverge are frozen
    and marked dead. Returns (final states (N, dim), reasons list).
    """
    Z = np.array(Z0, dtype=float).T.copy()
    d, N = Z.shape
    if d != sys.dim:
        raise ValueError(f"states must have {sys.dim} components")
    f = sys._field_eval._fn
    g = sys._guard_eval
    nsteps, h = cfg.steps()
    alive = np.ones(N, dtype=bool)
    reasons = ["horizon"] * N

    def X(zz):
        return np.array([np.broadcast_to(c, (N,)) for c in f(*zz)], dtype=float)

    if g is not None:
        gv = np.broadcast_to(g(*Z)[0], (N,))
        if np.any(np.abs(gv) < cfg.guard_tol):
            raise IntegrationError("initial point lies outside the chart guard region")
    if observer is not None:
        observer(0.0, Z, alive)
    for step in range(1, nsteps + 1):
        if cfg.method == "rk4":
            k1 = X(Z)
            k2 = X(Z + 0.5 * h * k1)
            k3 = X(Z + 0.5 * h * k2)
            k4 = X(Z + h * k3)
            Z1 = Z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            Z1 = Z + h * X(Z)
            scale = 1.0 + np.max(np.abs(Z), axis=0)
            prev = np.inf
            for it in range(cfg.max_iter):
                new = Z + h * X(0.5 * (Z + Z1))
                err = np.max(np.abs(new - Z1), axis=0)
                Z1 = new
                worst = np.max(np.where(alive, err / scale, 0.0))
                if worst <= cfg.tol or (it > 3 and worst >= prev and worst <= 1e3 * cfg.tol):
                    break
                prev = worst
        bad = ~np.all(np.isfinite(Z1), axis=0)
        if g is not None:
            gv = np.broadcast_to(g(*np.where(bad, Z, Z1))[0], (N,))
            exit_ = (np.abs(gv) < cfg.guard_tol) & alive & ~bad
        else:
            exit_ = np.zeros(N, dtype=bool)
        for k in np.nonzero((bad & alive) | exit_)[0]:
            reasons[k] = "divergence" if bad[k] else "guard-exit"
        alive = alive & ~bad & ~exit_
        Z = np.where(alive, Z1, Z)
        if observer is not None and (step % cfg.record_every == 0 or step == nsteps):
            observer(step * h, Z, alive)
        if not alive.any():
            break
    return Z.T.copy(), reasons


# embedded varieties ---------------------------------------------------------

def rattle_step(V: EmbeddedVariety, x, v, h: float, tol: float, max_iter: int = 50):
    """One RATTLE step for a free particle on {F = 0}; h may be negative."""
    if not V.c:
        return x + h * v, v
    Ainv = V.Ainv
    B = Ainv @ V.jacobian(x).T
    x1 = x + h * v
    lam = np.zeros(V.c)
    for _ in range(max_iter):
        r = V.residual(x1)
        if np.max(np.abs(r)) <= tol:
            break
        J1 = V.check_regular(x1)
        lam += np.linalg.solve(J1 @ B, r)
        x1 = x + h * v - B @ lam
    else:
        raise IntegrationError("position projection did not converge")
    vh = (x1 - x) / h
    J1 = V.check_regular(x1)
    B1 = Ainv @ J1.T
    v1 = vh - B1 @ np.linalg.solve(J1 @ B1, J1 @ vh)
    return x1, v1


def flow_embedded(V: EmbeddedVariety, x0, v0, cfg: IntegratorConfig, observables=None) -> Trajectory:
    """Free particle on {F = 0} with the ambient form: RATTLE steps.

    Each step takes a half kick with a multiplier chosen so the new position
    satisfies F = 0 (Newton on the multiplier), a drift, then a second half
    kick projecting the velocity onto ker dF.
    """
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    m = V.m
    if x.shape != (m,) or v.shape != (m,):
        raise ValueError(f"position and velocity must have {m} components")
    tol = cfg.constraint_tol
    scale = 1.0 + np.max(np.abs(x))
    J0 = V.check_regular(x)
    if np.max(np.abs(V.residual(x)), initial=0.0) > 1e3 * tol * scale ** 2:
        raise GeometryError("initial position is not on the variety")
    if np.max(np.abs(J0 @ v), initial=0.0) > 1e3 * tol * max(1.0, np.max(np.abs(v))) * max(1.0, np.max(np.abs(J0), initial=1.0)):
        raise GeometryError("initial velocity is not tangent")
    nsteps, h = cfg.steps()
    rec_t, rec_x, rec_v = [0.0], [x.copy()], [v.copy()]
    reason = "horizon"
    for step in range(1, nsteps + 1):
        try:
            x1, v1 = rattle_step(V, x, v, h, tol * scale, cfg.max_iter)
        except IntegrationError as exc:
            raise IntegrationError(str(exc), step) from None
        if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(v1))):
            reason = "divergence"
            break
        x, v = x1, v1
        if step % cfg.record_every == 0 or step == nsteps:
            rec_t.append(step * h)
            rec_x.append(x.copy())
            rec_v.append(v.copy())
    X = np.array(rec_x)
    Vv = np.array(rec_v)
    names = tuple(V.variables) + tuple(f"v_{n}" for n in V.variables)
    kinetic = 0.5 * np.einsum("ti,ij,tj->t", Vv, V.A, Vv)
    obs = {
        "constraint_residual": np.array([np.max(np.abs(V.residual(p)), initial=0.0) for p in X]),
        "tangency_residual": np.array([np.max(np.abs(V.jacobian(p) @ q), initial=0.0) for p, q in zip(X, Vv)]),
    }
    for k, fn in (observables or {}).items():
        obs[k] = np.array([fn(s) for s in np.hstack([X, Vv])])
    traj = Trajectory(np.array(rec_t), np.hstack([X, Vv]), names, kinetic, None, obs,
                      {"method": "constrained-projection", "h": h, "observable_names": sorted(obs)}, reason)
    return traj


# linearized flow -------------------------------------------------------------

def metric_norms(sys: HamiltonianSystem, z, U) -> np.ndarray:
    """Norm of phase tangent vectors: |dx|_g^2 + |dp|_{g^-1}^2 (Euclidean without a metric)."""
    U = np.asarray(U, dtype=float)
    n = sys.n
    if sys.metric is None:
        return np.linalg.norm(U, axis=0)
    g = sys.metric.metric_at([float(c) for c in z[:n]])
    ginv = sys.metric.inverse_at([float(c) for c in z[:n]])
    dx, dp = U[:n], U[n:]
    sq = np.einsum("ik,ij,jk->k", dx, g, dx) + np.einsum("ik,ij,jk->k", dp, ginv, dp)
    return np.sqrt(np.maximum(sq, 0.0))


def variational_flow(sys: HamiltonianSystem, z0, u0, cfg: IntegratorConfig) -> Trajectory:
    """Integrate z' = X(z) together with u' = DX(z) u.

    With implicit midpoint the tangent is pushed by the exact derivative of
    the discrete map, (I - h/2 DX(z_mid)) u1 = (I + h/2 DX(z_mid)) u0.
    The trajectory carries observable ``tangent_norm``.
    """
    u0 = np.asarray(u0, dtype=float).reshape(sys.dim, -1)
    if not np.any(u0):
        raise ValueError("tangent perturbation must be nonzero")
    n, h = cfg.steps()
    traj = integrate_steps(sys, z0, h, n, cfg, tangent=u0)
    U = traj.metadata.pop("tangent")
    traj.metadata["tangent_vectors"] = np.array([u[:, 0] for u in U])
    traj.observables["tangent_norm"] = np.array([metric_norms(sys, z, u)[0] for z, u in zip(traj.states, U)])
    traj.metadata["observable_names"] = sorted(traj.observables)
    return traj


def rescaling_conjugacy_check(sys: HamiltonianSystem, z0, b, T: float, cfg: IntegratorConfig) -> float:
    """max over sample times of |phi_t(psi_b z0) - psi_b(phi_{b t} z0)|.

    Both runs use the same step size, so the deviation measures integration
    error on top of the exact conjugacy predicted by degree-2 homogeneity.
    Negative b integrates the second orbit backwards in time.
    """
    from geoflow.symplectic import fiber_rescaling

    psi, report = fiber_rescaling(sys, b)
    bf = float(b)
    base = IntegratorConfig(**{**asdict(cfg), "T": T})
    nsteps, h = base.steps()
    every = max(1, cfg.record_every)
    left = integrate_steps(sys, psi(z0), h, nsteps, base)
    # phi_{b t}: |b| times as many steps, with the sign of b
    k = abs(bf)
    if abs(k - round(k)) < 1e-12 and round(k) >= 1:
        mult = int(round(k))
        right = integrate_steps(sys, z0, math.copysign(h, bf), nsteps * mult,
                                IntegratorConfig(**{**asdict(base), "record_every": mult * every}))
    else:
        right = integrate_steps(sys, z0, h * bf, nsteps, base)
    if left.reason != "horizon" or right.reason != "horizon":
        raise IntegrationError("conjugacy check left the chart before the horizon")
    L = left.states
    R = np.array([psi(s) for s in right.states])
    m = min(len(L), len(R))
    return float(np.max(np.abs(L[:m] - R[:m])))
