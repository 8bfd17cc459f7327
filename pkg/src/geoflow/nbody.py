"""Gravitational n-body problem on a sign-sheet chart of the pair-distance cover.

Each pair carries an auxiliary value z_ij = sigma_ij * |q_i - q_j|. The potential
-G m_i m_j / z_ij is then rational in (q, z). We work in the eliminated chart,
where z is recomputed from q with the fixed sign sheet, so z_ij^2 = |q_i - q_j|^2
holds by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from geoflow.integrate import IntegratorConfig, Trajectory, integrate_steps

MODES = ("mass-weighted", "paper-literal")
AXES = ("x", "y", "z")


@dataclass
class NBodyConfig:
    masses: list
    positions: list  # n x 3
    velocities: list  # n x 3
    G: float = 1.0
    signs: object = "all-plus"  # or an n x n symmetric matrix of +-1
    delta_min: float | None = None
    mode: str = "mass-weighted"

    def __post_init__(self):
        self.masses = [float(m) for m in self.masses]
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        n = len(self.masses)
        if n < 1:
            raise ValueError("at least one body is required")
        if self.positions.shape[0] != n or self.velocities.shape[0] != n:
            raise ValueError("one position and one velocity per body are required")
        if any(not (m > 0 and math.isfinite(m)) for m in self.masses):
            raise ValueError("masses must be positive")
        if not self.G > 0:
            raise ValueError("gravitational constant must be positive")
        if self.mode not in MODES:
            raise ValueError(f"unknown metric mode {self.mode!r}; expected one of {MODES}")
        self.sign_matrix = self._signs()
        sep = self.min_separation(self.positions)
        if self.delta_min is None:
            self.delta_min = 1e-3 * sep if n > 1 else 0.0
        if n > 1:
            if not self.delta_min > 0:
                raise ValueError("delta_min must be positive")
            if sep < self.delta_min:
                raise ValueError(f"initial separation {sep!r} is below delta_min {self.delta_min!r}")

    @property
    def n(self) -> int:
        return len(self.masses)

    def _signs(self):
        n = len(self.masses)
        if isinstance(self.signs, str):
            if self.signs != "all-plus":
                raise ValueError("signs must be 'all-plus' or a matrix")
            return np.ones((n, n))
        S = np.asarray(self.signs, dtype=float)
        if S.shape != (n, n):
            raise ValueError(f"sign matrix must be {n}x{n}")
        iu = np.triu_indices(n, 1)
        if not np.all(np.isin(S[iu], (-1.0, 1.0))):
            raise ValueError("sign sheet entries must be +1 or -1")
        if not np.array_equal(S[iu], S.T[iu]):
            raise ValueError("sign matrix must be symmetric")
        return S

    @staticmethod
    def min_separation(Q) -> float:
        Q = np.asarray(Q).reshape(-1, 3)
        if len(Q) < 2:
            return math.inf
        d = np.linalg.norm(Q[:, None, :] - Q[None, :, :], axis=2)
        return float(np.min(d[np.triu_indices(len(Q), 1)]))

    def initial_state(self) -> list:
        m = np.array(self.masses)[:, None]
        P = self.velocities * m if self.mode == "mass-weighted" else self.velocities.copy()
        return self.positions.ravel().tolist() + P.ravel().tolist()

    def to_dict(self) -> dict:
        signs = self.signs if isinstance(self.signs, str) else np.asarray(self.signs).astype(int).tolist()
        return {
            "bodies": [{"mass": m, "q": list(map(float, q)), "v": list(map(float, v))}
                       for m, q, v in zip(self.masses, self.positions, self.velocities)],
            "G": self.G,
            "signs": signs,
            "mode": self.mode,
            "delta_min": self.delta_min,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NBodyConfig":
        bodies = data["bodies"]
        return cls(
            masses=[b["mass"] for b in bodies],
            positions=[b["q"] for b in bodies],
            velocities=[b.get("v", [0.0, 0.0, 0.0]) for b in bodies],
            G=data.get("G", 1.0),
            signs=data.get("signs", "all-plus"),
            delta_min=data.get("delta_min"),
            mode=data.get("mode", "mass-weighted"),
        )

    @classmethod
    def from_json(cls, path) -> "NBodyConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


class _Evaluator:
    """Adapter giving a plain function the calling shape of compiled expressions."""

    def __init__(self, fn):
        self._fn = fn

    def __call__(self, *args):
        return self._fn(*args)


class NBodySystem:
    """Numeric Hamiltonian system for the sign-sheet n-body chart.

    State order is (q_1x, q_1y, q_1z, ..., p_1x, ...), matching the
    (positions, momenta) layout of the symbolic systems.
    """

    convention = "mechanics"
    metric = None

    def __init__(self, cfg: NBodyConfig):
        self.cfg = cfg
        n = cfg.n
        self.n = 3 * n
        self.dim = 6 * n
        q = tuple(f"q{i + 1}{a}" for i in range(n) for a in AXES)
        self.variables = q + tuple(f"p_{v}" for v in q)
        self.masses = np.array(cfg.masses)
        self.inv_mass = 1.0 / self.masses if cfg.mode == "mass-weighted" else np.ones(n)
        iu = np.triu_indices(n, 1)
        self.pairs = list(zip(*iu))
        self.pair_i, self.pair_j = iu
        S = cfg.sign_matrix
        # coupling_ij = sigma_ij G m_i m_j, the potential is -coupling/|r|
        self.coupling = np.array([S[i, j] * cfg.G * self.masses[i] * self.masses[j] for i, j in self.pairs])
        self.potential = "gravity"
        self._inv_mass_list = [float(w) for w in self.inv_mass]
        self._pair_list = [(float(c), int(i), int(j)) for c, (i, j) in zip(self.coupling, self.pairs)]
        self._field_eval = _Evaluator(self._field)
        self._jac_eval = _Evaluator(self._jacobian_flat)
        self._H_eval = _Evaluator(self._energy)
        self._guard_eval = _Evaluator(self._guard) if n > 1 else None

    # core formulas -------------------------------------------------------------
    def _split(self, z):
        z = np.asarray(z, dtype=float)
        k = 3 * self.cfg.n
        return z[:k].reshape(-1, 3), z[k:].reshape(-1, 3)

    def forces(self, Q) -> np.ndarray:
        """-dV/dq_i with V = -sum coupling_ij / z_ij and z_ij = sigma_ij |q_i - q_j|."""
        F = np.zeros_like(Q)
        if not self.pairs:
            return F
        r = Q[self.pair_i] - Q[self.pair_j]
        d = np.sqrt(np.einsum("ij,ij->i", r, r))
        f = -(self.coupling / d ** 3)[:, None] * r
        np.add.at(F, self.pair_i, f)
        np.add.at(F, self.pair_j, -f)
        return F

    def _field(self, *z):
        # plain floats: for the handful of bodies used here this beats numpy dispatch
        k = self.n
        out = [0.0] * self.dim
        for b, w in enumerate(self._inv_mass_list):
            out[3 * b] = w * z[k + 3 * b]
            out[3 * b + 1] = w * z[k + 3 * b + 1]
            out[3 * b + 2] = w * z[k + 3 * b + 2]
        for c, i, j in self._pair_list:
            rx = z[3 * i] - z[3 * j]
            ry = z[3 * i + 1] - z[3 * j + 1]
            rz = z[3 * i + 2] - z[3 * j + 2]
            d2 = rx * rx + ry * ry + rz * rz
            s = -c / (d2 * math.sqrt(d2))
            out[k + 3 * i] += s * rx
            out[k + 3 * i + 1] += s * ry
            out[k + 3 * i + 2] += s * rz
            out[k + 3 * j] -= s * rx
            out[k + 3 * j + 1] -= s * ry
            out[k + 3 * j + 2] -= s * rz
        return out

    def _jacobian_flat(self, *z):
        return self.jacobian(np.array(z)).ravel().tolist()

    def jacobian(self, z) -> np.ndarray:
        Q, _ = self._split(z)
        n = self.cfg.n
        k = 3 * n
        J = np.zeros((self.dim, self.dim))
        for i in range(n):
            J[3 * i:3 * i + 3, k + 3 * i:k + 3 * i + 3] = self.inv_mass[i] * np.eye(3)
        for c, (i, j) in zip(self.coupling, self.pairs):
            r = Q[i] - Q[j]
            d = math.sqrt(r @ r)
            B = -c * (np.eye(3) / d ** 3 - 3.0 * np.outer(r, r) / d ** 5)
            si, sj = slice(k + 3 * i, k + 3 * i + 3), slice(k + 3 * j, k + 3 * j + 3)
            qi, qj = slice(3 * i, 3 * i + 3), slice(3 * j, 3 * j + 3)
            J[si, qi] += B
            J[si, qj] -= B
            J[sj, qi] -= B
            J[sj, qj] += B
        return J

    def _energy(self, *cols):
        cols = [np.asarray(c, dtype=float) for c in cols]
        n = self.cfg.n
        k = 3 * n
        kin = sum(0.5 * self.inv_mass[b] * (cols[k + 3 * b] ** 2 + cols[k + 3 * b + 1] ** 2 + cols[k + 3 * b + 2] ** 2)
                  for b in range(n))
        pot = 0.0
        for c, (i, j) in zip(self.coupling, self.pairs):
            d = np.sqrt(sum((cols[3 * i + a] - cols[3 * j + a]) ** 2 for a in range(3)))
            pot = pot - c / d
        return [kin + pot]

    def _guard(self, *z):
        # positive part of (min separation - delta_min): zero once the guard trips
        d2 = min((z[3 * i] - z[3 * j]) ** 2 + (z[3 * i + 1] - z[3 * j + 1]) ** 2 + (z[3 * i + 2] - z[3 * j + 2]) ** 2
                 for _, i, j in self._pair_list)
        return [max(math.sqrt(d2) - self.cfg.delta_min, 0.0)]

    # public numeric interface ----------------------------------------------------
    def vector_field(self, z) -> np.ndarray:
        return np.array(self._field(*np.asarray(z, float)))

    def energy(self, z) -> float:
        return float(self._energy(*np.asarray(z, float))[0])

    def guard_value(self, z) -> float:
        return 1.0 if self._guard_eval is None else self._guard(*z)[0]

    def pair_values(self, z) -> np.ndarray:
        """z_ij = sigma_ij |q_i - q_j| in pair order."""
        Q, _ = self._split(z)
        S = self.cfg.sign_matrix
        return np.array([S[i, j] * np.linalg.norm(Q[i] - Q[j]) for i, j in self.pairs])

    def linear_momentum(self, z) -> np.ndarray:
        Q, P = self._split(z)
        if self.cfg.mode == "mass-weighted":
            return P.sum(axis=0)
        return (P * self.masses[:, None]).sum(axis=0)

    def angular_momentum(self, z) -> np.ndarray:
        Q, P = self._split(z)
        if self.cfg.mode == "paper-literal":
            P = P * self.masses[:, None]
        return np.cross(Q, P).sum(axis=0)


def build_nbody_system(cfg: NBodyConfig) -> NBodySystem:
    return NBodySystem(cfg)


def _monitors(sys: NBodySystem, states: np.ndarray) -> dict:
    """Linear and angular momentum and minimum separation per recorded state.

    Both are built from the canonical momenta, which are the Noether charges
    of translations and rotations in either metric mode.
    """
    N = len(states)
    n = sys.cfg.n
    Q = states[:, :3 * n].reshape(N, n, 3)
    P = states[:, 3 * n:].reshape(N, n, 3)
    lin = P.sum(axis=1)
    ang = np.cross(Q, P).sum(axis=1)
    obs = {}
    for a, name in enumerate(AXES):
        obs[f"P{name}"] = lin[:, a]
        obs[f"L{name}"] = ang[:, a]
    if n > 1:
        r = Q[:, sys.pair_i] - Q[:, sys.pair_j]
        obs["min_separation"] = np.sqrt(np.einsum("tpi,tpi->tp", r, r)).min(axis=1)
    return obs


def simulate_nbody(cfg: NBodyConfig, icfg: IntegratorConfig | None = None, z0=None,
                   raise_on_failure: bool = False) -> Trajectory:
    """Integrate the n-body system. A near collision stops the run with
    reason "guard-exit" and the partial trajectory."""
    icfg = icfg or IntegratorConfig(h=1e-3, T=1.0)
    sys = build_nbody_system(cfg)
    n, h = icfg.steps()
    start = cfg.initial_state() if z0 is None else list(z0)
    traj = integrate_steps(sys, start, h, n, icfg, None, raise_on_failure)
    traj.observables.update(_monitors(sys, traj.states))
    traj.metadata["observable_names"] = sorted(traj.observables)
    traj.metadata.update({
        "signs": cfg.sign_matrix.astype(int).tolist(),
        "masses": list(cfg.masses),
        "mode": cfg.mode,
        "G": cfg.G,
        "delta_min": cfg.delta_min,
    })
    return traj


def momentum_drift(traj: Trajectory) -> tuple[float, float]:
    """(max |P(t) - P(0)|, max |L(t) - L(0)|) over the recorded states."""
    P = np.stack([traj.observables[f"P{a}"] for a in AXES], axis=1)
    L = np.stack([traj.observables[f"L{a}"] for a in AXES], axis=1)
    return float(np.max(np.abs(P - P[0]))), float(np.max(np.abs(L - L[0])))


def cover_consistency(traj: Trajectory, signs=None) -> dict:
    """Max |z_ij^2 - |q_i - q_j|^2| with z recomputed through the sign sheet,
    plus whether each z_ij keeps its sign along the trajectory."""
    S = np.asarray(signs if signs is not None else traj.metadata["signs"], dtype=float)
    n = S.shape[0]
    Q = traj.states[:, :3 * n].reshape(len(traj.states), n, 3)
    worst = 0.0
    constant = True
    for i, j in zip(*np.triu_indices(n, 1)):
        r = Q[:, i] - Q[:, j]
        s2 = np.einsum("ti,ti->t", r, r)
        zij = S[i, j] * np.sqrt(s2)
        worst = max(worst, float(np.max(np.abs(zij * zij - s2))) if len(s2) else 0.0)
        constant &= bool(np.all(np.sign(zij) == S[i, j]))
    return {"max_residual": worst, "sign_constant": constant}


def circular_two_body(separation: float = 1.0, mass: float = 1.0, G: float = 1.0) -> NBodyConfig:
    """Equal masses on a circle of diameter ``separation`` about the origin."""
    r = separation / 2.0
    speed = math.sqrt(G * 2 * mass / separation ** 3) * r
    return NBodyConfig(
        masses=[mass, mass],
        positions=[[r, 0, 0], [-r, 0, 0]],
        velocities=[[0, speed, 0], [0, -speed, 0]],
        G=G,
    )


def orbit_period(traj: Trajectory, body: int = 0) -> float:
    """Period from successive upward crossings of q_y = 0 (linear interpolation)."""
    y = traj.states[:, 3 * body + 1]
    t = traj.times
    ups = [t[k] - y[k] * (t[k + 1] - t[k]) / (y[k + 1] - y[k])
           for k in range(len(y) - 1) if y[k] < 0 <= y[k + 1]]
    if len(ups) < 2:
        raise ValueError("fewer than two crossings recorded; integrate longer")
    return float(np.mean(np.diff(ups)))
