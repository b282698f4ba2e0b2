"""Leader-referenced formation keeping with a pairwise PID consensus law.

Index 0 of the adjacency matrix is the reference (leader); followers are
1..n. Row ``i`` lists the agents that follower ``i`` listens to.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import SizeMismatch
from .rigid_body import (BodyState, InertiaMatrix, PlatformParams, Wrench, linear_drag,
                         rotation_body_to_inertial, rotation_inertial_to_body, step)


@dataclass(frozen=True)
class PIDGains:
    k_p: np.ndarray
    k_i: np.ndarray
    k_d: np.ndarray

    def __post_init__(self):
        for name in ("k_p", "k_i", "k_d"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (3,)).copy()
            object.__setattr__(self, name, v)

    @classmethod
    def uniform(cls, k_p: float, k_i: float = 0.0, k_d: float = 0.0) -> "PIDGains":
        return cls(k_p, k_i, k_d)


@dataclass(frozen=True)
class AgentNetwork:
    adjacency: np.ndarray
    offsets: np.ndarray
    gains: PIDGains
    integrator_limit: float = np.inf
    saturation: float | None = None
    literal_offsets: bool = False

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        d = np.asarray(self.offsets, dtype=float)
        object.__setattr__(self, "adjacency", a.astype(int))
        object.__setattr__(self, "offsets", d.reshape(-1, 3))
        n = self.n
        if a.shape != (n + 1, n + 1):
            raise SizeMismatch(f"adjacency must be {(n + 1, n + 1)} for {n} followers, got {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a) != 0):
            raise ValueError("self-loops are not allowed (a_ii must be 0)")
        unreached = self._followers_without_path_to_reference()
        if unreached:
            raise ValueError(f"followers {unreached} have no path to the reference agent")

    @property
    def n(self) -> int:
        return self.offsets.shape[0]

    def _followers_without_path_to_reference(self) -> list[int]:
        a = self.adjacency
        reached = {0}
        changed = True
        while changed:
            changed = False
            for i in range(1, self.n + 1):
                if i not in reached and any(a[i, j] and j in reached for j in range(self.n + 1)):
                    reached.add(i)
                    changed = True
        return [i for i in range(1, self.n + 1) if i not in reached]

    def template(self) -> np.ndarray:
        """Offsets including the reference row (d_ref = 0)."""
        return np.vstack([np.zeros(3), self.offsets])


@dataclass
class FormationError:
    per_agent: np.ndarray
    norm: float


def formation_error(positions, reference, offsets) -> FormationError:
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    d = np.asarray(offsets, dtype=float).reshape(-1, 3)
    if p.shape != d.shape:
        raise SizeMismatch(f"{p.shape[0]} positions but {d.shape[0]} offsets")
    e = (p - np.asarray(reference, dtype=float).reshape(3)) - d
    return FormationError(e, float(np.linalg.norm(e)))


def _pairwise_sums(network: AgentNetwork, positions: np.ndarray, velocities: np.ndarray):
    """Adjacency-weighted sums of pairwise errors and error rates for each follower."""
    a = network.adjacency[1:, :].astype(float)          # (n, n+1)
    deg = a.sum(axis=1)[:, None]
    neighbour_pos = a @ positions                       # sum_j a_ij r_j
    neighbour_vel = a @ velocities
    r, v = positions[1:], velocities[1:]
    if network.literal_offsets:
        offset_term = deg * network.offsets
    else:
        tmpl = network.template()
        offset_term = deg * network.offsets - a @ tmpl
    err = deg * r - neighbour_pos - offset_term
    rate = deg * v - neighbour_vel
    return err, rate


def control_forces(network: AgentNetwork, positions, velocities, integrator_state=None,
                   reference=None, reference_velocity=None, dt: float = 0.0):
    """Inertial-frame command force for every follower.

    ``positions`` and ``velocities`` hold the followers (n x 3); the reference
    defaults to the origin at rest. The integrator accumulates the summed
    pairwise error over ``dt`` and is clamped to ``integrator_limit``.
    Returns ``(forces, new_integrator_state)``.
    """
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    v = np.asarray(velocities, dtype=float).reshape(-1, 3)
    n = network.n
    if p.shape[0] != n or v.shape[0] != n:
        raise SizeMismatch(f"network has {n} followers, got {p.shape[0]} positions / {v.shape[0]} velocities")
    ref = np.zeros(3) if reference is None else np.asarray(reference, dtype=float).reshape(3)
    ref_v = np.zeros(3) if reference_velocity is None else np.asarray(reference_velocity, dtype=float).reshape(3)
    integ = np.zeros((n, 3)) if integrator_state is None else np.asarray(integrator_state, dtype=float).reshape(n, 3)

    err, rate = _pairwise_sums(network, np.vstack([ref, p]), np.vstack([ref_v, v]))
    lim = network.integrator_limit
    integ = np.clip(integ + err * dt, -lim, lim)
    g = network.gains
    force = -(g.k_p * err + g.k_i * integ + g.k_d * rate)
    if network.saturation is not None:
        force = np.clip(force, -network.saturation, network.saturation)
    return force, integ


@dataclass
class FormationAgent:
    state: BodyState
    params: PlatformParams
    drag: float = 0.0


@dataclass
class FormationLog:
    columns: list[str]
    rows: list[list[float]] = field(default_factory=list)
    converged: bool = False
    final_error: float = float("nan")
    initial_error: float = float("nan")

    def times(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    def error_norms(self) -> np.ndarray:
        return np.array([r[-1] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def point_mass(mass: float = 1.0, position=(0.0, 0.0, 0.0), velocity=(0.0, 0.0, 0.0),
               drag: float = 0.0) -> FormationAgent:
    inertia = InertiaMatrix(1.0, 1.0, 1.0)
    return FormationAgent(BodyState(r_I=position, v_B=velocity), PlatformParams(mass, inertia), drag)


def simulate_formation(network: AgentNetwork, leader: FormationAgent, followers: Sequence[FormationAgent],
                       duration: float, dt: float, tolerance: float = 1e-3,
                       engage_time: float | None = 0.0, log_every: int = 1) -> FormationLog:
    """Fly the leader open-loop and the followers under the formation law.

    Before ``engage_time`` (or forever, if it is ``None``) the followers
    receive no propulsion. Each logged row is
    ``t, x1, y1, z1, ..., xn, yn, zn, error_norm``.
    """
    if not (dt > 0 and duration > 0):
        raise ValueError("dt and duration must be positive")
    if len(followers) != network.n:
        raise SizeMismatch(f"network has {network.n} followers, got {len(followers)} agents")
    cols = ["t"] + [f"{ax}{i + 1}" for i in range(network.n) for ax in "xyz"] + ["error_norm"]
    log = FormationLog(cols)
    leader = replace(leader)
    followers = [replace(f) for f in followers]
    integ = np.zeros((network.n, 3))
    n_steps = int(round(duration / dt))

    def record(t):
        pos = np.array([f.state.r_I for f in followers])
        e = formation_error(pos, leader.state.r_I, network.offsets).norm
        log.rows.append([t, *pos.ravel().tolist(), e])
        return e

    log.initial_error = record(0.0)
    for k in range(n_steps):
        t = k * dt
        pos = np.array([f.state.r_I for f in followers])
        vel = np.array([rotation_body_to_inertial(f.state.angles) @ f.state.v_B for f in followers])
        lead_v = rotation_body_to_inertial(leader.state.angles) @ leader.state.v_B
        engaged = engage_time is not None and t >= engage_time - 1e-12
        if engaged:
            forces, integ = control_forces(network, pos, vel, integ, leader.state.r_I, lead_v, dt)
        else:
            forces = np.zeros((network.n, 3))
        for i, f in enumerate(followers):
            H = rotation_inertial_to_body(f.state.angles)
            w = Wrench(F_drag=linear_drag(f.state.v_B, f.drag), F_propul=H @ forces[i])
            f.state = step(f.state, w, f.params, dt, t)
        leader.state = step(leader.state, Wrench(F_drag=linear_drag(leader.state.v_B, leader.drag)),
                            leader.params, dt, t)
        if (k + 1) % log_every == 0 or k + 1 == n_steps:
            record((k + 1) * dt)
    log.final_error = log.rows[-1][-1]
    log.converged = bool(log.final_error < tolerance)
    return log
