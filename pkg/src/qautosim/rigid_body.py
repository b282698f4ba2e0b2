"""Six degree-of-freedom platform dynamics in body-frame Euler-angle form.

Rotation convention (aerospace Z-Y-X, passive): a vector with inertial
components ``r_I`` has body components ``r_B = H(theta) @ r_I`` where

    H = Rx(theta_x) @ Ry(theta_y) @ Rz(theta_z)

    Rz(a) = [[ cos a, sin a, 0], [-sin a, cos a, 0], [0, 0, 1]]
    Ry(a) = [[cos a, 0, -sin a], [0, 1, 0], [sin a, 0, cos a]]
    Rx(a) = [[1, 0, 0], [0, cos a, sin a], [0, -sin a, cos a]]

The state vector used by the integrator is
``[r_I (3), theta (3), v_B (3), omega_B (3)]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import math

import numpy as np

from .errors import GimbalLock, NonFinite, NonPositiveMass, SingularInertia

GIMBAL_MARGIN = 1e-6
_PITCH_LIMIT = math.pi / 2 - GIMBAL_MARGIN


@dataclass(frozen=True)
class EulerAngles:
    theta_x: float = 0.0
    theta_y: float = 0.0
    theta_z: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.theta_x, self.theta_y, self.theta_z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "EulerAngles":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class BodyState:
    r_I: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angles: EulerAngles = field(default_factory=EulerAngles)
    v_B: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_B: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("r_I", "v_B", "omega_B"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.r_I, self.angles.as_array(), self.v_B, self.omega_B])

    @classmethod
    def from_vector(cls, x) -> "BodyState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), EulerAngles.from_array(x[3:6]), x[6:9].copy(), x[9:12].copy())


@dataclass(frozen=True)
class InertiaMatrix:
    I_xx: float
    I_yy: float
    I_zz: float

    def __post_init__(self):
        d = self.diagonal()
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise SingularInertia(f"principal moments must be positive, got {d.tolist()}")
        a, b, c = d
        if a + b < c or b + c < a or a + c < b:
            raise SingularInertia(f"principal moments violate the triangle inequality: {d.tolist()}")

    def diagonal(self) -> np.ndarray:
        return np.array([self.I_xx, self.I_yy, self.I_zz], dtype=float)

    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal())


@dataclass(frozen=True)
class Wrench:
    """Body-frame force and moment, each split into drag and propulsion parts."""

    F_drag: np.ndarray = field(default_factory=lambda: np.zeros(3))
    F_propul: np.ndarray = field(default_factory=lambda: np.zeros(3))
    M_drag: np.ndarray = field(default_factory=lambda: np.zeros(3))
    M_propul: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("F_drag", "F_propul", "M_drag", "M_propul"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))

    @property
    def F_B(self) -> np.ndarray:
        return self.F_drag + self.F_propul

    @property
    def M_B(self) -> np.ndarray:
        return self.M_drag + self.M_propul


@dataclass(frozen=True)
class MassSchedule:
    """Piecewise-linear mass law; constant beyond the end points."""

    times: tuple
    masses: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        m = np.asarray(self.masses, dtype=float)
        if t.shape != m.shape or t.size == 0:
            raise ValueError("mass schedule needs matching, non-empty time and mass lists")
        if np.any(np.diff(t) <= 0):
            raise ValueError("mass schedule times must be strictly increasing")
        if np.any(m <= 0):
            raise NonPositiveMass(f"scheduled masses must be positive, got {m.tolist()}")

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.masses))


@dataclass(frozen=True)
class PlatformParams:
    mass: float | MassSchedule
    inertia: InertiaMatrix
    g_I: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "g_I", np.asarray(self.g_I, dtype=float).reshape(3))

    def mass_at(self, t: float = 0.0) -> float:
        m = self.mass(t) if isinstance(self.mass, MassSchedule) else float(self.mass)
        if not m > 0:
            raise NonPositiveMass(f"mass must be positive, got {m}")
        return m


def skew(omega) -> np.ndarray:
    wx, wy, wz = np.asarray(omega, dtype=float).reshape(3)
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def _angles(angles) -> tuple[float, float, float]:
    if isinstance(angles, EulerAngles):
        return angles.theta_x, angles.theta_y, angles.theta_z
    a = np.asarray(angles, dtype=float).reshape(3)
    return float(a[0]), float(a[1]), float(a[2])


def rotation_inertial_to_body(angles) -> np.ndarray:
    """H_I^B, mapping inertial components to body components."""
    tx, ty, tz = _angles(angles)
    cx, sx = np.cos(tx), np.sin(tx)
    cy, sy = np.cos(ty), np.sin(ty)
    cz, sz = np.cos(tz), np.sin(tz)
    rz = np.array([[cz, sz, 0.0], [-sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, -sy], [0.0, 1.0, 0.0], [sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, sx], [0.0, -sx, cx]])
    return rx @ ry @ rz


def rotation_body_to_inertial(angles) -> np.ndarray:
    return rotation_inertial_to_body(angles).T


def euler_from_rotation(H: np.ndarray) -> EulerAngles:
    """Inverse of :func:`rotation_inertial_to_body`."""
    H = np.asarray(H, dtype=float)
    sy = -H[0, 2]
    if abs(sy) >= np.sin(np.pi / 2 - GIMBAL_MARGIN):
        raise GimbalLock("pitch at +/-90 deg, roll and yaw are not separable")
    return EulerAngles(
        float(np.arctan2(H[1, 2], H[2, 2])),
        float(np.arcsin(np.clip(sy, -1.0, 1.0))),
        float(np.arctan2(H[0, 1], H[0, 0])),
    )


def body_rates_matrix(angles) -> np.ndarray:
    """L_I^B: Euler-angle rates -> body rates."""
    tx, ty, _ = _angles(angles)
    cx, sx = np.cos(tx), np.sin(tx)
    cy, sy = np.cos(ty), np.sin(ty)
    return np.array([[1.0, 0.0, -sy], [0.0, cx, sx * cy], [0.0, -sx, cx * cy]])


def euler_rates_matrix(angles) -> np.ndarray:
    """L_B^I, the closed-form inverse of :func:`body_rates_matrix`."""
    tx, ty, _ = _angles(angles)
    if abs(ty) >= np.pi / 2 - GIMBAL_MARGIN:
        raise GimbalLock(f"pitch {ty!r} rad is inside the gimbal-lock guard")
    cx, sx = np.cos(tx), np.sin(tx)
    cy, ty_ = np.cos(ty), np.tan(ty)
    return np.array([[1.0, sx * ty_, cx * ty_], [0.0, cx, -sx], [0.0, sx / cy, cx / cy]])


def body_rates_from_euler_rates(angles, euler_rates) -> np.ndarray:
    return body_rates_matrix(angles) @ np.asarray(euler_rates, dtype=float)


def euler_rates_from_body_rates(angles, omega_B) -> np.ndarray:
    return euler_rates_matrix(angles) @ np.asarray(omega_B, dtype=float)


def translational_accel(state: BodyState, wrench: Wrench, params: PlatformParams, t: float = 0.0) -> np.ndarray:
    m = params.mass_at(t)
    H = rotation_inertial_to_body(state.angles)
    return wrench.F_B / m + H @ params.g_I - skew(state.omega_B) @ state.v_B


def angular_accel(state: BodyState, wrench: Wrench, params: PlatformParams) -> np.ndarray:
    d = params.inertia.diagonal()
    if np.any(d <= 0):
        raise SingularInertia(f"principal moments must be positive, got {d.tolist()}")
    w = state.omega_B
    return (wrench.M_B - skew(w) @ (d * w)) / d


def derivative(x: np.ndarray, wrench: Wrench, params: PlatformParams, t: float = 0.0) -> np.ndarray:
    """Time derivative of the 12-element state vector.

    Written out in scalars; this sits in the RK4 inner loop.
    """
    _, _, _, tx, ty, tz, u, v, w, p, q, r = x.tolist()
    if abs(ty) >= _PITCH_LIMIT:
        raise GimbalLock(f"pitch {ty!r} rad is inside the gimbal-lock guard")
    cx, sx, cy, sy, cz, sz = math.cos(tx), math.sin(tx), math.cos(ty), math.sin(ty), math.cos(tz), math.sin(tz)
    # rows of H_I^B = Rx Ry Rz
    h00, h01, h02 = cy * cz, cy * sz, -sy
    h10, h11, h12 = sx * sy * cz - cx * sz, sx * sy * sz + cx * cz, sx * cy
    h20, h21, h22 = cx * sy * cz + sx * sz, cx * sy * sz - sx * cz, cx * cy
    ty_ = sy / cy
    Ixx, Iyy, Izz = params.inertia.I_xx, params.inertia.I_yy, params.inertia.I_zz
    m = params.mass_at(t)
    F = wrench.F_B
    M = wrench.M_B
    gx, gy, gz = params.g_I.tolist()
    return np.array([
        h00 * u + h10 * v + h20 * w,
        h01 * u + h11 * v + h21 * w,
        h02 * u + h12 * v + h22 * w,
        p + sx * ty_ * q + cx * ty_ * r,
        cx * q - sx * r,
        (sx * q + cx * r) / cy,
        F[0] / m + h00 * gx + h01 * gy + h02 * gz - (q * w - r * v),
        F[1] / m + h10 * gx + h11 * gy + h12 * gz - (r * u - p * w),
        F[2] / m + h20 * gx + h21 * gy + h22 * gz - (p * v - q * u),
        (M[0] - (q * Izz * r - r * Iyy * q)) / Ixx,
        (M[1] - (r * Ixx * p - p * Izz * r)) / Iyy,
        (M[2] - (p * Iyy * q - q * Ixx * p)) / Izz,
    ])


def step(state: BodyState, wrench: Wrench, params: PlatformParams, dt: float, t: float = 0.0) -> BodyState:
    """Advance one classical RK4 step with the wrench held constant."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = state.to_vector()
    k1 = derivative(x, wrench, params, t)
    k2 = derivative(x + 0.5 * dt * k1, wrench, params, t + 0.5 * dt)
    k3 = derivative(x + 0.5 * dt * k2, wrench, params, t + 0.5 * dt)
    k4 = derivative(x + dt * k3, wrench, params, t + dt)
    x_new = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        raise NonFinite(f"state diverged at t={t + dt}")
    if abs(x_new[4]) >= _PITCH_LIMIT:
        raise GimbalLock(f"pitch reached {x_new[4]!r} rad at t={t + dt}")
    return BodyState.from_vector(x_new)


def integrate(state: BodyState, wrench: Wrench, params: PlatformParams, dt: float, n_steps: int,
              t0: float = 0.0) -> list[BodyState]:
    """Constant-wrench trajectory including the initial state."""
    out = [state]
    for k in range(n_steps):
        state = step(state, wrench, params, dt, t0 + k * dt)
        out.append(state)
    return out


def kinetic_energy_rot(state: BodyState, inertia: InertiaMatrix) -> float:
    w = state.omega_B
    return 0.5 * float(w @ (inertia.diagonal() * w))


def angular_momentum_inertial(state: BodyState, inertia: InertiaMatrix) -> np.ndarray:
    return rotation_body_to_inertial(state.angles) @ (inertia.diagonal() * state.omega_B)


def linear_drag(v_B: Sequence[float], coefficient: float) -> np.ndarray:
    return -float(coefficient) * np.asarray(v_B, dtype=float)
