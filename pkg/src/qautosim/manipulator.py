"""Forward kinematics of the onboard manipulator.

Homogeneous transforms are plain 4x4 numpy arrays; ``T_a_b`` maps
coordinates in frame ``b`` to frame ``a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import EmptyChain
from .rigid_body import BodyState, EulerAngles, euler_from_rotation, rotation_inertial_to_body

_BOTTOM = np.array([0.0, 0.0, 0.0, 1.0])


def hom_transform(rotation=None, translation=None) -> np.ndarray:
    T = np.eye(4)
    if rotation is not None:
        T[:3, :3] = np.asarray(rotation, dtype=float)
    if translation is not None:
        T[:3, 3] = np.asarray(translation, dtype=float)
    return T


def is_valid_transform(T, atol: float = 1e-9) -> bool:
    T = np.asarray(T, dtype=float)
    if T.shape != (4, 4) or not np.array_equal(T[3], _BOTTOM):
        return False
    R = T[:3, :3]
    return bool(np.allclose(R.T @ R, np.eye(3), atol=atol) and abs(np.linalg.det(R) - 1.0) < atol)


def rot_z(angle: float) -> np.ndarray:
    """Active rotation about z (rotates vectors counter-clockwise)."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def compose_chain(links: Sequence[np.ndarray]) -> np.ndarray:
    if len(links) == 0:
        raise EmptyChain("transform chain has no links")
    out = np.eye(4)
    for i, T in enumerate(links):
        if not is_valid_transform(T):
            raise ValueError(f"link {i} is not a rigid homogeneous transform")
        out = out @ np.asarray(T, dtype=float)
    return out


@dataclass(frozen=True)
class EndEffectorPose:
    P_E: np.ndarray = field(default_factory=lambda: np.zeros(3))
    O_E: EulerAngles = field(default_factory=EulerAngles)

    def __post_init__(self):
        object.__setattr__(self, "P_E", np.asarray(self.P_E, dtype=float).reshape(3))
        if not isinstance(self.O_E, EulerAngles):
            object.__setattr__(self, "O_E", EulerAngles.from_array(self.O_E))


def pose_transform(pose: EndEffectorPose) -> np.ndarray:
    """T_R_E for a pose expressed in the manipulator base frame R."""
    return hom_transform(rotation_inertial_to_body(pose.O_E).T, pose.P_E)


def base_transform(base: BodyState) -> np.ndarray:
    """T_I_R: the platform (manipulator base) frame expressed in inertial coordinates."""
    return hom_transform(rotation_inertial_to_body(base.angles).T, base.r_I)


def end_effector_inertial(pose_R: EndEffectorPose, base: BodyState,
                          mode: Literal["additive", "rigorous"] = "rigorous") -> EndEffectorPose:
    """End-effector pose in the inertial frame.

    ``mode="additive"`` adds base position and base Euler angles component-wise
    to the manipulator-frame pose. That is only a valid rotation composition
    for a level, non-rotated base; ``mode="rigorous"`` composes the full
    transforms and re-extracts Euler angles.
    """
    if mode == "additive":
        return EndEffectorPose(
            pose_R.P_E + base.r_I,
            EulerAngles.from_array(pose_R.O_E.as_array() + base.angles.as_array()),
        )
    if mode != "rigorous":
        raise ValueError(f"unknown mode {mode!r}")
    T = base_transform(base) @ pose_transform(pose_R)
    # T[:3,:3] is the body-to-inertial rotation of the end effector; its transpose is H_I^E
    return EndEffectorPose(T[:3, 3].copy(), euler_from_rotation(T[:3, :3].T))
