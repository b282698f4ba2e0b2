"""Two-level state algebra in the S_z (equivalently H/V polarization) basis.

Polarization mapping used throughout the package: |H> = |+z> is bit 0,
|V> = |-z> is bit 1, and linear polarization at angle theta is
``cos(theta)|H> + sin(theta)|V>``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Union

import numpy as np

from .errors import NonUnitAxis, ZeroVector

HBAR_EV_S = 6.582e-16
HBAR_ERG_S = 1.055e-27
HBAR = HBAR_EV_S

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class Qubit:
    c_plus: complex
    c_minus: complex

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.c_plus, self.c_minus], dtype=complex)

    @classmethod
    def from_vector(cls, v) -> "Qubit":
        v = np.asarray(v, dtype=complex).reshape(2)
        return cls(complex(v[0]), complex(v[1]))

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


def ket(c_plus: complex, c_minus: complex) -> Qubit:
    v = np.array([c_plus, c_minus], dtype=complex)
    n = np.linalg.norm(v)
    if n == 0:
        raise ZeroVector("cannot normalize the zero vector")
    return Qubit.from_vector(v / n)


PLUS_Z = Qubit(1.0 + 0j, 0j)
MINUS_Z = Qubit(0j, 1.0 + 0j)
PLUS_X = ket(1, 1)
MINUS_X = ket(1, -1)
PLUS_Y = ket(1, 1j)
MINUS_Y = ket(1, -1j)


def linear_polarization(theta: float) -> Qubit:
    """Linear polarization at ``theta`` radians from horizontal."""
    return Qubit(complex(np.cos(theta)), complex(np.sin(theta)))


def inner(bra: Qubit, ket_: Qubit) -> complex:
    return complex(np.vdot(bra.vector, ket_.vector))


def probability(state: Qubit, target: Qubit) -> float:
    return abs(inner(target, state)) ** 2


def same_ray(a: Qubit, b: Qubit, atol: float = 1e-10) -> bool:
    """Equality up to global phase."""
    return abs(abs(inner(a, b)) - 1.0) < atol


def apply(op: np.ndarray, state: Qubit) -> Qubit:
    return Qubit.from_vector(np.asarray(op) @ state.vector)


def is_unitary(op: np.ndarray, atol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return bool(np.allclose(op.conj().T @ op, np.eye(op.shape[0]), atol=atol))


def spin_operators(hbar: float = HBAR) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return 0.5 * hbar * PAULI_X, 0.5 * hbar * PAULI_Y, 0.5 * hbar * PAULI_Z


def rotation(axis, angle: float) -> np.ndarray:
    """exp(-i angle n.J / hbar) for a unit axis n, i.e. exp(-i angle n.sigma / 2)."""
    n = np.asarray(axis, dtype=float).reshape(3)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise NonUnitAxis(f"rotation axis must be a unit vector, |n| = {np.linalg.norm(n)}")
    n_sigma = n[0] * PAULI_X + n[1] * PAULI_Y + n[2] * PAULI_Z
    return np.cos(angle / 2) * IDENTITY - 1j * np.sin(angle / 2) * n_sigma


def infinitesimal_rotation(axis, d_angle: float, hbar: float = HBAR) -> np.ndarray:
    """First-order generator form 1 - (i/hbar) (n.J) d_angle."""
    n = np.asarray(axis, dtype=float).reshape(3)
    J = spin_operators(hbar)
    nJ = n[0] * J[0] + n[1] * J[1] + n[2] * J[2]
    return IDENTITY - 1j / hbar * nJ * d_angle


Basis = Union[Literal["z", "x"], float]


@dataclass(frozen=True)
class MeasurementRecord:
    outcome: Literal["plus", "minus"]
    probability: float
    post_state: Qubit


def basis_states(basis: Basis) -> tuple[Qubit, Qubit]:
    """(plus, minus) eigenstates; a float selects a linear analyzer at that angle in radians."""
    if basis == "z":
        return PLUS_Z, MINUS_Z
    if basis == "x":
        return PLUS_X, MINUS_X
    if isinstance(basis, str):
        raise ValueError(f"unknown basis {basis!r}")
    theta = float(basis)
    return linear_polarization(theta), linear_polarization(theta + np.pi / 2)


def measure(state: Qubit, basis: Basis, rng: np.random.Generator) -> MeasurementRecord:
    plus, minus = basis_states(basis)
    p_plus = probability(state, plus)
    if rng.random() < p_plus:
        return MeasurementRecord("plus", p_plus, plus)
    return MeasurementRecord("minus", 1.0 - p_plus, minus)


def measure_many(state: Qubit, basis: Basis, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized repeated measurement of fresh copies; True means outcome plus."""
    plus, _ = basis_states(basis)
    return rng.random(n) < probability(state, plus)


def polarization_probability(theta, analyzer):
    """Born probability that linear polarization ``theta`` passes an analyzer at ``analyzer``.

    Both angles in radians; arrays broadcast. Evaluated as |<analyzer|theta>|^2
    with the real amplitude vectors of :func:`linear_polarization`.
    """
    theta = np.asarray(theta, dtype=float)
    analyzer = np.asarray(analyzer, dtype=float)
    amp = np.cos(analyzer) * np.cos(theta) + np.sin(analyzer) * np.sin(theta)
    return amp * amp
