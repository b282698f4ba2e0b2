"""Unitary time evolution for static and harmonically driven Hamiltonians.

Energies are in eV and times in seconds, so hbar is taken in eV*s.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonHermitian
from .qubit import HBAR, IDENTITY, PAULI_X, PAULI_Y, PAULI_Z, Qubit

HERMITIAN_TOL = 1e-12


def check_hermitian(H, name: str = "Hamiltonian") -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise NonHermitian(f"{name} must be a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H))))
    if np.max(np.abs(H - H.conj().T)) > HERMITIAN_TOL * scale:
        raise NonHermitian(f"{name} is not Hermitian")
    return H


def propagator(H, t: float, hbar: float = HBAR) -> np.ndarray:
    """exp(-i H t / hbar) by eigendecomposition; any dimension."""
    H = check_hermitian(H)
    E, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * E * t / hbar)) @ V.conj().T


def _expm_2x2(H: np.ndarray, tau: float, hbar: float) -> np.ndarray:
    # H = a0 I + a . sigma  =>  exp(-i H tau/hbar) closed form
    a0 = 0.5 * (H[0, 0] + H[1, 1]).real
    ax = H[0, 1].real
    ay = -H[0, 1].imag
    az = 0.5 * (H[0, 0] - H[1, 1]).real
    r = np.sqrt(ax * ax + ay * ay + az * az)
    phi = r * tau / hbar
    if r == 0.0:
        return np.exp(-1j * a0 * tau / hbar) * IDENTITY
    n_sigma = (ax * PAULI_X + ay * PAULI_Y + az * PAULI_Z) / r
    return np.exp(-1j * a0 * tau / hbar) * (np.cos(phi) * IDENTITY - 1j * np.sin(phi) * n_sigma)


def _vec(state) -> np.ndarray:
    return state.vector if isinstance(state, Qubit) else np.asarray(state, dtype=complex)


def _like(template, v: np.ndarray):
    return Qubit.from_vector(v) if isinstance(template, Qubit) else v


def evolve_static(H, psi0, t: float, hbar: float = HBAR):
    """State at time ``t`` under a time-independent Hamiltonian."""
    return _like(psi0, propagator(H, t, hbar) @ _vec(psi0))


def infinitesimal_propagator(H, dt: float, hbar: float = HBAR) -> np.ndarray:
    """First-order propagator 1 - (i/hbar) H dt. Not unitary: U^dag U - 1 is O(dt^2)."""
    H = check_hermitian(H)
    return np.eye(H.shape[0], dtype=complex) - 1j / hbar * H * dt


@dataclass(frozen=True)
class HarmonicDrive:
    """H'(t) = sum_l V_l exp(-i l eps t / hbar).

    Every harmonic ``l != 0`` must be paired with ``-l`` carrying the
    conjugate transpose, and the ``l = 0`` term must be Hermitian, so that
    H'(t) is Hermitian at all times.
    """

    terms: tuple
    epsilon: float

    def __post_init__(self):
        terms = tuple((np.asarray(V, dtype=complex), int(l)) for V, l in self.terms)
        object.__setattr__(self, "terms", terms)
        by_l: dict[int, np.ndarray] = {}
        for V, l in terms:
            by_l[l] = by_l.get(l, 0) + V
        for l, V in by_l.items():
            partner = by_l.get(-l)
            if partner is None:
                raise NonHermitian(f"drive harmonic l={l} has no l={-l} partner")
            if np.max(np.abs(partner - V.conj().T), initial=0.0) > HERMITIAN_TOL * max(1.0, np.max(np.abs(V))):
                raise NonHermitian(f"drive harmonic l={-l} is not the conjugate transpose of l={l}")

    @classmethod
    def none(cls) -> "HarmonicDrive":
        return cls((), 0.0)

    def __call__(self, t: float, hbar: float = HBAR) -> np.ndarray:
        if not self.terms:
            return 0.0
        return sum(V * np.exp(-1j * l * self.epsilon * t / hbar) for V, l in self.terms)


def evolve_driven(H0, drive: HarmonicDrive, psi0, t: float, dt: float, hbar: float = HBAR):
    """Midpoint exponential stepping of H0 + H'(t) from 0 to ``t``.

    Each step applies exp(-i H(t_k + h/2) h / hbar) exactly, so the norm is
    preserved to round-off; the scheme is second order in ``dt``. The last
    step is shortened to land on ``t``.
    """
    if not dt > 0 or t < 0:
        raise ValueError("need dt > 0 and t >= 0")
    H0 = check_hermitian(H0)
    psi = _vec(psi0).copy()
    two_level = H0.shape == (2, 2)
    n_full = int(np.floor(t / dt + 1e-9))
    steps = [dt] * n_full
    rest = t - n_full * dt
    if rest > 1e-12 * dt:
        steps.append(rest)
    tk = 0.0
    for h in steps:
        Hm = H0 + drive(tk + 0.5 * h, hbar)
        U = _expm_2x2(Hm, h, hbar) if two_level else propagator(Hm, h, hbar)
        psi = U @ psi
        tk += h
    return _like(psi0, psi)


def expectation(H, state) -> float:
    v = _vec(state)
    return float(np.real(np.vdot(v, np.asarray(H) @ v)))


def energy_levels(H) -> np.ndarray:
    return np.linalg.eigvalsh(check_hermitian(H))


def two_level(energies: Sequence[float]) -> np.ndarray:
    return np.diag(np.asarray(energies, dtype=complex))
