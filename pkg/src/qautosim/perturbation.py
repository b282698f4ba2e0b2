"""Laplace-domain first-order perturbation of the Schroedinger equation.

With ``H = H0 + lam * H'`` and ``psi(0) = phi_k`` (an eigenvector of H0),
the transformed state is expanded in powers of ``lam``. Each order is a
vector of rational functions of ``s`` whose denominators are products of
the factors ``(i hbar s - E_m)``; those are stored in factored form so pole
locations and multiplicities are exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import DegenerateSpectrum, SimulationError
from .qubit import HBAR
from .schrodinger import check_hermitian, evolve_static


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors

    @classmethod
    def from_hamiltonian(cls, H0) -> "EigenSystem":
        E, V = np.linalg.eigh(check_hermitian(H0, "H0"))
        return cls(E, V)

    @property
    def dim(self) -> int:
        return len(self.energies)

    def hamiltonian(self) -> np.ndarray:
        V = self.vectors
        return (V * self.energies) @ V.conj().T


@dataclass(frozen=True)
class PerturbationProblem:
    eigensystem: EigenSystem
    H_prime: np.ndarray
    lam: float = 0.0
    initial_index: int = 0
    hbar: float = HBAR

    def __post_init__(self):
        object.__setattr__(self, "H_prime", check_hermitian(self.H_prime, "H'"))
        if self.lam < 0:
            raise ValueError("perturbation strength must be non-negative")
        if not 0 <= self.initial_index < self.eigensystem.dim:
            raise ValueError("initial_index out of range")

    def matrix_elements(self) -> np.ndarray:
        """<phi_m|H'|phi_k> for every m, k = initial_index."""
        V = self.eigensystem.vectors
        return V.conj().T @ self.H_prime @ V[:, self.initial_index]

    def with_lam(self, lam: float) -> "PerturbationProblem":
        return PerturbationProblem(self.eigensystem, self.H_prime, lam, self.initial_index, self.hbar)


@dataclass(frozen=True)
class SRational:
    """num(s) / (scale * prod_k (s - poles[k])), numerator in ascending powers."""

    num: np.ndarray
    poles: tuple = ()
    scale: complex = 1.0

    def __call__(self, s) -> complex:
        den = self.scale * np.prod([s - p for p in self.poles]) if self.poles else self.scale
        return P.polyval(s, self.num) / den

    def is_zero(self) -> bool:
        return not np.any(self.num)

    def pole_multiplicities(self, tol: float) -> list[tuple[complex, int]]:
        groups: list[list] = []
        for p in self.poles:
            for g in groups:
                if abs(g[0] - p) <= tol:
                    g[1] += 1
                    break
            else:
                groups.append([p, 1])
        return [(complex(p), m) for p, m in groups]

    def _den_poly(self, excluded: complex, tol: float) -> np.ndarray:
        coeffs = np.array([self.scale], dtype=complex)
        for p in self.poles:
            if abs(p - excluded) > tol:
                coeffs = P.polymul(coeffs, [-p, 1.0])
        return coeffs

    def residue(self, pole: complex, tol: float) -> complex:
        """Residue in ``s``; simple and double poles only."""
        return self.inverse_terms(tol, at=pole)[0][1]

    def inverse_terms(self, tol: float, at: complex | None = None):
        """Partial-fraction data [(pole, a0, a1)] with f <-> sum (a0 + a1 t) exp(pole t)."""
        out = []
        for p, mult in self.pole_multiplicities(tol):
            if at is not None and abs(p - at) > tol:
                continue
            g_num, g_den = self.num, self._den_poly(p, tol)
            g = P.polyval(p, g_num) / P.polyval(p, g_den)
            if mult == 1:
                out.append((p, g, 0.0))
            elif mult == 2:
                dn = P.polyval(p, P.polyder(g_num))
                dd = P.polyval(p, P.polyder(g_den))
                gp = (dn * P.polyval(p, g_den) - P.polyval(p, g_num) * dd) / P.polyval(p, g_den) ** 2
                out.append((p, gp, g))
            else:
                raise SimulationError(f"pole of order {mult} not supported")
        return out

    def inverse_laplace(self, t, tol: float) -> np.ndarray:
        if self.is_zero():
            return np.zeros_like(np.asarray(t, dtype=float), dtype=complex)
        if len(self.num) > len(self.poles):
            raise SimulationError("improper rational function has no ordinary inverse transform")
        t = np.asarray(t, dtype=float)
        total = np.zeros_like(t, dtype=complex)
        for p, a0, a1 in self.inverse_terms(tol):
            total = total + (a0 + a1 * t) * np.exp(p * t)
        return total


_ZERO = np.array([0.0 + 0j])


@dataclass
class SDomainState:
    """Coefficients C_m^(n)(s) in the H0 eigenbasis, keyed by order n."""

    problem: PerturbationProblem
    orders: dict = field(default_factory=dict)

    def evaluate(self, order: int, s: complex) -> np.ndarray:
        """Order-``order`` state vector at ``s`` in the original basis."""
        C = np.array([c(s) for c in self.orders[order]])
        return self.problem.eigensystem.vectors @ C

    def inverse_laplace(self, order: int, t) -> np.ndarray:
        """Numerical partial-fraction inversion; rows are times, columns original-basis components."""
        tol = pole_tolerance(self.problem)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        C = np.array([c.inverse_laplace(t, tol) for c in self.orders[order]])  # (m, t)
        return (self.problem.eigensystem.vectors @ C).T


def pole_of(energy: float, hbar: float) -> complex:
    """Zero of (i hbar s - E), i.e. s = E / (i hbar)."""
    return energy / (1j * hbar)


def pole_tolerance(problem: PerturbationProblem) -> float:
    E = problem.eigensystem.energies
    return 1e-9 * max(1.0, float(np.max(np.abs(E)))) / problem.hbar


def zeroth_order(problem: PerturbationProblem) -> SDomainState:
    """C_k^(0) = i hbar / (i hbar s - E_k); every other coefficient vanishes."""
    E, hbar, k = problem.eigensystem.energies, problem.hbar, problem.initial_index
    coeffs = []
    for m in range(problem.eigensystem.dim):
        if m == k:
            # i hbar / (i hbar (s - p)) = 1 / (s - p)
            coeffs.append(SRational(np.array([1.0 + 0j]), (pole_of(E[k], hbar),), 1.0))
        else:
            coeffs.append(SRational(_ZERO.copy()))
    return SDomainState(problem, {0: coeffs})


def first_order_coefficients(problem: PerturbationProblem) -> SDomainState:
    """Adds C_m^(1) = i hbar <m|H'|k> / ((i hbar s - E_m)(i hbar s - E_k)) to the zeroth order."""
    state = zeroth_order(problem)
    E, hbar, k = problem.eigensystem.energies, problem.hbar, problem.initial_index
    Vmk = problem.matrix_elements()
    p_k = pole_of(E[k], hbar)
    coeffs = []
    for m in range(problem.eigensystem.dim):
        if Vmk[m] == 0:
            coeffs.append(SRational(_ZERO.copy()))
            continue
        # i hbar V / ((i hbar)^2 (s - p_m)(s - p_k))
        coeffs.append(SRational(np.array([Vmk[m] + 0j]), (pole_of(E[m], hbar), p_k), 1j * hbar))
    state.orders[1] = coeffs
    return state


def hierarchy_residual(state: SDomainState, order: int, s: complex) -> np.ndarray:
    """Residual of the order-``order`` equation of the lambda hierarchy at ``s``.

    order 0: (H0 - i hbar s) Psi0 + i hbar psi(0)
    order n: (H0 - i hbar s) Psi_n + H' Psi_{n-1}
    A correct solution gives a zero vector.
    """
    pr = state.problem
    H0 = pr.eigensystem.hamiltonian()
    A = H0 - 1j * pr.hbar * s * np.eye(pr.eigensystem.dim)
    lhs = A @ state.evaluate(order, s)
    if order == 0:
        return lhs + 1j * pr.hbar * pr.eigensystem.vectors[:, pr.initial_index]
    return lhs + pr.H_prime @ state.evaluate(order - 1, s)


def _check_nondegenerate(problem: PerturbationProblem) -> None:
    E, k = problem.eigensystem.energies, problem.initial_index
    tol = 1e-9 * max(1.0, float(np.max(np.abs(E))))
    for m, Em in enumerate(E):
        if m != k and abs(Em - E[k]) <= tol:
            raise DegenerateSpectrum(f"E_{m} = E_{k} = {Em!r}; first-order formula needs distinct levels")


def first_order_time_state(problem: PerturbationProblem, t) -> np.ndarray:
    """First-order truncated psi(t) in the original basis (unnormalized).

    Scalar ``t`` gives a vector; an array of times gives one row per time.
    """
    _check_nondegenerate(problem)
    E, hbar, k, lam = problem.eigensystem.energies, problem.hbar, problem.initial_index, problem.lam
    V = problem.eigensystem.vectors
    Vmk = problem.matrix_elements()
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    phase_k = np.exp(-1j * E[k] * tt / hbar)
    C = np.zeros((len(E), len(tt)), dtype=complex)
    C[k] = (1.0 - 1j * lam * tt * Vmk[k] / hbar) * phase_k
    for m in range(len(E)):
        if m != k:
            C[m] = lam * Vmk[m] / (E[k] - E[m]) * (phase_k - np.exp(-1j * E[m] * tt / hbar))
    out = (V @ C).T
    return out[0] if np.ndim(t) == 0 else out


def exact_time_state(problem: PerturbationProblem, t) -> np.ndarray:
    """Exact evolution under H0 + lam H' for the same initial eigenvector."""
    H = problem.eigensystem.hamiltonian() + problem.lam * problem.H_prime
    psi0 = problem.eigensystem.vectors[:, problem.initial_index]
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([evolve_static(H, psi0, ti, problem.hbar) for ti in tt])
    return out[0] if np.ndim(t) == 0 else out


def norm_defect(problem: PerturbationProblem, t) -> float:
    psi = np.atleast_2d(first_order_time_state(problem, t))
    return float(np.max(np.abs(np.linalg.norm(psi, axis=1) - 1.0)))


@dataclass
class ValidationReport:
    lambdas: list
    max_errors: list
    exponent: float = float("nan")
    norm_defects: list = field(default_factory=list)
    error: str | None = None

    def rows(self) -> list[dict]:
        return [{"lambda": l, "max_error": e, "norm_defect": d}
                for l, e, d in zip(self.lambdas, self.max_errors, self.norm_defects)]


def validate_against_ode(problem: PerturbationProblem, t_grid, lambdas: Sequence[float] | None = None) -> ValidationReport:
    """Compare the first-order state with exact evolution over a lambda sweep.

    The exponent is the least-squares slope of log(max error) against
    log(lambda), using only strictly positive lambdas with non-zero error.
    Precondition failures are reported in ``error`` rather than raised.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise ValueError("time grid is empty")
    lambdas = [problem.lam] if lambdas is None else list(lambdas)
    report = ValidationReport(lambdas, [], norm_defects=[])
    try:
        for lam in lambdas:
            pr = problem.with_lam(lam)
            approx = first_order_time_state(pr, t_grid).reshape(t_grid.size, -1)
            exact = exact_time_state(pr, t_grid).reshape(t_grid.size, -1)
            report.max_errors.append(float(np.max(np.linalg.norm(approx - exact, axis=1))))
            report.norm_defects.append(norm_defect(pr, t_grid))
    except DegenerateSpectrum as exc:
        report.error = f"DegenerateSpectrum: {exc}"
        return report
    pts = [(np.log(l), np.log(e)) for l, e in zip(lambdas, report.max_errors) if l > 0 and e > 0]
    if len(pts) >= 2:
        x, y = np.array(pts).T
        report.exponent = float(np.polyfit(x, y, 1)[0])
    return report


def benchmark_problem(lam: float = 0.02, coupling: float = 1.0) -> PerturbationProblem:
    """Two levels at 0 and 1 eV coupled by an off-diagonal H' = coupling * sigma_x."""
    H0 = np.diag([0.0, 1.0]).astype(complex)
    Hp = coupling * np.array([[0, 1], [1, 0]], dtype=complex)
    return PerturbationProblem(EigenSystem.from_hamiltonian(H0), Hp, lam)


def benchmark_grid(n: int = 401, hbar: float = HBAR) -> np.ndarray:
    """t in [0, 10 hbar / eV]."""
    return np.linspace(0.0, 10.0 * hbar, n)
