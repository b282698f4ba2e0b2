"""Independent reference computations used by the tests.

Nothing here imports the package under test; each oracle is built from
scipy or plain enumeration so that agreement is meaningful.
"""
from fractions import Fraction
from itertools import product

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

HBAR = 6.582e-16


def dcm_inertial_to_body(roll, pitch, yaw):
    """Passive Z-Y-X direction cosine matrix via scipy's intrinsic Euler sequence."""
    return Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix().T


def intercept_resend_qber(eve_fraction=1.0):
    """Exact QBER by enumerating bit, Alice/Eve/Bob bases and Eve's outcome.

    Only rounds where Bob's basis equals Alice's are counted (sifting).
    """
    enc = {("+", 0): 0, ("+", 1): 90, ("x", 0): 45, ("x", 1): -45}
    ana = {"+": 0, "x": 45}
    f = Fraction(eve_fraction).limit_denominator(10**6)

    def p_bit0(angle, basis):
        c = np.cos(np.radians(angle - ana[basis])) ** 2
        return Fraction(round(c * 4), 4)

    err = Fraction(0)
    total = Fraction(0)
    for bit, ab in product((0, 1), "+x"):
        w = Fraction(1, 4)
        bb = ab
        total += w
        sent = enc[(ab, bit)]
        # no Eve branch
        p0 = p_bit0(sent, bb)
        err += w * (1 - f) * (p0 if bit == 1 else 1 - p0)
        for eb in "+x":
            pe0 = p_bit0(sent, eb)
            for eve_bit, pe in ((0, pe0), (1, 1 - pe0)):
                resent = enc[(eb, eve_bit)]
                q0 = p_bit0(resent, bb)
                err += w * f * Fraction(1, 2) * pe * (q0 if bit == 1 else 1 - q0)
    return err / total


def two_photon_probs(amps, alpha_deg, beta_deg):
    """[TT, TR, RT, RR] by explicit Kronecker projectors."""
    def proj(theta):
        t = np.radians(theta)
        v = np.array([np.cos(t), np.sin(t)])
        w = np.array([-np.sin(t), np.cos(t)])
        return np.outer(v, v), np.outer(w, w)

    psi = np.asarray(amps, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    pa, pb = proj(alpha_deg), proj(beta_deg)
    out = []
    for A in pa:
        for B in pb:
            P = np.kron(A, B)
            out.append(float(np.real(psi.conj() @ P @ psi)))
    return np.array(out)


def schrodinger_ode(H, psi0, t_grid, hbar=HBAR):
    """High-accuracy ODE integration of i hbar dpsi/dt = H psi (dimensionless time t/hbar)."""
    H = np.asarray(H, dtype=complex)
    n = H.shape[0]
    tau = np.asarray(t_grid) / hbar

    def rhs(_, y):
        psi = y[:n] + 1j * y[n:]
        d = -1j * (H @ psi)
        return np.concatenate([d.real, d.imag])

    psi0 = np.asarray(psi0, dtype=complex)
    sol = solve_ivp(rhs, (tau[0], tau[-1]), np.concatenate([psi0.real, psi0.imag]), t_eval=tau,
                    method="DOP853", rtol=1e-12, atol=1e-13)
    return (sol.y[:n] + 1j * sol.y[n:]).T


def propagator_expm(H, t, hbar=HBAR):
    return expm(-1j * np.asarray(H, dtype=complex) * t / hbar)


def point_mass_formation_ode(adjacency, offsets, kp, kd, x0, v0, leader_x0, leader_v0, t_end, mass=1.0):
    """Template-offset PD consensus on double integrators, integrated with solve_ivp."""
    a = np.asarray(adjacency, float)
    d = np.vstack([np.zeros(3), np.asarray(offsets, float)])
    n = len(offsets)

    def rhs(t, y):
        x = y[: 3 * n].reshape(n, 3)
        v = y[3 * n:].reshape(n, 3)
        xl = np.asarray(leader_x0) + np.asarray(leader_v0) * t
        X = np.vstack([xl, x])
        V = np.vstack([leader_v0, v])
        acc = np.zeros((n, 3))
        for i in range(1, n + 1):
            for j in range(n + 1):
                if a[i, j]:
                    e = (X[i] - X[j]) - (d[i] - d[j])
                    edot = V[i] - V[j]
                    acc[i - 1] -= (kp * e + kd * edot) / mass
        return np.concatenate([v.ravel(), acc.ravel()])

    y0 = np.concatenate([np.asarray(x0, float).ravel(), np.asarray(v0, float).ravel()])
    sol = solve_ivp(rhs, (0, t_end), y0, method="DOP853", rtol=1e-11, atol=1e-12)
    return sol.y[: 3 * n, -1].reshape(n, 3)
