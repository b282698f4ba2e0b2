"""Rational transfer functions, feedback composition and quantum-gated loops."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .bb84 import OneTimePad, seal, unseal
from .errors import CoefficientOverflow, DegenerateLoop, ImproperTF, UnstableLoop, ZeroDenominator
from .spdc import trigger_active

COEFF_LIMIT = 1e150


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float).ravel()
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else np.zeros(1)


def _guard(c: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(c)) or np.max(np.abs(c)) > COEFF_LIMIT:
        raise CoefficientOverflow("polynomial coefficients overflowed")
    return c


@dataclass(frozen=True)
class RationalTF:
    """num(s)/den(s); coefficients in ascending powers of s, den made monic."""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if not np.any(den):
            raise ZeroDenominator("transfer function denominator is identically zero")
        lead = den[-1]
        object.__setattr__(self, "num", _guard(num / lead))
        object.__setattr__(self, "den", _guard(den / lead))

    @classmethod
    def gain(cls, k: float) -> "RationalTF":
        return cls([k], [1.0])

    @property
    def order(self) -> int:
        return len(self.den) - 1

    @property
    def is_proper(self) -> bool:
        return len(self.num) <= len(self.den) or not np.any(self.num)

    def __call__(self, s):
        return P.polyval(s, self.num) / P.polyval(s, self.den)

    def __add__(self, other: "RationalTF") -> "RationalTF":
        return tf_arith(self, other, "add")

    def __mul__(self, other: "RationalTF") -> "RationalTF":
        return tf_arith(self, other, "mul")

    def poles(self) -> np.ndarray:
        return P.polyroots(self.den) if self.order > 0 else np.zeros(0)

    def dc_gain(self) -> float:
        """lim s->0, after stripping common powers of s; inf for a pole at the origin."""
        k_n = np.flatnonzero(self.num)
        if k_n.size == 0:
            return 0.0
        kn, kd = k_n[0], np.flatnonzero(self.den)[0]
        if kn > kd:
            return 0.0
        if kn < kd:
            return float("inf")
        return float(self.num[kn] / self.den[kd])

    def equals(self, other: "RationalTF") -> bool:
        """Coefficient-exact equality of the normalized representation."""
        return np.array_equal(self.num, other.num) and np.array_equal(self.den, other.den)


def as_tf(x) -> RationalTF:
    if isinstance(x, RationalTF):
        return x
    if isinstance(x, dict):
        return RationalTF(x["num"], x["den"])
    return RationalTF.gain(float(x))


def tf_arith(a, b, op: Literal["add", "mul"]) -> RationalTF:
    a, b = as_tf(a), as_tf(b)
    if op == "mul":
        return RationalTF(P.polymul(a.num, b.num), P.polymul(a.den, b.den))
    if op == "add":
        num = P.polyadd(P.polymul(a.num, b.den), P.polymul(b.num, a.den))
        return RationalTF(num, P.polymul(a.den, b.den))
    raise ValueError(f"unknown op {op!r}")


def cancel(tf: RationalTF, tol: float = 1e-9) -> RationalTF:
    """Remove numerator/denominator root pairs closer than ``tol``."""
    zr = list(P.polyroots(tf.num)) if len(tf.num) > 1 else []
    pr = list(P.polyroots(tf.den)) if len(tf.den) > 1 else []
    for z in list(zr):
        for p in pr:
            if abs(z - p) <= tol * max(1.0, abs(p)):
                zr.remove(z)
                pr.remove(p)
                break
    k = tf.num[-1] if np.any(tf.num) else 0.0
    num = k * np.real_if_close(P.polyfromroots(zr)) if zr else np.array([k])
    den = np.real_if_close(P.polyfromroots(pr)) if pr else np.array([1.0])
    return RationalTF(np.real(num), np.real(den))


def closed_loop(c, act, dyn, h) -> RationalTF:
    """Forward path c*act*dyn over 1 + c*act*dyn*h."""
    g = tf_arith(tf_arith(c, act, "mul"), dyn, "mul")
    h = as_tf(h)
    num = P.polymul(g.num, h.den)
    den = P.polyadd(P.polymul(g.den, h.den), P.polymul(g.num, h.num))
    if not np.any(_trim(den)):
        raise DegenerateLoop("1 + loop gain is identically zero")
    return RationalTF(num, den)


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float


def controllable_canonical(tf: RationalTF) -> StateSpace:
    if not tf.is_proper:
        raise ImproperTF(f"numerator degree {len(tf.num) - 1} exceeds denominator degree {tf.order}")
    n = tf.order
    a = tf.den  # monic, ascending
    b = np.zeros(n + 1)
    b[: len(tf.num)] = tf.num
    d = b[n]
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -a[:n]
    B = np.zeros(n)
    if n:
        B[-1] = 1.0
    C = b[:n] - a[:n] * d
    return StateSpace(A, B, C, float(d))


def simulate(tf: RationalTF, u: Sequence[float], dt: float) -> np.ndarray:
    """Response to a piecewise-constant input; ``u[k]`` holds over [t_k, t_k+1).

    Returns ``y`` at ``t_k = k dt`` for k = 0..len(u), using RK4 on the
    controllable canonical realization with zero initial state.
    """
    ss = controllable_canonical(tf)
    u = np.asarray(u, dtype=float)
    x = np.zeros(ss.A.shape[0])
    y = np.empty(len(u) + 1)
    f = lambda x, uk: ss.A @ x + ss.B * uk  # noqa: E731
    for k, uk in enumerate(u):
        y[k] = ss.C @ x + ss.D * uk
        k1 = f(x, uk)
        k2 = f(x + 0.5 * dt * k1, uk)
        k3 = f(x + 0.5 * dt * k2, uk)
        k4 = f(x + dt * k3, uk)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    y[-1] = ss.C @ x + ss.D * (u[-1] if len(u) else 0.0)
    return y


def step_response(tf: RationalTF, duration: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    return t, simulate(tf, np.ones(n), dt)


GateMode = Literal["none", "key_protected", "entanglement_triggered"]


@dataclass
class LoopConfig:
    controller: RationalTF
    actuator: RationalTF
    plant: RationalTF
    sensor: RationalTF
    quantum_gate: GateMode = "none"
    require_stable: bool = True

    def __post_init__(self):
        for name in ("controller", "actuator", "plant", "sensor"):
            setattr(self, name, as_tf(getattr(self, name)))
        if self.quantum_gate not in ("none", "key_protected", "entanglement_triggered"):
            raise ValueError(f"unknown gate mode {self.quantum_gate!r}")
        if self.require_stable:
            unstable = [complex(p) for p in self.transfer_function().poles() if p.real > 1e-9]
            if unstable:
                raise UnstableLoop(f"closed-loop poles in the right half-plane: {unstable}")

    def transfer_function(self) -> RationalTF:
        return closed_loop(self.controller, self.actuator, self.plant, self.sensor)


def qber_scaled_gain(k: float, qber: float, threshold: float = 0.11) -> float:
    """Controller gain derated linearly by the QBER margin; zero at or above threshold."""
    return float(k) * max(0.0, 1.0 - qber / threshold)


@dataclass(frozen=True)
class Command:
    time: float
    setpoint: float
    frame: bytes | None = None


def encode_setpoint(setpoint: float) -> bytes:
    return seal(struct.pack(">d", float(setpoint)))


def decode_setpoint(frame: bytes) -> float | None:
    msg = unseal(frame)
    return None if msg is None or len(msg) != 8 else struct.unpack(">d", msg)[0]


def seal_commands(schedule: Sequence[tuple[float, float]], pad: OneTimePad) -> list[Command]:
    """Encrypt each setpoint frame under consecutive pad segments."""
    out = []
    for t, sp in schedule:
        _, ct = pad.apply(encode_setpoint(sp))
        out.append(Command(float(t), float(sp), ct))
    return out


@dataclass
class GateDecision:
    command_time: float
    setpoint: float
    decision: str  # released | held | deferred
    release_time: float | None


@dataclass
class GatedRunLog:
    t: np.ndarray
    setpoint: np.ndarray
    released: np.ndarray
    output: np.ndarray
    decisions: list = field(default_factory=list)

    COLUMNS = ("t", "setpoint", "released", "output")

    def rows(self):
        for r in zip(self.t, self.setpoint, self.released, self.output):
            yield [float(r[0]), float(r[1]), int(r[2]), float(r[3])]


def quantum_gated_run(loop: LoopConfig, stream, schedule: Sequence, duration: float, dt: float,
                      initial_setpoint: float = 0.0) -> GatedRunLog:
    """Drive the closed loop with setpoints released through the quantum gate.

    ``schedule`` holds :class:`Command` objects (or ``(time, setpoint)``
    pairs when no encryption is involved). ``stream`` is Bob's
    :class:`OneTimePad` for ``key_protected``, a list of
    :class:`TriggerEvent` edges for ``entanglement_triggered`` and ignored
    for ``none``. A command due at step k is evaluated at ``t_k``; a held
    command is dropped, a deferred one waits for the trigger.
    """
    cmds = [c if isinstance(c, Command) else Command(float(c[0]), float(c[1])) for c in schedule]
    if any(b.time < a.time for a, b in zip(cmds, cmds[1:])):
        raise ValueError("command schedule must be time-sorted")
    if loop.quantum_gate == "entanglement_triggered":
        edges = list(stream or [])
        if any(b.time < a.time for a, b in zip(edges, edges[1:])):
            raise ValueError("trigger stream must be time-sorted")

    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    sp = np.empty(n + 1)
    released = np.zeros(n + 1, dtype=np.int8)
    current = float(initial_setpoint)
    pending: list[Command] = []
    decisions: list[GateDecision] = []
    ci = 0
    for k in range(n + 1):
        tk = t[k]
        while ci < len(cmds) and cmds[ci].time <= tk + 1e-12:
            cmd = cmds[ci]
            ci += 1
            if loop.quantum_gate == "none":
                current = cmd.setpoint
                released[k] = 1
                decisions.append(GateDecision(cmd.time, cmd.setpoint, "released", tk))
            elif loop.quantum_gate == "key_protected":
                value = None
                if cmd.frame is not None:
                    _, plain = stream.apply(cmd.frame)
                    value = decode_setpoint(plain)
                if value is None:
                    decisions.append(GateDecision(cmd.time, cmd.setpoint, "held", None))
                else:
                    current = value
                    released[k] = 1
                    decisions.append(GateDecision(cmd.time, value, "released", tk))
            else:
                pending.append(cmd)
        if loop.quantum_gate == "entanglement_triggered" and pending and trigger_active(edges, tk):
            for cmd in pending:
                decisions.append(GateDecision(cmd.time, cmd.setpoint,
                                              "released" if cmd.time >= tk - 1e-12 else "deferred", tk))
            current = pending[-1].setpoint
            released[k] = 1
            pending = []
        sp[k] = current
    for cmd in pending:
        decisions.append(GateDecision(cmd.time, cmd.setpoint, "held", None))
    y = simulate(loop.transfer_function(), sp[:-1], dt)
    return GatedRunLog(t, sp, released, y, decisions)


def coefficient_listing(tf: RationalTF) -> list[dict]:
    rows = [{"poly": "num", "power": i, "coeff": float(c)} for i, c in enumerate(tf.num)]
    rows += [{"poly": "den", "power": i, "coeff": float(c)} for i, c in enumerate(tf.den)]
    return rows
