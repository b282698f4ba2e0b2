"""Entangled photon pairs, analyzers, detectors and coincidence counting.

Two-photon amplitudes are ordered ``[HH, HV, VH, VV]`` with Alice's photon
first. Each arm ends in an analyzer at angle alpha (Alice) or beta (Bob)
followed by a PBS: the transmit port projects onto linear polarization at
the analyzer angle, the reflect port onto the orthogonal one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Literal, Sequence

import numpy as np

from .bb84 import ANALYZER_DEG, BASES, ENCODING_DEG, MeasurementOutcome, PhotonRecord, SiftedKey, sift
from .errors import NoCounts, UnsortedStream

Arm = Literal["alice", "bob"]
TRANSMIT, REFLECT = 0, 1
CHANNEL_NAMES = ("transmit", "reflect")
OUTCOME_LABELS = ("TT", "TR", "RT", "RR")

# metadata only; see DetectorModel for what enters the statistics
PUMP_WAVELENGTH_NM = 405.0
PAIR_WAVELENGTH_NM = 810.0
FILTER_BANDWIDTH_NM = 30.0


@dataclass(frozen=True)
class TwoPhotonState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError("two-photon state cannot be zero")
        object.__setattr__(self, "amplitudes", a / n)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def matrix(self) -> np.ndarray:
        """Amplitudes as a 2x2 array indexed [alice, bob]."""
        return self.amplitudes.reshape(2, 2)


def psi_plus() -> TwoPhotonState:
    """(|HV> + |VH>)/sqrt(2): orthogonally polarized pair."""
    return TwoPhotonState([0, 1, 1, 0])


def phi_plus() -> TwoPhotonState:
    """(|HH> + |VV>)/sqrt(2)."""
    return TwoPhotonState([1, 0, 0, 1])


def product_state(alice_deg: float, bob_deg: float) -> TwoPhotonState:
    a = np.radians(alice_deg)
    b = np.radians(bob_deg)
    return TwoPhotonState(np.kron([np.cos(a), np.sin(a)], [np.cos(b), np.sin(b)]))


NAMED_STATES = {"psi_plus": psi_plus, "phi_plus": phi_plus}


def named_state(name: str) -> TwoPhotonState:
    try:
        return NAMED_STATES[name]()
    except KeyError:
        raise ValueError(f"unknown state {name!r}; choose from {sorted(NAMED_STATES)}") from None


def hwp_matrix(angle_deg: float) -> np.ndarray:
    """Half-wave plate with fast axis at ``angle_deg``: reflection about that axis."""
    t = 2.0 * np.radians(angle_deg)
    return np.array([[np.cos(t), np.sin(t)], [np.sin(t), -np.cos(t)]])


def apply_waveplate(state: TwoPhotonState, arm: Arm, hwp_angle: float) -> TwoPhotonState:
    if arm not in ("alice", "bob"):
        raise ValueError(f"unknown arm {arm!r}")
    W = hwp_matrix(hwp_angle)
    I = np.eye(2)
    op = np.kron(W, I) if arm == "alice" else np.kron(I, W)
    return TwoPhotonState(op @ state.amplitudes)


def _analyzer(angle_deg: float) -> np.ndarray:
    """Rows: transmit and reflect projection vectors."""
    a = np.radians(angle_deg)
    return np.array([[np.cos(a), np.sin(a)], [-np.sin(a), np.cos(a)]])


def joint_probabilities(state: TwoPhotonState, alpha: float, beta: float) -> np.ndarray:
    """[P(T,T), P(T,R), P(R,T), P(R,R)] for analyzers at alpha (Alice), beta (Bob), in degrees."""
    amp = _analyzer(alpha) @ state.matrix() @ _analyzer(beta).T
    return (np.abs(amp) ** 2).reshape(4)


def bob_marginal(state: TwoPhotonState, beta: float, alpha: float = 0.0) -> np.ndarray:
    """Bob's [P(T), P(R)] obtained by summing over Alice's outcomes."""
    p = joint_probabilities(state, alpha, beta).reshape(2, 2)
    return p.sum(axis=0)


def correlation_from_probabilities(p: np.ndarray) -> float:
    return float(p[0] + p[3] - p[1] - p[2])


@dataclass
class Pairs:
    """Emission times of SPDC pairs, all prepared in the same two-photon state."""

    times: np.ndarray
    state: TwoPhotonState

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[tuple[float, TwoPhotonState]]:
        for t in self.times:
            yield float(t), self.state


def generate_pairs(rate: float, duration: float, rng: np.random.Generator,
                   state: TwoPhotonState | None = None) -> Pairs:
    """Homogeneous Poisson emission over [0, duration)."""
    if not rate > 0:
        raise ValueError("pair rate must be positive")
    n = rng.poisson(rate * duration)
    times = np.sort(rng.uniform(0.0, duration, n))
    return Pairs(times, psi_plus() if state is None else state)


def generate_n_pairs(n: int, rate: float, rng: np.random.Generator, state: TwoPhotonState | None = None) -> Pairs:
    """Exactly ``n`` pairs with exponential inter-arrival times."""
    times = np.cumsum(rng.exponential(1.0 / rate, n))
    return Pairs(times, psi_plus() if state is None else state)


@dataclass
class PairOutcomes:
    """Per-pair PBS ports after the analyzers (0 transmit, 1 reflect)."""

    times: np.ndarray
    alice: np.ndarray
    bob: np.ndarray
    alpha: float
    beta: float


def measure_pairs(pairs: Pairs, alpha: float, beta: float, rng: np.random.Generator) -> PairOutcomes:
    p = joint_probabilities(pairs.state, alpha, beta)
    idx = rng.choice(4, size=len(pairs), p=p / p.sum())
    return PairOutcomes(pairs.times.copy(), (idx >> 1).astype(np.int8), (idx & 1).astype(np.int8), alpha, beta)


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 0.35
    dark_rate: float = 0.0
    jitter_sigma: float = 0.0
    dead_time: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be a probability")
        if min(self.dark_rate, self.jitter_sigma, self.dead_time) < 0:
            raise ValueError("dark rate, jitter and dead time must be non-negative")

    @classmethod
    def ideal(cls) -> "DetectorModel":
        return cls(1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DetectionEvent:
    arm: str
    timestamp: float
    channel: str


@dataclass
class EventStream:
    """Time-sorted detections on one arm; ``source`` is the pair index or -1 for dark counts."""

    arm: str
    times: np.ndarray
    channels: np.ndarray
    source: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.times)

    def events(self) -> Iterator[DetectionEvent]:
        for t, c in zip(self.times, self.channels):
            yield DetectionEvent(self.arm, float(t), CHANNEL_NAMES[int(c)])


def _apply_dead_time(times: np.ndarray, dead_time: float) -> np.ndarray:
    """Non-paralyzable dead time; ``times`` sorted. Returns a keep mask."""
    keep = np.ones(len(times), dtype=bool)
    if dead_time <= 0 or len(times) == 0:
        return keep
    last = -np.inf
    for i, t in enumerate(times):
        if t - last < dead_time:
            keep[i] = False
        else:
            last = t
    return keep


def _detect_arm(arm: str, times: np.ndarray, ports: np.ndarray, model: DetectorModel, duration: float,
                rng: np.random.Generator) -> EventStream:
    n = len(times)
    u_eff = rng.random(n)
    jitter = rng.normal(0.0, 1.0, n) * model.jitter_sigma
    n_dark = rng.poisson(model.dark_rate * duration) if model.dark_rate > 0 else 0
    dark_t = rng.uniform(0.0, duration, n_dark)
    dark_c = rng.integers(0, 2, n_dark)

    hit = u_eff < model.efficiency
    t = np.concatenate([times[hit] + jitter[hit], dark_t])
    c = np.concatenate([ports[hit].astype(np.int8), dark_c.astype(np.int8)])
    src = np.concatenate([np.flatnonzero(hit), np.full(n_dark, -1)])
    order = np.argsort(t, kind="stable")
    t, c, src = t[order], c[order], src[order]
    keep = np.ones(len(t), dtype=bool)
    for ch in (TRANSMIT, REFLECT):
        sel = np.flatnonzero(c == ch)
        keep[sel] = _apply_dead_time(t[sel], model.dead_time)
    return EventStream(arm, t[keep], c[keep], src[keep])


def detect(outcomes: PairOutcomes, det_a: DetectorModel, det_b: DetectorModel, rng: np.random.Generator,
           duration: float | None = None) -> tuple[EventStream, EventStream]:
    """Efficiency thinning, timing jitter, dark counts and per-detector dead time.

    Dark counts are spread uniformly over ``[0, duration)``; ``duration``
    defaults to the last emission time.
    """
    if duration is None:
        duration = float(outcomes.times[-1]) if len(outcomes.times) else 0.0
    ev_a = _detect_arm("alice", outcomes.times, outcomes.alice, det_a, duration, rng)
    ev_b = _detect_arm("bob", outcomes.times, outcomes.bob, det_b, duration, rng)
    return ev_a, ev_b


@dataclass(frozen=True)
class CoincidenceConfig:
    window: float = 25e-9
    clock_skew: float = 0.0

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("coincidence window must be positive")


@dataclass
class CoincidenceResult:
    count: int
    index_a: np.ndarray
    index_b: np.ndarray

    def times(self, events_a: EventStream) -> np.ndarray:
        return events_a.times[self.index_a]


def count_coincidences(events_a: EventStream, events_b: EventStream, cfg: CoincidenceConfig) -> CoincidenceResult:
    """Greedy earliest-first pairing of events with |tA - tB - skew| <= window."""
    ta, tb = np.asarray(events_a.times, dtype=float), np.asarray(events_b.times, dtype=float)
    for name, t in (("alice", ta), ("bob", tb)):
        if np.any(np.diff(t) < 0):
            raise UnsortedStream(f"{name} event stream is not time-sorted")
    w, skew = cfg.window, cfg.clock_skew
    ia, ib = [], []
    i = j = 0
    na, nb = len(ta), len(tb)
    while i < na and j < nb:
        d = ta[i] - tb[j] - skew
        if d > w:
            j += 1
        elif d < -w:
            i += 1
        else:
            ia.append(i)
            ib.append(j)
            i += 1
            j += 1
    return CoincidenceResult(len(ia), np.array(ia, dtype=np.int64), np.array(ib, dtype=np.int64))


def coincidence_counts(events_a: EventStream, events_b: EventStream, result: CoincidenceResult) -> np.ndarray:
    """[N_TT, N_TR, N_RT, N_RR] from the PBS ports of matched events."""
    ca = events_a.channels[result.index_a].astype(int)
    cb = events_b.channels[result.index_b].astype(int)
    return np.bincount(2 * ca + cb, minlength=4)[:4]


def correlation(counts: Sequence[int]) -> float:
    """E = (N_TT + N_RR - N_TR - N_RT) / N_total."""
    n_tt, n_tr, n_rt, n_rr = (int(c) for c in counts)
    total = n_tt + n_tr + n_rt + n_rr
    if total <= 0:
        raise NoCounts("no coincidences recorded for this setting")
    return (n_tt + n_rr - n_tr - n_rt) / total


def correlation_sigma(counts: Sequence[int]) -> float:
    """Binomial standard error of a correlation estimate."""
    total = int(np.sum(counts))
    E = correlation(counts)
    return float(np.sqrt(max(1.0 - E * E, 0.0) / total))


def chsh(e_ab: float, e_ab2: float, e_a2b: float, e_a2b2: float) -> float:
    return abs(e_ab - e_ab2 + e_a2b + e_a2b2)


def chsh_settings(angles: Sequence[float]) -> list[tuple[float, float]]:
    """(a, b), (a, b'), (a', b), (a', b') from ``[a, a', b, b']``."""
    a, a2, b, b2 = angles
    return [(a, b), (a, b2), (a2, b), (a2, b2)]


def analytic_chsh(state: TwoPhotonState, angles: Sequence[float]) -> float:
    E = [correlation_from_probabilities(joint_probabilities(state, al, be)) for al, be in chsh_settings(angles)]
    return chsh(*E)


@dataclass(frozen=True)
class TriggerEvent:
    time: float
    active: bool


def entanglement_trigger(coincidence_times, min_rate: float, window: float, start: float = 0.0) -> list[TriggerEvent]:
    """Edges of the sliding-window rate detector.

    The rate at time x is the number of coincidences in (x - window, x]
    divided by ``window``; it is only evaluated once a full window has
    elapsed after ``start``. Returns alternating assert/release edges.
    """
    if not min_rate > 0 or not window > 0:
        raise ValueError("min_rate and window must be positive")
    t = np.sort(np.asarray(coincidence_times, dtype=float))
    if t.size == 0:
        return []
    first_eval = start + window
    candidates = np.unique(np.concatenate([[first_eval], t, t + window]))
    candidates = candidates[candidates >= first_eval]
    # count in (x - window, x] = #(t <= x) - #(t <= x - window)
    counts = np.searchsorted(t, candidates, side="right") - np.searchsorted(t, candidates - window, side="right")
    active = counts / window > min_rate
    edges = []
    state = False
    for x, a in zip(candidates, active):
        if a != state:
            edges.append(TriggerEvent(float(x), bool(a)))
            state = bool(a)
    return edges


def trigger_active(edges: Sequence[TriggerEvent], t: float) -> bool:
    state = False
    for e in edges:
        if e.time > t:
            break
        state = e.active
    return state


@dataclass
class SettingResult:
    alpha: float
    beta: float
    counts: np.ndarray
    singles_a: int
    singles_b: int
    pairs: int
    coincidence_times: np.ndarray

    @property
    def E(self) -> float:
        return correlation(self.counts)


def run_setting(state: TwoPhotonState, alpha: float, beta: float, n_pairs: int, rate: float,
                det_a: DetectorModel, det_b: DetectorModel, cfg: CoincidenceConfig,
                rng: np.random.Generator) -> SettingResult:
    pairs = generate_n_pairs(n_pairs, rate, rng, state)
    out = measure_pairs(pairs, alpha, beta, rng)
    duration = float(pairs.times[-1]) if n_pairs else 0.0
    ev_a, ev_b = detect(out, det_a, det_b, rng, duration)
    res = count_coincidences(ev_a, ev_b, cfg)
    return SettingResult(alpha, beta, coincidence_counts(ev_a, ev_b, res), len(ev_a), len(ev_b),
                         n_pairs, res.times(ev_a))


def _equal_angle_flips(state: TwoPhotonState) -> dict:
    """Per basis, whether the pair anticorrelates when both analyzers share it."""
    return {b: correlation_from_probabilities(joint_probabilities(state, a, a)) < 0 for b, a in ANALYZER_DEG.items()}


def entangled_key(state: TwoPhotonState, n_pairs: int, rate: float, det_a: DetectorModel, det_b: DetectorModel,
                  cfg: CoincidenceConfig, rng: np.random.Generator) -> tuple[SiftedKey, SiftedKey]:
    """Entanglement-based key from coincidence-matched outcomes.

    Each side picks the plus or cross analyzer at random per pair. Every
    coincidence becomes a prepare/measure record pair (Alice's port is the
    bit; Bob's port is flipped in bases where the state anticorrelates) and
    is sifted by basis agreement exactly as in prepare-and-measure BB84.
    Dark counts draw a fresh random basis.
    """
    pairs = generate_n_pairs(n_pairs, rate, rng, state)
    basis_a = rng.integers(0, 2, n_pairs)
    basis_b = rng.integers(0, 2, n_pairs)
    port_a = np.empty(n_pairs, dtype=np.int8)
    port_b = np.empty(n_pairs, dtype=np.int8)
    for i in (0, 1):
        for j in (0, 1):
            m = (basis_a == i) & (basis_b == j)
            p = joint_probabilities(state, ANALYZER_DEG[BASES[i]], ANALYZER_DEG[BASES[j]])
            idx = rng.choice(4, size=int(m.sum()), p=p / p.sum())
            port_a[m], port_b[m] = idx >> 1, idx & 1
    out = PairOutcomes(pairs.times, port_a, port_b, float("nan"), float("nan"))
    ev_a, ev_b = detect(out, det_a, det_b, rng)
    res = count_coincidences(ev_a, ev_b, cfg)
    flips = _equal_angle_flips(state)

    def basis_of(src, bases):
        return BASES[int(bases[src])] if src >= 0 else BASES[int(rng.integers(0, 2))]

    records, outcomes = [], []
    for k, (ia, ib) in enumerate(zip(res.index_a, res.index_b)):
        ba = basis_of(ev_a.source[ia], basis_a)
        bb = basis_of(ev_b.source[ib], basis_b)
        bit_a = int(ev_a.channels[ia])
        bit_b = int(ev_b.channels[ib]) ^ int(flips[bb])
        records.append(PhotonRecord(k, bit_a, ba, ENCODING_DEG[(ba, bit_a)], float(ev_a.times[ia])))
        outcomes.append(MeasurementOutcome(k, bb, bit_b, True))
    return sift(records, outcomes)
