"""BB84 prepare-and-measure key distribution over a simulated polarization channel.

Bases: ``plus`` (rectilinear, 0/90 deg) and ``cross`` (diagonal, +45/-45 deg).
Bit 0 is the first angle of each basis. Outcome probabilities come from the
Born rule in :mod:`qautosim.qubit`.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import EmptyKey, KeyExhausted, KeyReuse, MisalignedStreams
from .qubit import polarization_probability

PLUS, CROSS = "plus", "cross"
BASES = (PLUS, CROSS)
ANALYZER_DEG = {PLUS: 0.0, CROSS: 45.0}
ENCODING_DEG = {(PLUS, 0): 0.0, (PLUS, 1): 90.0, (CROSS, 0): 45.0, (CROSS, 1): -45.0}
DEFAULT_THRESHOLD = 0.11
DEFAULT_SAMPLE_FRACTION = 0.2
PULSE_PERIOD = 1e-6


@dataclass(frozen=True)
class PhotonRecord:
    index: int
    bit: int
    basis: str
    pol_angle: float
    timestamp: float


@dataclass(frozen=True)
class EveIntercept:
    basis: str
    bit: int


@dataclass(frozen=True)
class Arrival:
    """Photon as it reaches Bob; ``pol_angle`` is None when it was lost."""

    index: int
    pol_angle: float | None
    eve: EveIntercept | None = None
    depolarized: bool = False

    @property
    def lost(self) -> bool:
        return self.pol_angle is None


@dataclass(frozen=True)
class MeasurementOutcome:
    index: int
    basis: str
    bit: int | None
    detected: bool


@dataclass(frozen=True)
class SiftedKey:
    bits: tuple
    source_indices: tuple
    qber_sample_indices: tuple = ()

    def __len__(self) -> int:
        return len(self.bits)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)


@dataclass(frozen=True)
class ChannelModel:
    transmittance: float = 1.0
    depolarization_prob: float = 0.0
    detector_efficiency: float = 1.0
    eve_fraction: float = 0.0

    def __post_init__(self):
        for name in ("transmittance", "depolarization_prob", "detector_efficiency", "eve_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")

    @property
    def eve(self) -> str:
        return "none" if self.eve_fraction == 0 else f"intercept_resend({self.eve_fraction})"


def _basis_array(bases: np.ndarray) -> list[str]:
    return [BASES[int(b)] for b in bases]


def alice_prepare(n: int, rng: np.random.Generator, pulse_period: float = PULSE_PERIOD) -> list[PhotonRecord]:
    if n <= 0:
        raise ValueError("need at least one photon")
    bits = rng.integers(0, 2, n)
    bases = rng.integers(0, 2, n)
    return [
        PhotonRecord(i, int(b), BASES[int(s)], ENCODING_DEG[(BASES[int(s)], int(b))], i * pulse_period)
        for i, (b, s) in enumerate(zip(bits, bases))
    ]


def transmit(records: Sequence[PhotonRecord], channel: ChannelModel, rng: np.random.Generator) -> list[Arrival]:
    """Loss, optional intercept-resend and depolarization, in that order.

    All random numbers are drawn as full-length arrays up front so the
    stream consumption does not depend on earlier outcomes.
    """
    n = len(records)
    u_loss = rng.random(n)
    u_eve = rng.random(n)
    eve_bases = rng.integers(0, 2, n)
    u_eve_meas = rng.random(n)
    u_depol = rng.random(n)
    depol_angles = rng.uniform(-90.0, 90.0, n)

    angles = np.array([r.pol_angle for r in records], dtype=float)
    eve_on = u_eve < channel.eve_fraction
    eve_analyzer = np.where(eve_bases == 0, ANALYZER_DEG[PLUS], ANALYZER_DEG[CROSS])
    p0 = polarization_probability(np.radians(angles), np.radians(eve_analyzer))
    eve_bits = np.where(u_eve_meas < p0, 0, 1)
    resent = np.array([ENCODING_DEG[(BASES[s], b)] for s, b in zip(eve_bases, eve_bits)], dtype=float)
    angles = np.where(eve_on, resent, angles)
    depol = u_depol < channel.depolarization_prob
    angles = np.where(depol, depol_angles, angles)
    lost = u_loss >= channel.transmittance

    return [
        Arrival(
            r.index,
            None if lost[i] else float(angles[i]),
            EveIntercept(BASES[int(eve_bases[i])], int(eve_bits[i])) if eve_on[i] else None,
            bool(depol[i]),
        )
        for i, r in enumerate(records)
    ]


def bob_measure(arrivals: Sequence[Arrival], rng: np.random.Generator,
                detector_efficiency: float = 1.0, bases: Sequence[str] | None = None) -> list[MeasurementOutcome]:
    """Random-basis HWP + PBS measurement; ``bases`` forces Bob's choices (tests)."""
    n = len(arrivals)
    drawn = rng.integers(0, 2, n)
    u_bit = rng.random(n)
    u_det = rng.random(n)
    basis_list = _basis_array(drawn) if bases is None else list(bases)
    if len(basis_list) != n:
        raise MisalignedStreams("forced basis list does not match the number of arrivals")
    out = []
    for i, a in enumerate(arrivals):
        basis = basis_list[i]
        if a.lost or u_det[i] >= detector_efficiency:
            out.append(MeasurementOutcome(a.index, basis, None, False))
            continue
        p0 = float(polarization_probability(np.radians(a.pol_angle), np.radians(ANALYZER_DEG[basis])))
        out.append(MeasurementOutcome(a.index, basis, 0 if u_bit[i] < p0 else 1, True))
    return out


def sift(alice_records: Sequence[PhotonRecord], bob_outcomes: Sequence[MeasurementOutcome]) -> tuple[SiftedKey, SiftedKey]:
    if len(alice_records) != len(bob_outcomes):
        raise MisalignedStreams(f"{len(alice_records)} Alice records vs {len(bob_outcomes)} Bob outcomes")
    a_bits, b_bits, idx = [], [], []
    for r, o in zip(alice_records, bob_outcomes):
        if r.index != o.index:
            raise MisalignedStreams(f"index {r.index} paired with Bob index {o.index}")
        if o.detected and o.basis == r.basis:
            a_bits.append(r.bit)
            b_bits.append(o.bit)
            idx.append(r.index)
    idx_t = tuple(idx)
    return SiftedKey(tuple(a_bits), idx_t), SiftedKey(tuple(b_bits), idx_t)


@dataclass(frozen=True)
class QberEstimate:
    qber: float
    sample_size: int
    errors: int
    alice_key: SiftedKey
    bob_key: SiftedKey


def estimate_qber(alice_key: SiftedKey, bob_key: SiftedKey, sample_fraction: float,
                  rng: np.random.Generator) -> QberEstimate:
    """Disclose a random subset, count mismatches and drop it from both keys."""
    if alice_key.source_indices != bob_key.source_indices:
        raise MisalignedStreams("sifted keys are not index-aligned")
    if len(alice_key) == 0:
        raise EmptyKey("no sifted bits to sample")
    if not 0.0 < sample_fraction < 1.0:
        raise ValueError("sample_fraction must lie in (0, 1)")
    n = len(alice_key)
    m = min(n, max(1, int(round(sample_fraction * n))))
    chosen = np.sort(rng.choice(n, size=m, replace=False))
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    a, b = alice_key.as_array(), bob_key.as_array()
    errors = int(np.count_nonzero(a[mask] != b[mask]))
    src = np.array(alice_key.source_indices)
    disclosed = tuple(int(i) for i in src[mask])
    keep = tuple(int(i) for i in src[~mask])

    def remaining(key: SiftedKey, bits: np.ndarray) -> SiftedKey:
        return SiftedKey(tuple(int(x) for x in bits[~mask]), keep, disclosed)

    return QberEstimate(errors / m, m, errors, remaining(alice_key, a), remaining(bob_key, b))


def detect_eve(qber: float, threshold: float = DEFAULT_THRESHOLD) -> Literal["clean", "compromised"]:
    if not 0.0 < threshold <= 0.25:
        raise ValueError("threshold must lie in (0, 0.25]")
    return "compromised" if qber > threshold else "clean"


def otp_apply(data: bytes, key_bits) -> bytes:
    """XOR ``data`` with the first 8*len(data) key bits (MSB first)."""
    bits = np.asarray(key_bits, dtype=np.uint8).ravel()
    need = 8 * len(data)
    if bits.size < need:
        raise KeyExhausted(f"need {need} key bits, have {bits.size}")
    pad = np.packbits(bits[:need])
    return (np.frombuffer(data, dtype=np.uint8) ^ pad).tobytes()


class OneTimePad:
    """Key stream with a consumption cursor; each bit may be used once."""

    def __init__(self, key_bits):
        self.bits = np.asarray(key_bits, dtype=np.uint8).ravel().copy()
        self.cursor = 0

    @property
    def remaining(self) -> int:
        return self.bits.size - self.cursor

    def apply(self, data: bytes, offset: int | None = None) -> tuple[int, bytes]:
        """XOR ``data`` at ``offset`` (default: the cursor); returns (offset used, output)."""
        start = self.cursor if offset is None else int(offset)
        if start < self.cursor:
            raise KeyReuse(f"key bits from {start} were already consumed (cursor at {self.cursor})")
        out = otp_apply(data, self.bits[start:])
        self.cursor = start + 8 * len(data)
        return start, out


TAG_BYTES = 4


def seal(message: bytes) -> bytes:
    """Append a truncated SHA-256 integrity tag."""
    return message + hashlib.sha256(message).digest()[:TAG_BYTES]


def unseal(frame: bytes) -> bytes | None:
    """Message if the tag verifies, else None."""
    if len(frame) < TAG_BYTES:
        return None
    msg, tag = frame[:-TAG_BYTES], frame[-TAG_BYTES:]
    return msg if hashlib.sha256(msg).digest()[:TAG_BYTES] == tag else None


@dataclass
class BB84Session:
    n: int
    channel: ChannelModel
    records: list
    arrivals: list
    outcomes: list
    alice_sifted: SiftedKey
    bob_sifted: SiftedKey
    estimate: QberEstimate | None
    verdict: str
    threshold: float

    @property
    def sift_fraction(self) -> float:
        return len(self.alice_sifted) / self.n

    @property
    def qber(self) -> float:
        return self.estimate.qber if self.estimate else float("nan")

    @property
    def alice_key(self) -> SiftedKey:
        return self.estimate.alice_key if self.estimate else self.alice_sifted

    @property
    def bob_key(self) -> SiftedKey:
        return self.estimate.bob_key if self.estimate else self.bob_sifted

    def summary(self) -> dict:
        return {
            "n": self.n,
            "sift_fraction": self.sift_fraction,
            "qber": self.qber,
            "verdict": self.verdict,
            "key_len": len(self.alice_key),
        }

    def transcript(self) -> Iterable[dict]:
        sifted = set(self.alice_sifted.source_indices)
        disclosed = set(self.alice_key.qber_sample_indices)
        for r, a, o in zip(self.records, self.arrivals, self.outcomes):
            yield {
                "index": r.index,
                "prepared": {"bit": r.bit, "basis": r.basis, "pol_angle": r.pol_angle, "timestamp": r.timestamp},
                "channel": {
                    "lost": a.lost,
                    "eve": None if a.eve is None else asdict(a.eve),
                    "depolarized": a.depolarized,
                    "arrival_angle": a.pol_angle,
                },
                "measured": {"basis": o.basis, "bit": o.bit, "detected": o.detected},
                "sifted": r.index in sifted,
                "disclosed": r.index in disclosed,
            }


SUMMARY_COLUMNS = ["n", "sift_fraction", "qber", "verdict", "key_len"]


def run_session(n: int, channel: ChannelModel, rng_alice: np.random.Generator, rng_channel: np.random.Generator,
                rng_bob: np.random.Generator, rng_sample: np.random.Generator,
                sample_fraction: float = DEFAULT_SAMPLE_FRACTION, threshold: float = DEFAULT_THRESHOLD) -> BB84Session:
    records = alice_prepare(n, rng_alice)
    arrivals = transmit(records, channel, rng_channel)
    outcomes = bob_measure(arrivals, rng_bob, channel.detector_efficiency)
    a_key, b_key = sift(records, outcomes)
    if len(a_key) == 0:
        return BB84Session(n, channel, records, arrivals, outcomes, a_key, b_key, None, "compromised", threshold)
    est = estimate_qber(a_key, b_key, sample_fraction, rng_sample)
    return BB84Session(n, channel, records, arrivals, outcomes, a_key, b_key, est,
                       detect_eve(est.qber, threshold), threshold)


def write_transcript(session: BB84Session, fh) -> None:
    for rec in session.transcript():
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def summary_csv(session: BB84Session) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in session.summary().items()})
    return buf.getvalue()
