import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binomtest

from oracles import intercept_resend_qber
from qautosim.bb84 import (ENCODING_DEG, SUMMARY_COLUMNS, Arrival, ChannelModel, OneTimePad, PhotonRecord,
                           SiftedKey, alice_prepare, bob_measure, detect_eve, estimate_qber, otp_apply,
                           run_session, seal, sift, summary_csv, transmit, unseal, write_transcript)
from qautosim.errors import EmptyKey, KeyExhausted, KeyReuse, MisalignedStreams
from qautosim.rng import StreamFactory


def rngs(seed):
    f = StreamFactory(seed)
    return [f.stream("bb84", i) for i in range(4)]


def session(n, channel, seed=1, **kw):
    return run_session(n, channel, *rngs(seed), **kw)


def test_prepare_bijection_and_uniformity():
    recs = alice_prepare(100_000, np.random.default_rng(0))
    assert all(r.pol_angle == ENCODING_DEG[(r.basis, r.bit)] for r in recs)
    assert abs(np.mean([r.basis == "plus" for r in recs]) - 0.5) < 0.005
    assert [r.timestamp for r in recs[:3]] == [0.0, 1e-6, 2e-6]


def test_prepare_deterministic():
    a = alice_prepare(500, np.random.default_rng(9))
    b = alice_prepare(500, np.random.default_rng(9))
    assert a == b
    with pytest.raises(ValueError):
        alice_prepare(0, np.random.default_rng(0))


def test_ideal_channel_passes_states_unchanged():
    recs = alice_prepare(1000, np.random.default_rng(1))
    arr = transmit(recs, ChannelModel(), np.random.default_rng(2))
    assert [a.pol_angle for a in arr] == [r.pol_angle for r in recs]
    assert all(a.eve is None and not a.depolarized for a in arr)


def test_eve_matching_basis_resends_same_state():
    recs = alice_prepare(2000, np.random.default_rng(3))
    arr = transmit(recs, ChannelModel(eve_fraction=1.0), np.random.default_rng(4))
    for r, a in zip(recs, arr):
        if a.eve.basis == r.basis:
            assert a.pol_angle == r.pol_angle and a.eve.bit == r.bit


def test_loss_and_depolarization_rates():
    recs = alice_prepare(50_000, np.random.default_rng(5))
    arr = transmit(recs, ChannelModel(transmittance=0.7, depolarization_prob=0.2), np.random.default_rng(6))
    assert abs(np.mean([a.lost for a in arr]) - 0.3) < 0.01
    assert abs(np.mean([a.depolarized for a in arr]) - 0.2) < 0.01


def test_bob_matched_and_orthogonal_bases():
    rng = np.random.default_rng(7)
    out = bob_measure([Arrival(i, 0.0) for i in range(200)], rng, bases=["plus"] * 200)
    assert all(o.bit == 0 for o in out)
    out = bob_measure([Arrival(i, 90.0) for i in range(200)], rng, bases=["plus"] * 200)
    assert all(o.bit == 1 for o in out)


def test_bob_diagonal_photon_in_plus_basis():
    out = bob_measure([Arrival(i, 45.0) for i in range(100_000)], np.random.default_rng(8), bases=["plus"] * 100_000)
    assert abs(np.mean([o.bit == 0 for o in out]) - 0.5) < 0.005


def test_bob_lost_and_undetected():
    out = bob_measure([Arrival(0, None), Arrival(1, 0.0)], np.random.default_rng(0), detector_efficiency=0.0)
    assert all(not o.detected and o.bit is None for o in out)
    with pytest.raises(MisalignedStreams):
        bob_measure([Arrival(0, 0.0)], np.random.default_rng(0), bases=["plus", "plus"])


def test_sift_forced_matching_bases_keeps_detected():
    recs = [PhotonRecord(i, 0, "plus", 0.0, 0.0) for i in range(10_000)]
    arr = transmit(recs, ChannelModel(), np.random.default_rng(1))
    out = bob_measure(arr, np.random.default_rng(2), detector_efficiency=0.6, bases=["plus"] * 10_000)
    a, b = sift(recs, out)
    assert len(a) == sum(o.detected for o in out)


def test_sift_no_detections_and_misaligned():
    recs = alice_prepare(10, np.random.default_rng(0))
    out = bob_measure(transmit(recs, ChannelModel(), np.random.default_rng(1)), np.random.default_rng(2), 0.0)
    a, b = sift(recs, out)
    assert len(a) == len(b) == 0
    with pytest.raises(MisalignedStreams):
        sift(recs, out[:-1])
    with pytest.raises(MisalignedStreams):
        sift(recs, list(reversed(out)))


def test_sift_fraction_scales_with_efficiency_and_transmittance():
    s = session(50_000, ChannelModel(transmittance=0.8, detector_efficiency=0.5))
    expected = 0.8 * 0.5 / 2
    assert abs(s.sift_fraction - expected) < 4 * np.sqrt(expected * (1 - expected) / 50_000)


def test_ideal_channel_statistics_and_key_agreement():
    s = session(100_000, ChannelModel())
    assert abs(s.sift_fraction - 0.5) < 0.005
    ci = binomtest(len(s.alice_sifted), 100_000).proportion_ci(0.99, method="wilson")
    assert ci.low <= 0.5 <= ci.high
    assert s.alice_sifted.bits == s.bob_sifted.bits
    assert s.qber < 0.001 and s.verdict == "clean"
    assert s.alice_key.bits == s.bob_key.bits


def test_disclosed_subset_is_removed():
    s = session(5000, ChannelModel())
    disclosed = set(s.alice_key.qber_sample_indices)
    assert disclosed.isdisjoint(s.alice_key.source_indices)
    assert np.all(np.diff(s.alice_key.source_indices) > 0)
    assert len(disclosed) + len(s.alice_key) == len(s.alice_sifted)


@pytest.mark.parametrize("f", [0.0, 0.5, 1.0])
def test_intercept_resend_qber_matches_enumeration(f):
    s = session(100_000, ChannelModel(eve_fraction=f), seed=3)
    expected = float(intercept_resend_qber(f))
    m = s.estimate.sample_size
    sigma = np.sqrt(max(expected * (1 - expected), 1e-12) / m)
    assert abs(s.qber - expected) <= 3 * sigma + 1e-12


def test_full_eve_detected():
    s = session(100_000, ChannelModel(eve_fraction=1.0), seed=4)
    assert abs(s.qber - 0.25) < 0.01
    assert s.verdict == "compromised"


def test_estimate_qber_identical_keys_and_errors():
    k = SiftedKey((0, 1, 1, 0) * 25, tuple(range(100)))
    est = estimate_qber(k, k, 0.2, np.random.default_rng(0))
    assert est.qber == 0 and est.sample_size == 20 and len(est.alice_key) == 80
    with pytest.raises(EmptyKey):
        estimate_qber(SiftedKey((), ()), SiftedKey((), ()), 0.2, np.random.default_rng(0))
    with pytest.raises(MisalignedStreams):
        estimate_qber(k, SiftedKey(k.bits, tuple(range(1, 101))), 0.2, np.random.default_rng(0))


def test_detect_eve_boundaries():
    assert detect_eve(0.0) == "clean"
    assert detect_eve(0.25) == "compromised"
    assert detect_eve(0.11) == "clean"
    assert detect_eve(0.1100001) == "compromised"
    with pytest.raises(ValueError):
        detect_eve(0.1, threshold=0.3)


def test_monobit_uniformity_of_sifted_key():
    s = session(200_000, ChannelModel(), seed=6)
    bits = np.array(s.alice_sifted.bits[:100_000])
    assert binomtest(int(bits.sum()), bits.size).pvalue > 0.001


def test_otp_examples():
    msg = b"formation:engage"
    assert otp_apply(msg, np.zeros(8 * len(msg))) == msg
    key = np.zeros(8 * len(msg), dtype=np.uint8)
    key[5] = 1
    out = otp_apply(msg, key)
    diff = np.unpackbits(np.frombuffer(out, np.uint8) ^ np.frombuffer(msg, np.uint8))
    assert diff.sum() == 1 and diff[5] == 1
    with pytest.raises(KeyExhausted):
        otp_apply(msg, np.zeros(8))


@given(st.binary(max_size=64), st.integers(0, 2**32 - 1))
def test_otp_involution(msg, seed):
    key = np.random.default_rng(seed).integers(0, 2, 8 * len(msg))
    assert otp_apply(otp_apply(msg, key), key) == msg


def test_pad_cursor_prevents_reuse():
    key = np.random.default_rng(0).integers(0, 2, 64)
    alice, bob = OneTimePad(key), OneTimePad(key)
    off, ct = alice.apply(b"abc")
    assert off == 0 and alice.cursor == 24
    assert bob.apply(ct)[1] == b"abc"
    with pytest.raises(KeyReuse):
        alice.apply(b"x", offset=0)
    with pytest.raises(KeyExhausted):
        alice.apply(b"too long")


def test_seal_unseal():
    frame = seal(b"hello")
    assert unseal(frame) == b"hello"
    bad = bytes([frame[0] ^ 1]) + frame[1:]
    assert unseal(bad) is None
    assert unseal(b"ab") is None


def test_transcript_and_summary_outputs():
    s = session(300, ChannelModel(eve_fraction=0.5), seed=2)
    buf = io.StringIO()
    write_transcript(s, buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 300
    rec = json.loads(lines[0])
    assert set(rec) == {"index", "prepared", "channel", "measured", "sifted", "disclosed"}
    csv_text = summary_csv(s)
    assert csv_text.splitlines()[0] == ",".join(SUMMARY_COLUMNS) == "n,sift_fraction,qber,verdict,key_len"
    buf2 = io.StringIO()
    write_transcript(session(300, ChannelModel(eve_fraction=0.5), seed=2), buf2)
    assert buf.getvalue() == buf2.getvalue()


def test_channel_validation():
    with pytest.raises(ValueError):
        ChannelModel(transmittance=1.5)
    assert ChannelModel().eve == "none"
