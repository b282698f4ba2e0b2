import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import point_mass_formation_ode
from qautosim.errors import SizeMismatch
from qautosim.formation import (AgentNetwork, PIDGains, control_forces, formation_error, point_mass,
                                simulate_formation)

TRIANGLE = np.array([[-1.0, 1.0, 0.0], [-1.0, -1.0, 0.0], [-2.0, 0.0, 0.0]])


def complete(n):
    a = np.ones((n + 1, n + 1), dtype=int) - np.eye(n + 1, dtype=int)
    a[0] = 0
    return a


def network(offsets=TRIANGLE, kp=4.0, ki=0.0, kd=4.0, **kw):
    return AgentNetwork(complete(len(offsets)), offsets, PIDGains.uniform(kp, ki, kd), **kw)


def test_formation_error_examples():
    assert formation_error([[1, 1, 0]], [0, 1, 0], [[1, 0, 0]]).norm == 0
    fe = formation_error([[1, 0, 0]], [0, 0, 0], [[0, 0, 0]])
    assert np.array_equal(fe.per_agent, [[1, 0, 0]]) and fe.norm == 1
    ref = np.array([3.0, -2.0, 1.0])
    assert formation_error(ref + TRIANGLE, ref, TRIANGLE).norm == 0
    with pytest.raises(SizeMismatch):
        formation_error([[0, 0, 0]], [0, 0, 0], TRIANGLE)


def test_fixed_point_gives_zero_force():
    ref = np.array([1.0, 2.0, 3.0])
    f, integ = control_forces(network(ki=1.0), ref + TRIANGLE, np.zeros((3, 3)), None, ref)
    assert np.array_equal(f, np.zeros((3, 3))) and np.array_equal(integ, np.zeros((3, 3)))


def test_single_link_pure_proportional():
    adj = np.array([[0, 0, 0], [0, 0, 1], [1, 0, 0]])
    d = np.array([[1.0, 0, 0], [0.0, 0, 0]])
    net = AgentNetwork(adj, d, PIDGains.uniform(2.5))
    pos = np.array([[3.0, 1.0, 0.0], [0.5, 0.0, -1.0]])
    f, _ = control_forces(net, pos, np.zeros((2, 3)))
    e = (pos[0] - pos[1]) - (d[0] - d[1])
    assert np.allclose(f[0], -2.5 * e)


@settings(max_examples=50)
@given(st.tuples(*[st.floats(-100, 100, allow_nan=False)] * 3), st.integers(0, 2**32 - 1))
def test_translation_invariance_exact(shift, seed):
    rng = np.random.default_rng(seed)
    pos = rng.normal(size=(3, 3))
    vel = rng.normal(size=(3, 3))
    ref = rng.normal(size=3)
    shift = np.array(shift)
    # shifts that are exact in binary make the comparison bit-exact
    shift = np.round(shift * 4) / 4
    pos, ref = np.round(pos * 4) / 4, np.round(ref * 4) / 4
    net = network(ki=0.5)
    f1, _ = control_forces(net, pos, vel, None, ref, dt=0.01)
    f2, _ = control_forces(net, pos + shift, vel, None, ref + shift, dt=0.01)
    assert np.array_equal(f1, f2)


def test_integrator_clamp_and_saturation():
    net = network(ki=1.0, integrator_limit=0.1, saturation=0.5)
    pos = TRIANGLE + 10.0
    f, integ = control_forces(net, pos, np.zeros((3, 3)), None, np.zeros(3), dt=1.0)
    assert np.abs(integ).max() == 0.1
    assert np.abs(f).max() == 0.5


def test_literal_offsets_flag_changes_law():
    pos = TRIANGLE.copy()
    f_tmpl, _ = control_forces(network(), pos, np.zeros((3, 3)))
    f_lit, _ = control_forces(network(literal_offsets=True), pos, np.zeros((3, 3)))
    assert np.array_equal(f_tmpl, np.zeros((3, 3)))
    assert np.abs(f_lit).max() > 0


@pytest.mark.parametrize("adj, err", [
    (np.array([[0, 1], [1, 1]]), ValueError),
    (np.array([[0, 0], [2, 0]]), ValueError),
    (np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]]), ValueError),  # followers cut off from the reference
    (np.zeros((3, 3), dtype=int), ValueError),
])
def test_network_validation(adj, err):
    n = adj.shape[0] - 1
    with pytest.raises(err):
        AgentNetwork(adj, np.zeros((n, 3)), PIDGains.uniform(1.0))


def test_network_size_mismatch():
    with pytest.raises(SizeMismatch):
        AgentNetwork(complete(2), TRIANGLE, PIDGains.uniform(1.0))


def test_line_formation_converges():
    offsets = np.array([[-1.0, 0, 0], [-2.0, 0, 0]])
    adj = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    net = AgentNetwork(adj, offsets, PIDGains.uniform(4.0, 0.0, 4.0))
    followers = [point_mass(1.0, (0.5, 1.0, 0.0)), point_mass(1.0, (-3.0, -1.0, 0.5))]
    log = simulate_formation(net, point_mass(1.0), followers, 30.0, 0.01, log_every=50)
    assert log.converged and log.final_error < 1e-3


def test_simulation_matches_ode_oracle_to_first_order():
    # forces are held over each step, so the gap to the continuous law shrinks linearly in dt
    rng = np.random.default_rng(11)
    x0 = TRIANGLE + rng.uniform(-1, 1, (3, 3))
    lead_v = np.array([0.5, 0.0, 0.0])
    net = network()
    ref = point_mass_formation_ode(net.adjacency, TRIANGLE, 4.0, 4.0, x0, np.zeros((3, 3)), np.zeros(3), lead_v, 3.0)
    errs = []
    for dt in (2e-3, 1e-3):
        followers = [point_mass(1.0, p) for p in x0]
        log = simulate_formation(net, point_mass(1.0, velocity=lead_v), followers, 3.0, dt, log_every=10**6)
        errs.append(np.abs(np.array(log.rows[-1][1:-1]).reshape(3, 3) - ref).max())
    assert errs[1] < 2e-5
    assert 1.8 < errs[0] / errs[1] < 2.2


def test_zero_gain_stays_put():
    net = network(kp=0.0, kd=0.0)
    followers = [point_mass(1.0, p + 1.0) for p in TRIANGLE]
    log = simulate_formation(net, point_mass(1.0), followers, 2.0, 0.01)
    assert not log.converged
    assert log.final_error == log.initial_error


def test_error_non_increasing_after_transient():
    rng = np.random.default_rng(5)
    for k in range(3):
        followers = [point_mass(1.0, p) for p in TRIANGLE + rng.uniform(-2, 2, (3, 3))]
        log = simulate_formation(network(), point_mass(1.0), followers, 30.0, 0.01, log_every=10)
        e = log.error_norms()
        tail = e[len(e) // 3:]
        assert log.final_error < 1e-3
        assert np.all(np.diff(tail) <= 1e-12 + 1e-9 * tail[:-1])


def test_engage_time_delays_control():
    followers = [point_mass(1.0, p + 0.5) for p in TRIANGLE]
    log = simulate_formation(network(), point_mass(1.0), followers, 2.0, 0.01, engage_time=1.0)
    t, e = log.times(), log.error_norms()
    assert np.all(e[t <= 1.0] == e[0]) and e[-1] < e[0]
    never = simulate_formation(network(), point_mass(1.0), followers, 2.0, 0.01, engage_time=None)
    assert never.final_error == never.initial_error


def test_simulation_is_deterministic_and_csv_monotone():
    followers = [point_mass(1.0, p + 0.3) for p in TRIANGLE]
    a = simulate_formation(network(), point_mass(1.0), followers, 1.0, 0.01).to_csv()
    b = simulate_formation(network(), point_mass(1.0), followers, 1.0, 0.01).to_csv()
    assert a == b
    rows = [list(map(float, r.split(","))) for r in a.strip().splitlines()[1:]]
    assert np.all(np.diff([r[0] for r in rows]) > 0)
    assert a.splitlines()[0] == "t,x1,y1,z1,x2,y2,z2,x3,y3,z3,error_norm"


def test_simulation_argument_checks():
    with pytest.raises(ValueError):
        simulate_formation(network(), point_mass(), [point_mass()] * 3, 0.0, 0.01)
    with pytest.raises(SizeMismatch):
        simulate_formation(network(), point_mass(), [point_mass()] * 2, 1.0, 0.01)
