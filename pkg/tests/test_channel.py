import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from femtoq.channel import (MBS, MU, GainMatrix, Kind, NodeId, PowerAction, compute_capacities,
                            compute_sinr, db_to_linear, fbs, linear_to_db, pathloss_gain,
                            pathloss_matrix, probe_estimate, synthesize_probe_samples)
from femtoq.errors import ConfigurationError, EstimationError, ScenarioError
from femtoq.mac import EstimationMode, estimate_link_gain


def lin(x):
    return PowerAction((linear_to_db(x),))


def full_matrix(k=1, noise=1.0, n_fbs=2, value=0.0, serving=1.0):
    nodes = [MBS, MU] + [fbs(n) for n in range(1, n_fbs + 1)]
    links = {(a, b, s): value for a in nodes for b in nodes if a != b for s in range(k)}
    serv = {(n, s): serving for n in range(1, n_fbs + 1) for s in range(k)}
    return GainMatrix(k, noise, links, serv)


def eq2a_channel():
    ch = full_matrix(noise=0.1)
    links = dict(ch.links)
    links[(MBS, fbs(1), 0)] = 0.01
    links[(MU, fbs(1), 0)] = 0.05
    links[(fbs(2), fbs(1), 0)] = 0.02
    return ch.with_links(links, {(1, 0): 1.0, (2, 0): 1.0})


def test_node_ids():
    assert str(fbs(3)) == "fbs3" and NodeId.parse("FBS3") == fbs(3)
    assert NodeId.parse("mu") == MU
    assert sorted([fbs(2), MU, fbs(1), MBS]) == [MBS, MU, fbs(1), fbs(2)]
    with pytest.raises(ConfigurationError):
        NodeId(Kind.FBS, 0)
    with pytest.raises(ConfigurationError):
        NodeId(Kind.MBS, 1)
    with pytest.raises(ConfigurationError):
        NodeId.parse("fu1")


class TestSinr:
    def test_single_link(self):
        ch = full_matrix(n_fbs=1, serving=1.0)
        assert compute_sinr(fbs(1), 0, {fbs(1): lin(1.0)}, ch) == pytest.approx(1.0, abs=1e-12)

    def test_fbs_receiver_with_three_interferers(self):
        profile = {fbs(1): lin(10), MBS: lin(100), MU: lin(10), fbs(2): lin(10)}
        got = compute_sinr(fbs(1), 0, profile, eq2a_channel())
        assert got == pytest.approx(10 / 1.8, abs=1e-9)

    def test_interference_free_reduces_to_snr(self):
        ch = full_matrix(n_fbs=2, serving=7.0)
        profile = {fbs(1): lin(1.0), MBS: lin(100), MU: lin(10), fbs(2): lin(50)}
        assert compute_sinr(fbs(1), 0, profile, ch) == pytest.approx(7.0, abs=1e-9)

    def test_macro_link_ignores_mu_transmit_power(self):
        ch = full_matrix(n_fbs=1, value=0.1)
        links = dict(ch.links)
        links[(MBS, MU, 0)] = 1.0
        ch = ch.with_links(links, ch.serving)
        base = {MBS: lin(100), fbs(1): lin(10)}
        a = compute_sinr(MU, 0, base, ch)
        b = compute_sinr(MU, 0, {**base, MU: lin(1000)}, ch)
        assert a == b == pytest.approx(100 / (1 + 1.0))

    def test_missing_gain_names_the_triple(self):
        ch = GainMatrix(1, 1.0, {}, {(1, 0): 1.0})
        with pytest.raises(ConfigurationError, match=r"tx=mbs, rx=fbs1, subchannel=0"):
            compute_sinr(fbs(1), 0, {fbs(1): lin(1), MBS: lin(1)}, ch)

    def test_inactive_serving_transmitter(self):
        with pytest.raises(ScenarioError):
            compute_sinr(MU, 0, {fbs(1): lin(1)}, full_matrix())

    def test_self_gain_is_an_error(self):
        with pytest.raises(ConfigurationError):
            full_matrix().gain(MU, MU, 0)
        with pytest.raises(ConfigurationError):
            GainMatrix(1, 1.0, {(MU, MU, 0): 1.0})

    def test_gain_matrix_rejects_bad_values(self):
        with pytest.raises(ConfigurationError):
            GainMatrix(1, 0.0)
        with pytest.raises(ConfigurationError):
            GainMatrix(1, 1.0, {(MBS, MU, 0): -1.0})
        with pytest.raises(ConfigurationError):
            GainMatrix(1, 1.0, {(MBS, MU, 0): math.inf})
        with pytest.raises(ConfigurationError):
            GainMatrix(1, 1.0, {(MBS, MU, 3): 1.0})


class TestCapacities:
    def test_mbs_alone(self):
        ch = full_matrix(k=2)
        links = dict(ch.links)
        links[(MBS, MU, 0)] = links[(MBS, MU, 1)] = 1.0
        ch = ch.with_links(links, ch.serving)
        rep = compute_capacities({MBS: PowerAction((0.0, 0.0))}, ch)
        assert rep.c_m == pytest.approx(2.0, abs=1e-12)
        assert rep.c_n == {} and rep.c_0 == 0.0

    def test_one_loaded_subchannel(self):
        # subchannel 0 is the 10/1.8 case, subchannel 1 carries no FBS signal
        base = eq2a_channel()
        links = {(a, b, s): g for (a, b, _), g in base.links.items() for s in (0, 1)}
        for key in list(links):
            if key[2] == 1:
                links[key] = 0.0
        links[(MBS, MU, 0)] = links[(MBS, MU, 1)] = 1.0
        ch = GainMatrix(2, 0.1, links, {(1, 0): 1.0, (1, 1): 0.0, (2, 0): 1.0, (2, 1): 1.0})
        profile = {fbs(1): PowerAction((10.0, 10.0)), MBS: PowerAction((20.0, 20.0)),
                   MU: PowerAction((10.0, 10.0)), fbs(2): PowerAction((10.0, 10.0))}
        rep = compute_capacities(profile, ch)
        # independent: log2(1 + 50/9), 50/9 = 10/1.8
        assert rep.c_n[1] == pytest.approx(2.712718047919529, abs=1e-9)
        assert rep.per_node_sinr[(fbs(1), 1)] == 0.0

    def test_c0_is_the_sum(self):
        ch = full_matrix(k=1, n_fbs=2)
        serving = {(1, 0): 2 ** 1.5 - 1, (2, 0): 2 ** 2.5 - 1}
        ch = ch.with_links({**ch.links, (MBS, MU, 0): 1.0}, serving)
        rep = compute_capacities({MBS: lin(1), fbs(1): lin(1), fbs(2): lin(1)}, ch)
        assert rep.c_n[1] == pytest.approx(1.5) and rep.c_n[2] == pytest.approx(2.5)
        assert rep.c_0 == pytest.approx(4.0, abs=1e-12)


class TestProbe:
    def test_constant_samples(self):
        assert probe_estimate([3.0, 3.0, 3.0]) == (3.0, 0.0)

    def test_mean_and_unbiased_variance(self):
        assert probe_estimate([1.0, 2.0, 3.0]) == pytest.approx((2.0, 1.0), abs=1e-12)

    def test_ten_equal_samples(self):
        v = 0.1234567
        assert probe_estimate([v] * 10) == (v, 0.0)

    def test_too_few_samples(self):
        with pytest.raises(EstimationError):
            probe_estimate([1.0])
        with pytest.raises(EstimationError):
            synthesize_probe_samples(1.0, 1.0, 1, 0)
        with pytest.raises(EstimationError):
            synthesize_probe_samples(-1.0, 1.0, 5, 0)

    def test_noise_free_samples_are_exact(self):
        assert synthesize_probe_samples(2.5, 0.0, 7, 3) == [2.5] * 7

    def test_large_sample_mean(self):
        s = synthesize_probe_samples(2.0, 1.0, 10 ** 5, np.random.default_rng(42))
        assert abs(np.mean(s) - 2.0) / 2.0 < 0.02
        assert min(s) >= 0.0

    def test_seed_determinism(self):
        assert synthesize_probe_samples(2.0, 1.0, 10, 42) == synthesize_probe_samples(2.0, 1.0, 10, 42)


def test_pathloss():
    assert pathloss_gain(10.0, g0=1.0, d0=1.0, eta=2.0) == pytest.approx(0.01)
    assert pathloss_gain(0.5, g0=2.0, d0=1.0, eta=3.0) == 2.0
    ch = pathloss_matrix({MBS: (0, 0), MU: (10, 0), fbs(1): (0, 20)}, {1: 2.0}, 2, 1.0, eta=2.0)
    assert ch.gain(MBS, MU, 1) == pytest.approx(0.01)
    assert ch.gain(MU, fbs(1), 0) == pytest.approx(1 / 500)
    assert ch.serving_gain(fbs(1), 0) == pytest.approx(0.25)


# -- properties -----------------------------------------------------------------

gains = st.floats(0.0, 10.0, allow_nan=False)
powers = st.floats(-20.0, 40.0, allow_nan=False)


@st.composite
def random_setup(draw):
    k = 1
    ch = full_matrix(k=k, noise=draw(st.floats(1e-3, 10.0)), n_fbs=3)
    links = {key: draw(gains) for key in ch.links}
    serving = {key: draw(gains) for key in ch.serving}
    ch = ch.with_links(links, serving)
    profile = {n: PowerAction((draw(powers),)) for n in [MBS, MU, fbs(1), fbs(2), fbs(3)]}
    rx = draw(st.sampled_from([MU, fbs(1), fbs(2), fbs(3)]))
    return ch, profile, rx


@settings(max_examples=300, deadline=None)
@given(random_setup(), st.sampled_from([MBS, MU, fbs(1), fbs(2), fbs(3)]), st.floats(0.0, 30.0))
def test_raising_an_interferer_never_helps(setup, node, bump):
    ch, profile, rx = setup
    serving_tx = MBS if rx == MU else rx
    if node in (serving_tx, rx):
        return
    before = compute_sinr(rx, 0, profile, ch)
    louder = dict(profile)
    louder[node] = PowerAction((profile[node].levels_db[0] + bump,))
    assert compute_sinr(rx, 0, louder, ch) <= before * (1 + 1e-12)


@settings(max_examples=300, deadline=None)
@given(random_setup(), st.floats(0.0, 30.0))
def test_raising_serving_power_never_hurts(setup, bump):
    ch, profile, rx = setup
    tx = MBS if rx == MU else rx
    before = compute_sinr(rx, 0, profile, ch)
    louder = dict(profile)
    louder[tx] = PowerAction((profile[tx].levels_db[0] + bump,))
    assert compute_sinr(rx, 0, louder, ch) >= before * (1 - 1e-12)


@settings(max_examples=200, deadline=None)
@given(random_setup())
def test_capacity_consistency(setup):
    ch, profile, _ = setup
    rep = compute_capacities(profile, ch)
    assert abs(math.fsum(rep.c_n.values()) - rep.c_0) <= 1e-12
    for n, c in rep.c_n.items():
        assert c == pytest.approx(math.log2(1 + rep.per_node_sinr[(fbs(n), 0)]), abs=1e-12)
    assert all(v >= 0 and math.isfinite(v) for v in rep.per_node_sinr.values())


@pytest.mark.parametrize("level", [0, 5, 10, 15, 20, 25, 30])
def test_db_round_trip(level):
    x = db_to_linear(level)
    assert db_to_linear(linear_to_db(x)) == pytest.approx(x, rel=1e-12, abs=1e-12)
    assert linear_to_db(x) == pytest.approx(level, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 1e6, allow_nan=False), st.integers(2, 50), st.integers(0, 2 ** 32))
def test_probe_consistency(p, m, seed):
    assert probe_estimate(synthesize_probe_samples(p, 0.0, m, seed)) == (p, 0.0)


@settings(max_examples=100, deadline=None)
@given(random_setup(), st.integers(2, 20))
def test_perfect_csi_matches_noise_free_probe_path(setup, count):
    ch, profile, _ = setup
    probe = EstimationMode("probe", count, 0.0)
    links = {}
    for (tx, rx, k) in ch.links:
        links[(tx, rx, k)] = estimate_link_gain(tx, rx, k, ch, probe, profile[tx].linear[k], 0)
    serving = {(n, k): estimate_link_gain(fbs(n), fbs(n), k, ch, probe, profile[fbs(n)].linear[k], 0)
               for (n, k) in ch.serving}
    a = compute_capacities(profile, ch)
    b = compute_capacities(profile, ch.with_links(links, serving))
    assert b.c_m == pytest.approx(a.c_m, abs=1e-9)
    for n in a.c_n:
        assert b.c_n[n] == pytest.approx(a.c_n[n], abs=1e-9)
