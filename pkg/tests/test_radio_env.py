import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpcq.agents import ACTION_LEVELS_DBM
from dpcq.radio_env import (
    NOISE_POWER,
    ChannelMatrix,
    PlacementLimits,
    PowerAllocation,
    Topology,
    TopologyError,
    capacities,
    channel_gains,
    dbm_to_mw,
    equal_split_macro_dbm,
    femto_capacity,
    generate_topology,
    macro_capacity,
    mw_to_dbm,
)

SIGMA = NOISE_POWER


def toy_channel(h_oo=1.0, h_io=(), h_oi=(), h_ff=None, n_sub=1):
    h_io = np.asarray(h_io, dtype=float)
    N = h_io.size
    if len(h_oi) == 0:
        h_oi = np.zeros(N)
    rep = lambda a: np.repeat(np.asarray(a, dtype=float)[..., None], n_sub, axis=-1)  # noqa: E731
    if h_ff is None:
        h_ff = np.zeros((N, N))
    return ChannelMatrix(
        macro_to_macro=rep(h_oo),
        macro_to_femto=rep(np.asarray(h_oi, dtype=float).reshape(N)),
        femto_to_macro=rep(h_io.reshape(N)),
        femto_to_femto=rep(np.asarray(h_ff, dtype=float).reshape(N, N)),
    )


def alloc(femto_mw, macro_mw):
    with np.errstate(divide="ignore"):
        return PowerAllocation(mw_to_dbm(np.atleast_2d(femto_mw)), mw_to_dbm(np.atleast_1d(macro_mw)))


# -- topology ------------------------------------------------------------------

@pytest.mark.parametrize("n_femto,seed", [(4, 42), (15, 7), (1, 0), (11, 3)])
def test_generated_topology_satisfies_every_constraint(n_femto, seed):
    topo = generate_topology(n_femto, seed)
    assert topo.n_femto == n_femto
    assert topo.violations() == []


def test_topology_is_deterministic_per_seed():
    a = generate_topology(6, 123)
    b = generate_topology(6, 123)
    for name in ("mbs_position", "macro_user_position", "fbs_positions", "femto_user_positions"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = generate_topology(6, 124)
    assert not np.array_equal(a.fbs_positions, c.fbs_positions)


def test_placement_gives_up_with_a_diagnostic():
    impossible = PlacementLimits(fbs_to_other_user=0.5)
    with pytest.raises(TopologyError, match="infeasible"):
        generate_topology(3, 0, limits=impossible, max_attempts=50, max_restarts=2)


def test_violations_flags_broken_constraints():
    v = Topology([0, 0], [1200, 0], [[0, 300]], [[0, 400]]).violations()
    assert "MBS to macro user" in v
    assert "FBS to own user" in v
    close = Topology([0, 0], [500, 0], [[0, 300]], [[0, 300.5]]).violations()
    assert close == ["minimum separation"]


def test_topology_json_round_trip_keeps_six_significant_digits():
    topo = generate_topology(5, 9)
    back = Topology.from_json(topo.to_json())
    assert np.allclose(back.fbs_positions, topo.fbs_positions, rtol=1e-5)
    assert np.allclose(back.macro_user_position, topo.macro_user_position, rtol=1e-5)
    assert Topology.from_json(back.to_json()).to_json() == back.to_json()


# -- channel gains -------------------------------------------------------------

@pytest.mark.parametrize("d,expected", [(100.0, 1e-4), (1.0, 1.0), (80.0, 1.5625e-4)])
def test_path_loss_gain(d, expected):
    topo = Topology([0, 0], [d, 0], [[0, 500]], [[0, 500 + d]])
    ch = channel_gains(topo, k=2, n_sub=6)
    assert ch.macro_to_macro == pytest.approx(np.full(6, expected), rel=1e-12)
    assert ch.femto_to_femto[0, 0] == pytest.approx(np.full(6, expected), rel=1e-12)


def test_zero_distance_is_rejected():
    topo = Topology([0, 0], [100, 0], [[0, 300]], [[0, 300]])
    with pytest.raises(ValueError, match="zero"):
        channel_gains(topo)


def test_gains_have_no_subcarrier_dependence():
    ch = channel_gains(generate_topology(5, 1), n_sub=6)
    perm = np.random.default_rng(0).permutation(6)
    for g in (ch.macro_to_macro, ch.macro_to_femto, ch.femto_to_macro, ch.femto_to_femto):
        assert np.array_equal(g, g[..., perm])
        assert np.all(np.isfinite(g)) and np.all(g > 0)


def test_gain_link_orientation():
    topo = generate_topology(3, 5)
    ch = channel_gains(topo, n_sub=1)
    d = topo.link_distances()
    # femto_to_femto[j, i] is FBS j -> user of FBS i
    j, i = 0, 2
    dist = np.linalg.norm(topo.fbs_positions[j] - topo.femto_user_positions[i])
    assert ch.femto_to_femto[j, i, 0] == pytest.approx(dist ** -2)
    assert ch.femto_to_macro[:, 0] == pytest.approx(d["fbs_to_macro_user"] ** -2.0)


# -- power allocation ----------------------------------------------------------

def test_equal_split_uses_the_full_macro_budget():
    macro = equal_split_macro_dbm(6)
    assert dbm_to_mw(macro).sum() == pytest.approx(dbm_to_mw(43.0), rel=1e-12)


def test_linear_mirror_tracks_dbm():
    pa = PowerAllocation.uniform(3, 6, -20.0)
    pa.set_femto(1, 2, 15.0)
    assert pa.femto_mw[1, 2] == pytest.approx(10 ** 1.5)
    assert np.allclose(pa.femto_mw, 10 ** (pa.femto_dbm / 10))
    assert pa.femto_total_mw()[0] == pytest.approx(6 * 0.01)


# -- capacities ----------------------------------------------------------------

def test_macro_capacity_no_interference_unit_snr():
    ch = toy_channel(h_oo=1.0, h_io=[1.0])
    pa = alloc([[0.0]], [SIGMA])
    assert macro_capacity(ch, pa, 0) == pytest.approx(1.0)


def test_macro_capacity_zero_signal():
    ch = toy_channel(h_oo=1.0, h_io=[1.0])
    pa = alloc([[1.0]], [0.0])
    assert macro_capacity(ch, pa, 0) == 0.0


def test_macro_capacity_single_interferer():
    # h_io * P_i = sigma^2 and h_oo * P_o = 2 sigma^2 -> SINR 1
    ch = toy_channel(h_oo=1.0, h_io=[0.5])
    pa = alloc([[2 * SIGMA]], [2 * SIGMA])
    assert macro_capacity(ch, pa, 0) == pytest.approx(1.0)


def test_femto_capacity_zero_power():
    ch = toy_channel(h_io=[1.0], h_oi=[1.0], h_ff=[[1.0]])
    pa = alloc([[0.0]], [1.0])
    assert femto_capacity(ch, pa, 0, 0) == 0.0


def test_femto_capacity_noise_only():
    ch = toy_channel(h_io=[1.0], h_oi=[0.0], h_ff=[[1.0]])
    pa = alloc([[3 * SIGMA]], [1.0])
    assert femto_capacity(ch, pa, 0, 0) == pytest.approx(2.0)


def test_femto_capacity_drops_when_a_neighbour_doubles_power():
    h_ff = [[1e-3, 1e-5], [2e-5, 1e-3]]
    ch = toy_channel(h_io=[1e-6, 1e-6], h_oi=[1e-7, 1e-7], h_ff=h_ff)
    before = femto_capacity(ch, alloc([[1.0], [1.0]], [100.0]), 0, 0)
    after = femto_capacity(ch, alloc([[1.0], [2.0]], [100.0]), 0, 0)
    assert after < before


def test_vectorized_capacities_match_scalar_formulas():
    topo = generate_topology(5, 11)
    ch = channel_gains(topo, n_sub=6)
    rng = np.random.default_rng(1)
    pa = PowerAllocation(rng.choice(ACTION_LEVELS_DBM, size=(5, 6)), equal_split_macro_dbm(6))
    rep = capacities(ch, pa)
    for n in range(6):
        assert rep.macro_capacity[n] == pytest.approx(macro_capacity(ch, pa, n), rel=1e-12)
        for i in range(5):
            assert rep.femto_capacity[i, n] == pytest.approx(femto_capacity(ch, pa, i, n), rel=1e-12)


grid = st.sampled_from(ACTION_LEVELS_DBM.tolist())


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 50), powers=st.lists(grid, min_size=12, max_size=12),
       victim=st.integers(0, 1), bump=st.floats(0.1, 10.0))
def test_capacity_monotonicity(seed, powers, victim, bump):
    topo = generate_topology(2, seed)
    ch = channel_gains(topo, n_sub=6)
    p = np.array(powers, dtype=float).reshape(2, 6)
    base = capacities(ch, PowerAllocation(p, equal_split_macro_dbm(6)))
    other = 1 - victim

    louder_other = p.copy()
    louder_other[other] += bump
    r = capacities(ch, PowerAllocation(louder_other, equal_split_macro_dbm(6)))
    assert np.all(r.femto_capacity[victim] <= base.femto_capacity[victim])
    assert np.all(r.macro_capacity <= base.macro_capacity)

    louder_self = p.copy()
    louder_self[victim] += bump
    r = capacities(ch, PowerAllocation(louder_self, equal_split_macro_dbm(6)))
    assert np.all(r.femto_capacity[victim] > base.femto_capacity[victim])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 50), powers=st.lists(grid, min_size=18, max_size=18))
def test_dbm_and_linear_paths_agree_and_stay_finite(seed, powers):
    topo = generate_topology(3, seed)
    ch = channel_gains(topo, n_sub=6)
    p = np.array(powers, dtype=float).reshape(3, 6)
    pa = PowerAllocation(p, equal_split_macro_dbm(6))
    rep = capacities(ch, pa)
    # recompute from an independently converted linear allocation
    lin = 10 ** (p / 10)
    macro_lin = np.full(6, 10 ** 4.3 / 6)
    interference = (ch.femto_to_macro * lin).sum(axis=0)
    c_o = np.log2(1 + ch.macro_to_macro * macro_lin / (interference + SIGMA))
    assert np.allclose(rep.macro_capacity, c_o, rtol=1e-12, atol=0)
    for arr in (rep.macro_capacity, rep.femto_capacity):
        assert np.all(np.isfinite(arr)) and np.all(arr >= 0)
