import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpcq.tabular_q import (
    LearningParams,
    QTable,
    ToyMDP,
    epsilon_active,
    greedy,
    q_learning_on_mdp,
    q_update,
    random_mdp,
    select_action_epsilon,
    select_action_greedy,
    value_iteration_oracle,
)

P = LearningParams()


# -- update rule ---------------------------------------------------------------

@pytest.mark.parametrize(
    "q0,r,next_row,expected",
    [
        (0.0, 1.0, [0.0, 0.0], 0.5),
        (2.0, 2.0, [0.0, 0.0], 2.0),
        (1.0, 0.0, [1.0, 2.0], 1.4),
        (1.0, 0.1, [1.0, 2.0], 1.45),
        (2.0, 0.0, [1.0, 0.5], 1.45),
    ],
)
def test_update_examples(q0, r, next_row, expected):
    t = QTable(2, 2)
    t.values[0, 0] = q0
    t.values[1] = next_row
    q_update(t, 0, 0, r, 1, P)
    assert t.values[0, 0] == pytest.approx(expected, abs=1e-12)
    assert t.values[1].tolist() == next_row


def test_zero_step_size_leaves_table_unchanged():
    rng = np.random.default_rng(1)
    t = QTable(6, 19, rng.normal(size=(6, 19)))
    before = t.copy()
    q_update(t, 2, 3, 5.0, 4, LearningParams(alpha=0.0))
    assert t == before


def test_update_touches_only_one_entry():
    rng = np.random.default_rng(0)
    t = QTable(6, 19, rng.normal(size=(6, 19)))
    before = t.copy()
    q_update(t, 3, 7, 0.25, 5, P)
    diff = t.values != before.values
    assert diff.sum() == 1 and diff[3, 7]


def test_self_loop_update_uses_pre_update_maximum():
    t = QTable(1, 2, [[1.0, 3.0]])
    q_update(t, 0, 0, 0.0, 0, P)
    assert t.values[0, 0] == pytest.approx(0.5 * 1.0 + 0.5 * 0.9 * 3.0)


@pytest.mark.parametrize("s,a,s2", [(6, 0, 0), (0, 19, 0), (0, 0, 6), (-1, 0, 0)])
def test_update_rejects_out_of_range_indices(s, a, s2):
    with pytest.raises(IndexError):
        q_update(QTable(6, 19), s, a, 0.0, s2, P)


@pytest.mark.parametrize("kw", [{"alpha": -0.1}, {"alpha": 1.5}, {"gamma": 1.0}, {"epsilon": -0.1},
                                {"epsilon_active_fraction": 1.2}])
def test_learning_params_validation(kw):
    with pytest.raises(ValueError):
        LearningParams(**kw)


# -- action selection ----------------------------------------------------------

@pytest.mark.parametrize("row,expected", [([1, 3, 2], 1), ([5, 5, 1], 0), ([0, 0, 0, 0], 0), ([-3, -1, -1], 1)])
def test_greedy_examples(row, expected):
    assert greedy(row) == expected


def test_greedy_action_from_table():
    t = QTable(2, 3, [[0, 0, 0], [1, 3, 2]])
    assert select_action_greedy(t, 1) == 1
    with pytest.raises(IndexError):
        select_action_greedy(t, 2)


@pytest.mark.parametrize("t,total,active", [(0, 3000, True), (2399, 3000, True), (2400, 3000, False),
                                            (2999, 3000, False)])
def test_exploration_window(t, total, active):
    assert epsilon_active(P, t, total) is active


def test_epsilon_zero_is_deterministic_greedy():
    table = QTable(1, 4, [[0.1, 0.9, 0.3, 0.9]])
    params = LearningParams(epsilon=0.0)
    rng = np.random.default_rng(1)
    assert {select_action_epsilon(table, 0, params, t, 100, rng) for t in range(50)} == {1}


def test_greedy_after_the_window_even_with_full_exploration():
    table = QTable(1, 4, [[0.0, 0.0, 5.0, 0.0]])
    params = LearningParams(epsilon=1.0)
    rng = np.random.default_rng(2)
    assert all(select_action_epsilon(table, 0, params, t, 100, rng) == 2 for t in range(80, 100))


def test_late_iterations_are_greedy_with_default_epsilon():
    table = QTable(1, 5, [[0.0, 0.0, 0.0, 1.0, 0.0]])
    rng = np.random.default_rng(5)
    assert {select_action_epsilon(table, 0, P, 2700, 3000, rng) for _ in range(1000)} == {3}


def test_epsilon_one_is_uniform_inside_the_window():
    A, n = 19, 10_000
    table = QTable(1, A)
    table.values[0, 4] = 10.0
    params = LearningParams(epsilon=1.0)
    rng = np.random.default_rng(3)
    counts = np.bincount([select_action_epsilon(table, 0, params, 0, 100, rng) for _ in range(n)], minlength=A)
    expected = n / A
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # chi-square with 18 dof: the 0.999 quantile is about 42.3
    assert chi2 < 42.3
    sigma = np.sqrt(n * (1 / A) * (1 - 1 / A))
    assert np.all(np.abs(counts - expected) <= 3 * sigma)


def test_epsilon_selection_rejects_iteration_outside_run():
    with pytest.raises(ValueError):
        select_action_epsilon(QTable(1, 2), 0, P, 10, 10, np.random.default_rng())


def test_random_stream_does_not_depend_on_table_contents():
    params = LearningParams(epsilon=0.3)
    a, b = QTable(1, 5), QTable(1, 5, [[0, 0, 0, 9, 0]])
    ra, rb = np.random.default_rng(7), np.random.default_rng(7)
    for t in range(200):
        select_action_epsilon(a, 0, params, t, 1000, ra)
        select_action_epsilon(b, 0, params, t, 1000, rb)
    assert ra.random() == rb.random()


# -- value-iteration oracle ----------------------------------------------------

def test_vi_single_state_single_action():
    v, pi = value_iteration_oracle(ToyMDP([[[1.0]]], [[1.0]], 0.9))
    assert v[0] == pytest.approx(10.0, abs=1e-8)
    assert pi.tolist() == [0]


def test_vi_two_state_chain():
    # state 0: action 1 moves to state 1 with reward 0; state 1: action 1 stays with reward 1
    T = np.zeros((2, 2, 2))
    T[0, 0, 0] = T[0, 1, 1] = 1.0
    T[1, 0, 0] = T[1, 1, 1] = 1.0
    R = np.array([[0.0, 0.0], [0.0, 1.0]])
    v, pi = value_iteration_oracle(ToyMDP(T, R, 0.5))
    assert v == pytest.approx([1.0, 2.0], abs=1e-8)
    assert pi.tolist() == [1, 1]


def test_vi_myopic_when_gamma_zero():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng, 5, 3, gamma=0.0)
    v, pi = value_iteration_oracle(mdp)
    assert np.allclose(v, mdp.rewards.max(axis=1))
    assert np.array_equal(pi, mdp.rewards.argmax(axis=1))


def test_vi_fixed_point_by_linear_solve():
    """V* of the optimal policy equals the solution of (I - gamma P_pi) V = R_pi."""
    mdp = random_mdp(np.random.default_rng(5))
    v, pi = value_iteration_oracle(mdp)
    idx = np.arange(mdp.n_states)
    P_pi = mdp.transitions[idx, pi]
    R_pi = mdp.rewards[idx, pi]
    exact = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, R_pi)
    assert np.allclose(v, exact, atol=1e-8)


def test_toy_mdp_validation():
    with pytest.raises(ValueError):
        ToyMDP([[[0.5, 0.4]], [[1.0, 0.0]]], [[0.0], [0.0]], 0.9)
    with pytest.raises(ValueError):
        value_iteration_oracle(ToyMDP([[[1.0]]], [[1.0]], 1.0))


def test_q_learning_recovers_a_known_policy():
    mdp = random_mdp(np.random.default_rng(0))
    v_star, pi_star = value_iteration_oracle(mdp)
    table = q_learning_on_mdp(mdp, 100_000, 0.2, np.random.default_rng(0))
    assert np.array_equal(table.values.argmax(axis=1), pi_star)
    assert np.max(np.abs(table.values.max(axis=1) - v_star)) <= 0.05 * np.max(np.abs(v_star))


# -- properties ----------------------------------------------------------------

finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(bound=st.floats(0.1, 5.0), seed=st.integers(0, 10_000))
def test_q_values_stay_within_reward_bound(bound, seed):
    rng = np.random.default_rng(seed)
    t = QTable(6, 5)
    for _ in range(500):
        q_update(t, int(rng.integers(6)), int(rng.integers(5)), float(rng.uniform(-bound, bound)),
                 int(rng.integers(6)), P)
    assert np.all(np.abs(t.values) <= bound / (1 - P.gamma) + 1e-9)


@settings(max_examples=100, deadline=None)
@given(row=arrays(np.float64, st.integers(1, 19), elements=finite), shift=finite,
       scale=st.floats(0.01, 100))
def test_argmax_invariant_to_positive_affine_maps(row, shift, scale):
    assert greedy(row * scale + shift) == greedy(row) or np.isclose(
        (row * scale + shift)[greedy(row * scale + shift)], (row * scale + shift)[greedy(row)])


@settings(max_examples=100, deadline=None)
@given(row=st.lists(st.integers(-5, 5), min_size=1, max_size=19))
def test_greedy_returns_lowest_maximizer(row):
    a = greedy(row)
    assert row[a] == max(row)
    assert all(row[i] < row[a] for i in range(a))


@settings(max_examples=30, deadline=None)
@given(values=arrays(np.float64, (6, 19), elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_table_text_round_trip(values):
    t = QTable(6, 19, values)
    assert QTable.loads(t.dumps()) == t
