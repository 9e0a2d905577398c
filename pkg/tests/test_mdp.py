import json
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import one_state_mdp, two_state_mdp, uniform
from greedygq.errors import DegenerateChainError
from greedygq.mdp import (
    FROZEN_LAKE_MAP,
    RIGHT,
    BehaviorPolicy,
    IidSampler,
    MarkovSampler,
    ObservationBatch,
    TabularMdp,
    frozen_lake,
    generate_garnet,
    iid_sampler,
    make_sampler,
    markov_sampler,
    mixing_probe,
    state_chain,
    state_distribution,
    stationary_distribution,
    uniform_behavior,
)


# -- TabularMdp ---------------------------------------------------------------


def test_rejects_rows_not_summing_to_one():
    P = np.array([[[0.5, 0.4]], [[0.0, 1.0]]])
    with pytest.raises(ValueError, match="sum to 1"):
        TabularMdp(P, np.zeros_like(P), 0.9)


def test_rejects_negative_probability():
    P = np.array([[[1.5, -0.5]], [[0.0, 1.0]]])
    with pytest.raises(ValueError, match="non-negative"):
        TabularMdp(P, np.zeros_like(P), 0.9)


@pytest.mark.parametrize("gamma", [-0.1, 1.0, 1.5])
def test_rejects_bad_discount(gamma):
    with pytest.raises(ValueError, match="discount"):
        TabularMdp(np.ones((1, 1, 1)), np.zeros((1, 1, 1)), gamma)


def test_rejects_non_finite_reward():
    with pytest.raises(ValueError, match="finite"):
        TabularMdp(np.ones((1, 1, 1)), np.full((1, 1, 1), np.inf), 0.5)


def test_r_max_and_immutability():
    mdp = two_state_mdp()
    assert mdp.r_max == 1.0
    with pytest.raises(ValueError):
        mdp.transition[0, 0, 0] = 0.3


def test_json_round_trip_with_features(garnet2):
    mdp, _, feats = garnet2
    doc = json.loads(mdp.to_json(features=feats))
    assert {"n_states", "n_actions", "gamma", "transitions", "rewards", "layout_tag"} <= set(doc)
    back, fb = TabularMdp.from_json(mdp.to_json(features=feats))
    np.testing.assert_array_equal(back.transition, mdp.transition)
    np.testing.assert_array_equal(back.reward, mdp.reward)
    np.testing.assert_array_equal(fb.table, feats.table)
    assert back.discount == mdp.discount and back.layout_tag == mdp.layout_tag


def test_json_without_features():
    mdp = two_state_mdp()
    back, feats = TabularMdp.from_json(mdp.to_json())
    assert feats is None and back.n_states == 2


def test_json_declared_size_mismatch():
    doc = two_state_mdp().to_dict()
    doc["n_states"] = 3
    with pytest.raises(ValueError, match="disagree"):
        TabularMdp.from_dict(doc)


# -- Garnet -------------------------------------------------------------------


def test_garnet_support_size_paper_instance(garnet1):
    mdp, _, _ = garnet1
    assert np.all((mdp.transition > 0).sum(axis=2) == 10)


def test_garnet_g8_10_5_4(garnet2):
    mdp, _, feats = garnet2
    assert mdp.transition.shape == (8, 10, 8)
    assert np.all((mdp.transition > 0).sum(axis=2) == 5)
    np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)
    assert feats.table.shape == (4, 80)


def test_garnet_determinism():
    a = generate_garnet(6, 3, 2, 3, seed=11)
    b = generate_garnet(6, 3, 2, 3, seed=11)
    c = generate_garnet(6, 3, 2, 3, seed=12)
    np.testing.assert_array_equal(a[0].transition, b[0].transition)
    np.testing.assert_array_equal(a[0].reward, b[0].reward)
    np.testing.assert_array_equal(a[1].table, b[1].table)
    assert not np.array_equal(a[0].transition, c[0].transition)


def test_garnet_rewards_are_state_action_matrix(garnet1):
    mdp, _, _ = garnet1
    r = mdp.reward
    np.testing.assert_array_equal(r, np.repeat(r[:, :, :1], r.shape[2], axis=2))
    assert r.min() >= 0 and r.max() < 1


def test_garnet_branching_out_of_range():
    with pytest.raises(ValueError, match="branching"):
        generate_garnet(4, 2, 5, 2, seed=0)
    with pytest.raises(ValueError, match="branching"):
        generate_garnet(4, 2, 0, 2, seed=0)


def test_garnet_exact_features_warns():
    with pytest.warns(UserWarning, match="exact"):
        generate_garnet(2, 2, 1, 4, seed=0)


@pytest.mark.filterwarnings("ignore:n_features")
@settings(max_examples=40, deadline=None)
@given(S=st.integers(1, 7), A=st.integers(1, 4), data=st.data(), seed=st.integers(0, 2**63))
def test_garnet_invariants_property(S, A, data, seed):
    b = data.draw(st.integers(1, S))
    mdp, feats = generate_garnet(S, A, b, 1, seed)
    assert np.all((mdp.transition > 0).sum(axis=2) == b)
    assert np.abs(mdp.transition.sum(axis=2) - 1).max() <= 1e-12
    assert np.all(np.abs(mdp.reward) <= mdp.r_max)


# -- Frozen Lake --------------------------------------------------------------


def test_lake_right_from_start_deterministic():
    mdp = frozen_lake(False)
    assert mdp.transition[0, RIGHT, 1] == 1.0
    assert mdp.n_states == 16 and mdp.n_actions == 4


def test_lake_slippery_support():
    mdp = frozen_lake(True)
    assert np.all((mdp.transition > 0).sum(axis=2) <= 3)
    np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)


def test_lake_holes_and_goal_absorbing():
    mdp = frozen_lake()
    flat = "".join(FROZEN_LAKE_MAP)
    absorbing = [i for i, c in enumerate(flat) if c in "HG"]
    assert mdp.terminal_states == tuple(absorbing)
    cont = mdp.continualized
    for s in absorbing:
        assert np.all(cont.transition[s, :, 0] == 1.0)


def test_lake_shortest_path_collects_reward_one():
    """Breadth-first search over the deterministic grid; the reward along it sums to 1."""
    mdp = frozen_lake(False)
    goal = "".join(FROZEN_LAKE_MAP).index("G")
    terminal = set(mdp.terminal_states)
    prev = {0: None}
    queue = deque([0])
    while queue:
        s = queue.popleft()
        if s == goal:
            break
        if s in terminal:
            continue
        for a in range(4):
            s2 = int(np.argmax(mdp.transition[s, a]))
            if s2 not in prev:
                prev[s2] = (s, a)
                queue.append(s2)
    assert goal in prev
    total, s, steps = 0.0, goal, 0
    while prev[s] is not None:
        p, a = prev[s]
        total += mdp.reward[p, a, s]
        s, steps = p, steps + 1
    assert total == 1.0
    assert steps == 6


def test_lake_only_goal_entry_pays():
    mdp = frozen_lake()
    goal = "".join(FROZEN_LAKE_MAP).index("G")
    s, a, s2 = np.nonzero(mdp.reward)
    assert set(s2.tolist()) == {goal}
    # the cell above the goal is a hole, so the only entry is from the left
    assert set(zip(s.tolist(), a.tolist())) == {(14, RIGHT)}


# -- behavior policy and stationary distribution ------------------------------


@pytest.mark.parametrize("A", [1, 2, 4, 7])
def test_uniform_behavior(A):
    mdp = TabularMdp(np.ones((1, A, 1)), np.zeros((1, A, 1)), 0.5)
    pi = uniform_behavior(mdp).probs
    np.testing.assert_allclose(pi, 1.0 / A)
    np.testing.assert_allclose(pi.sum(axis=1), 1.0, atol=1e-12)


def test_behavior_policy_validation():
    with pytest.raises(ValueError):
        BehaviorPolicy(np.array([[0.5, 0.6]]))
    with pytest.raises(ValueError):
        BehaviorPolicy(np.array([[1.5, -0.5]]))


def test_symmetric_two_state_chain():
    P = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    mdp = TabularMdp(P, np.zeros_like(P), 0.9)
    np.testing.assert_allclose(state_distribution(mdp, uniform(mdp)), [0.5, 0.5], atol=1e-12)


def test_one_state_mu_equals_policy():
    mdp = one_state_mdp(n_actions=3)
    pol = BehaviorPolicy(np.array([[0.2, 0.3, 0.5]]))
    np.testing.assert_allclose(stationary_distribution(mdp, pol), [[0.2, 0.3, 0.5]], atol=1e-12)


def test_stationarity_residual(garnet1, garnet2, lake):
    for mdp, pol, _ in (garnet1, garnet2, lake):
        nu = state_distribution(mdp, pol)
        P = state_chain(mdp, pol)
        assert np.abs(nu @ P - nu).max() <= 1e-9
        mu = stationary_distribution(mdp, pol)
        assert mu.min() >= 0 and abs(mu.sum() - 1) <= 1e-10


def test_mu_matches_long_simulation(garnet1):
    """Independent trajectory simulation with numpy's default generator."""
    mdp, pol, _ = garnet1
    rng = np.random.default_rng(123)
    S, A = mdp.n_states, mdp.n_actions
    n = 1_000_000
    counts = np.zeros((S, A))
    P = mdp.transition
    s = 0
    ua = rng.integers(0, A, size=n)
    u = rng.random(n)
    cum = np.cumsum(P, axis=2)
    for t in range(n):
        a = ua[t]
        counts[s, a] += 1
        s = min(int(np.searchsorted(cum[s, a], u[t], side="right")), S - 1)
    emp = counts / n
    assert np.abs(emp - stationary_distribution(mdp, pol)).sum() <= 0.01


def test_reducible_chain_names_states():
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = 1.0
    P[1, 0, 0] = 1.0
    P[2, 0, 2] = 0.5
    P[2, 0, 0] = 0.5
    mdp = TabularMdp(P, np.ones_like(P), 0.9)
    with pytest.raises(DegenerateChainError) as info:
        state_distribution(mdp, uniform(mdp))
    assert info.value.states == (2,)
    assert "[2]" in str(info.value)


# -- mixing -------------------------------------------------------------------


def test_mixing_two_state_closed_form():
    """Eigenvalue 2*stay-1 = 0.8, so d(t) = 0.5 * 0.8**t from a point mass."""
    mdp = two_state_mdp(stay=0.9)
    d = mixing_probe(mdp, uniform(mdp), 30)
    t = np.arange(31)
    np.testing.assert_allclose(d, 0.5 * 0.8**t, rtol=1e-10, atol=1e-14)


def test_mixing_d0_is_tv_bound(garnet1):
    mdp, pol, _ = garnet1
    d = mixing_probe(mdp, pol, 5)
    assert 0 <= d[0] <= 1
    assert np.all(d >= 0)


def test_mixing_garnet_geometric_decay(garnet1):
    mdp, pol, _ = garnet1
    d = mixing_probe(mdp, pol, 50)
    t = np.arange(1, 51)
    keep = d[1:] > 1e-13
    slope = np.polyfit(t[keep], np.log(d[1:][keep]), 1)[0]
    assert slope < 0


def test_mixing_eventually_decreasing(garnet2, lake):
    for mdp, pol, _ in (garnet2, lake):
        d = mixing_probe(mdp, pol, 60)
        start = int(np.argmax(np.diff(d) < 0))
        assert np.all(np.diff(d[start:]) <= 1e-12)


# -- samplers -----------------------------------------------------------------


def test_markov_constant_stream():
    mdp = one_state_mdp(reward=2.5)
    batch = markov_sampler(mdp, uniform(mdp), seed=3).draw(20)
    assert set(batch.s) == {0} and set(batch.a) == {0} and set(batch.s_next) == {0}
    assert np.all(batch.r == 2.5)


def test_samplers_one_state_agree_in_law():
    mdp = one_state_mdp(n_actions=3)
    pol = BehaviorPolicy(np.array([[0.2, 0.3, 0.5]]))
    n = 60_000
    fi = np.bincount(iid_sampler(mdp, pol, 1).draw(n).a, minlength=3) / n
    fm = np.bincount(markov_sampler(mdp, pol, 1).draw(n).a, minlength=3) / n
    np.testing.assert_allclose(fi, [0.2, 0.3, 0.5], atol=0.01)
    np.testing.assert_allclose(fm, [0.2, 0.3, 0.5], atol=0.01)


def test_markov_state_frequency(garnet1):
    mdp, pol, _ = garnet1
    batch = markov_sampler(mdp, pol, seed=5).draw(100_000)
    freq = np.bincount(batch.s, minlength=mdp.n_states) / len(batch)
    assert np.abs(freq - state_distribution(mdp, pol)).sum() <= 0.02
    np.testing.assert_array_equal(batch.s[1:], batch.s_next[:-1])


def test_iid_pair_frequency(garnet1):
    mdp, pol, _ = garnet1
    batch = iid_sampler(mdp, pol, seed=5).draw(100_000)
    freq = np.bincount(batch.s * mdp.n_actions + batch.a, minlength=50) / len(batch)
    assert np.abs(freq - stationary_distribution(mdp, pol).ravel()).sum() <= 0.02


def test_iid_autocorrelation(garnet1):
    mdp, pol, _ = garnet1
    x = iid_sampler(mdp, pol, seed=9).draw(50_000).s.astype(float)
    x -= x.mean()
    rho = (x[1:] @ x[:-1]) / (x @ x)
    assert abs(rho) < 3 / np.sqrt(len(x))


def test_next_state_frequencies_match_transition(garnet2):
    mdp, pol, _ = garnet2
    b = iid_sampler(mdp, pol, seed=2).draw(200_000)
    sel = (b.s == 3) & (b.a == 4)
    freq = np.bincount(b.s_next[sel], minlength=8) / sel.sum()
    np.testing.assert_allclose(freq, mdp.transition[3, 4], atol=0.05)


@pytest.mark.parametrize("kind", ["iid", "markov"])
def test_sampler_determinism_and_chunking(garnet1, kind):
    mdp, pol, _ = garnet1
    a = make_sampler(kind, mdp, pol, 42).draw(1000)
    s2 = make_sampler(kind, mdp, pol, 42)
    parts = [s2.draw(n) for n in (1, 10, 300, 689)]
    assert s2.consumed == 1000
    b = ObservationBatch.of([o for p in parts for o in p])
    for f in ("s", "a", "r", "s_next"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_sampler_seeds_differ(garnet1):
    mdp, pol, _ = garnet1
    a = IidSampler(mdp, pol, 1).draw(50)
    b = IidSampler(mdp, pol, 2).draw(50)
    assert not np.array_equal(a.s, b.s)


def test_markov_fixed_start(garnet1):
    mdp, pol, _ = garnet1
    assert MarkovSampler(mdp, pol, 0, start_state=7).draw(1).s[0] == 7


def test_lake_samplers_restart(lake):
    mdp, pol, _ = lake
    b = markov_sampler(mdp, pol, seed=0).draw(5000)
    terminal = set(mdp.terminal_states)
    for s, s2 in zip(b.s, b.s_next):
        if s in terminal:
            assert s2 == 0


def test_unknown_sampler_kind(garnet1):
    mdp, pol, _ = garnet1
    with pytest.raises(ValueError, match="unknown sampler"):
        make_sampler("bogus", mdp, pol, 0)


def test_observation_ids_in_range(garnet2):
    mdp, pol, _ = garnet2
    b = iid_sampler(mdp, pol, 0).draw(5000)
    assert b.s.max() < 8 and b.a.max() < 10 and b.s_next.max() < 8 and b.s.min() >= 0
    o = b[0]
    assert o.s == b.s[0] and o.s_next == b.s_next[0]
