from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lbmrl.env import (ParameterError, PolicyTable, build_chain_env, evaluate_policy,
                       exact_optimal_values, make_rng)
from lbmrl.meta import epoch_schedule, run_meta, run_single_epoch, stability_constant


def schedule_by_hand(K):
    # largest i with 4**i <= 3K + 1, by integer search
    last = 0
    while 4 ** (last + 1) <= 3 * K + 1:
        last += 1
    out, left = [], K
    for i in range(last + 1):
        n = min(4 ** i, left)
        left -= n
        out.append((2.0 ** -i, 4 ** i, n))
    return out


@pytest.mark.parametrize("K,expected_lengths", [
    (1, [1, 0]),               # log2 sqrt(4) = 1, but only epoch 0 runs
    (21, [1, 4, 16, 0]),       # 1 + 4 + 16 = 21 exactly, epoch 3 gets nothing
    (100, [1, 4, 16, 64, 15]),
])
def test_schedule_hand_cases(K, expected_lengths):
    sched = epoch_schedule(K)
    assert [n for _, _, n in sched] == expected_lengths
    assert [nom for _, nom, _ in sched] == [4 ** i for i in range(len(sched))]
    assert [z for z, _, _ in sched] == [2.0 ** -i for i in range(len(sched))]


@given(st.integers(1, 200_000))
def test_schedule_matches_integer_search_and_consumes_budget(K):
    sched = epoch_schedule(K)
    assert sched == schedule_by_hand(K)
    assert sum(n for _, _, n in sched) == K


def test_schedule_rejects_empty_budget():
    with pytest.raises(ParameterError):
        epoch_schedule(0)


def test_stability_constant_formula():
    d, H, delta, K, L = 12, 4, 0.05, 4096, 1.0
    m = math.ceil(math.log2(math.sqrt(3 * K + 1)))
    expected = 3 * math.sqrt(8 * H ** 2 * math.log(2 * m / delta)) + 6 * L * d * H ** 2
    assert stability_constant(d, H, delta, K) == pytest.approx(expected, rel=1e-14)
    assert stability_constant(d, H, delta, K, L_const=0.0) == pytest.approx(
        3 * math.sqrt(8 * H ** 2 * math.log(2 * m / delta)))


class FixedAgent:
    """Always plays the same policy; reports a fixed optimistic value."""

    def __init__(self, pi):
        self.pi = PolicyTable(pi)
        self.seen = 0

    def plan(self):
        return self.pi, 0.0

    def observe(self, log):
        self.seen += 1


def test_single_epoch_mean_return_and_mixture():
    mdp = build_chain_env(3, 2, 4, slip=0.0)  # deterministic, so returns are exact
    agent = FixedAgent(np.ones((4, 3), dtype=np.int64))
    vbar, mix, recs = run_single_epoch(agent, 7, mdp, make_rng(0))
    assert agent.seen == 7 and len(mix.members) == 7 and len(recs) == 7
    assert vbar == pytest.approx(evaluate_policy(mdp, agent.pi))


def test_meta_consumes_exactly_K_and_builds_fresh_agents():
    mdp = build_chain_env(3, 2, 3, slip=0.1)
    made = []

    def factory(zeta, K_i):
        made.append((zeta, K_i))
        return FixedAgent(np.ones((3, 3), dtype=np.int64))

    state, recs = run_meta(factory, mdp, 100, C=1e9, rng=make_rng(0))
    assert len(recs) == 100 and state.consumed == 100
    assert [r.k for r in recs] == list(range(1, 101))
    assert made == [(1.0, 1), (0.5, 4), (0.25, 16), (0.125, 64), (0.0625, 256)]
    assert state.violation_epoch is None
    # the last epoch is 15 of 256 nominal episodes, so it is not compared
    assert [e.compared for e in state.epochs] == [False, True, True, True, False]


def test_violation_commits_to_previous_epoch():
    mdp = build_chain_env(3, 2, 3, slip=0.0)
    good = np.ones((3, 3), dtype=np.int64)
    bad = np.zeros((3, 3), dtype=np.int64)

    def factory(zeta, K_i):
        return FixedAgent(good if zeta > 0.3 else bad)

    state, recs = run_meta(factory, mdp, 200, C=1e-6, rng=make_rng(0))
    assert state.violation_epoch == 2 and state.committed == 1
    v_good = evaluate_policy(mdp, PolicyTable(good))
    assert len(recs) == 200
    assert all(r.policy_value == pytest.approx(v_good) for r in recs if r.epoch == -1)
    assert sum(1 for r in recs if r.epoch == -1) == 200 - 1 - 4 - 16


def test_no_violation_when_policies_agree():
    mdp = build_chain_env(3, 2, 3, slip=0.0)
    state, _ = run_meta(lambda z, n: FixedAgent(np.ones((3, 3), dtype=np.int64)), mdp, 300,
                        C=1e-9, rng=make_rng(0))
    assert state.violation_epoch is None


def test_zero_threshold_with_different_stubs_commits_first_epoch():
    mdp = build_chain_env(3, 2, 3, slip=0.0)
    good = np.ones((3, 3), dtype=np.int64)
    bad = np.zeros((3, 3), dtype=np.int64)
    state, recs = run_meta(lambda z, n: FixedAgent(good if z == 1.0 else bad), mdp, 50,
                           C=0.0, rng=make_rng(0))
    assert state.violation_epoch == 1 and state.committed == 0
    assert len(recs) == 50


def test_optimal_stub_never_violates_with_formula_constant():
    mdp = build_chain_env(4, 2, 5, slip=0.3)
    pistar = exact_optimal_values(mdp)[2]
    C = stability_constant(mdp.S * mdp.A, mdp.H, 0.05, 1000)
    state, recs = run_meta(lambda z, n: FixedAgent(pistar.pi), mdp, 1000, C=C, rng=make_rng(1))
    assert state.violation_epoch is None
    vstar = evaluate_policy(mdp, pistar)
    assert all(r.policy_value == pytest.approx(vstar) for r in recs)


def test_epoch_estimate_concentrates_on_exact_value():
    mdp = build_chain_env(4, 2, 5, slip=0.3)
    agent = FixedAgent(np.ones((5, 4), dtype=np.int64))
    n, H, delta = 10_000, mdp.H, 0.05
    vbar, _, _ = run_single_epoch(agent, n, mdp, make_rng(2))
    bound = np.sqrt(8 * H ** 2 * np.log(2 / delta) / n)
    assert abs(vbar - evaluate_policy(mdp, agent.pi)) <= bound


def test_single_episode_epoch_has_one_member():
    mdp = build_chain_env(3, 2, 2)
    _, mix, _ = run_single_epoch(FixedAgent(np.ones((2, 3), dtype=np.int64)), 1, mdp,
                                 make_rng(0))
    assert len(mix.members) == 1
    with pytest.raises(ParameterError):
        run_single_epoch(FixedAgent(np.ones((2, 3), dtype=np.int64)), 0, mdp, make_rng(0))


def test_meta_is_replay_deterministic():
    mdp = build_chain_env(3, 2, 3, slip=0.2)
    runs = [run_meta(lambda z, n: FixedAgent(np.ones((3, 3), dtype=np.int64)), mdp, 60,
                     C=1.0, rng=make_rng(5))[1] for _ in range(2)]
    assert [r.ret for r in runs[0]] == [r.ret for r in runs[1]]
