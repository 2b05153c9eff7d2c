from __future__ import annotations

import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from lbmrl.env import (ParameterError, PolicyTable, build_linear_env, evaluate_policy,
                       exact_optimal_values, make_rng, sample_episode)
from lbmrl.general_agent import (FiniteFunctionClass, GeneralLsviAgent, GeneralLsviConfig,
                                 RegressionData, backward_pass_general, build_function_class,
                                 confidence_region, empirical_minimizer, radius_beta_general,
                                 sensitivities, sensitivity_sample, squared_losses, width_bonus)
from oracles import random_mdp


def point_losses(tables, points):
    return np.array([sum((t[s, a] - q) ** 2 for s, a, q in points) for t in tables])


@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(0, 40))
def test_minimizer_matches_brute_force(seed, M, n):
    rng = make_rng(seed)
    tables = rng.integers(0, 4, size=(M, 3, 2)).astype(float)  # integer grid makes ties common
    points = [(int(rng.integers(3)), int(rng.integers(2)), float(rng.integers(0, 4)))
              for _ in range(n)]
    F = FiniteFunctionClass(tables)
    data = RegressionData.from_points(3, 2, points)
    brute = point_losses(tables, points)
    np.testing.assert_allclose(squared_losses(tables, data), brute, atol=1e-9)
    assert empirical_minimizer(F, data) == int(np.flatnonzero(brute == brute.min())[0])


def test_minimizer_ties_go_to_lowest_id():
    tables = np.zeros((3, 2, 2))
    F = FiniteFunctionClass(tables)
    assert empirical_minimizer(F, RegressionData.from_points(2, 2, [(0, 0, 1.0)])) == 0


def radius_mp(k, H, zeta, T, delta, M, log_w, c):
    mpmath.mp.dps = 40
    k, H, zeta, T, delta, M, log_w, c = map(mpmath.mpf, (k, H, zeta, T, delta, M, log_w, c))
    return c * mpmath.sqrt(k * H * zeta ** 2
                           + H ** 2 * (mpmath.log(4 * T ** 2 / delta) + 2 * mpmath.log(M)
                                       + log_w + 1))


@given(st.integers(1, 10_000), st.integers(1, 10), st.floats(0, 1), st.floats(0.001, 0.5),
       st.integers(1, 500), st.floats(0, 20), st.floats(0.01, 5))
def test_radius_matches_high_precision(k, H, zeta, delta, M, log_w, c):
    cfg = GeneralLsviConfig(K=max(k, 10), H=H, zeta=zeta, delta=delta, log_w=log_w, c_prime=c)
    expected = radius_mp(k, H, zeta, cfg.cover_T, delta, M, log_w, c)
    assert radius_beta_general(k, cfg, M) == pytest.approx(float(expected), rel=1e-12)


def test_radius_defaults_cover_to_KH():
    cfg = GeneralLsviConfig(K=7, H=3)
    assert cfg.cover_T == 21


def test_radius_rejects_bad_inputs():
    cfg = GeneralLsviConfig(K=7, H=3)
    with pytest.raises(ParameterError):
        radius_beta_general(0, cfg, 3)
    with pytest.raises(ParameterError):
        radius_beta_general(1, cfg, 0)


@given(st.integers(0, 10_000), st.integers(1, 7), st.floats(0, 6))
def test_width_matches_pairwise_scan(seed, M, radius):
    rng = make_rng(seed)
    tables = rng.random((M, 3, 2)) * 3
    weights = rng.integers(0, 4, size=(3, 2)).astype(float)
    F = FiniteFunctionClass(tables)
    center = int(rng.integers(M))
    region = confidence_region(F, center, radius, weights)
    inside = [m for m in range(M)
              if sum(weights[s, a] * (tables[m, s, a] - tables[center, s, a]) ** 2
                     for s in range(3) for a in range(2)) <= radius ** 2]
    assert center in region.member_ids
    assert set(region.member_ids.tolist()) == set(inside) | {center}
    width = width_bonus(region, F)
    for s, a in itertools.product(range(3), range(2)):
        pair = max(abs(tables[i, s, a] - tables[j, s, a])
                   for i in region.member_ids for j in region.member_ids)
        assert width[s, a] == pytest.approx(pair)
        assert width_bonus(region, F, s, a) == pytest.approx(pair)


def test_width_is_zero_for_singleton_region():
    F = FiniteFunctionClass(np.random.default_rng(0).random((4, 2, 2)))
    region = confidence_region(F, 1, 0.0, np.full((2, 2), 100.0))
    assert np.all(width_bonus(region, F) == 0)


def test_sensitivity_sampling_off_is_identity():
    F = FiniteFunctionClass(np.random.default_rng(0).random((4, 2, 2)))
    w = np.arange(4.0).reshape(2, 2)
    c, z = sensitivity_sample(F, 2, w, 0.05, subsample=False)
    assert c == 2 and z is w


def test_sensitivity_sampling_preserves_norms_within_half():
    rng0 = make_rng(0)
    M, S, A = 8, 10, 2
    F = FiniteFunctionClass(rng0.random((M, S, A)) * 2)
    w = np.bincount(rng0.integers(0, S * A, size=200), minlength=S * A).reshape(S, A)
    w = w.astype(float)
    tables = F.members
    exact = np.array([[((tables[i] - tables[j]) ** 2 * w).sum() for j in range(M)]
                      for i in range(M)])
    off = ~np.eye(M, dtype=bool)
    kept_fraction = []
    for seed in range(20):
        _, z = sensitivity_sample(F, 0, w, 0.05, subsample=True, rng=make_rng(seed))
        approx = np.array([[((tables[i] - tables[j]) ** 2 * z).sum() for j in range(M)]
                           for i in range(M)])
        ratio = approx[off] / exact[off]
        assert np.all((ratio >= 0.5) & (ratio <= 1.5))
        kept_fraction.append((z > 0).sum() / (w > 0).sum())
    assert min(kept_fraction) > 0


def test_sensitivities_bounded_by_one_per_point():
    F = FiniteFunctionClass(np.random.default_rng(1).random((4, 2, 2)))
    w = np.ones((2, 2))
    sens = sensitivities(F, w)
    assert np.all(sens <= 1 + 1e-12) and np.all(sens >= 0)


def test_step_indexed_class_shape_checks():
    F = FiniteFunctionClass(np.zeros((2, 3, 2, 2)))
    assert not F.stationary and F.at_step(1).shape == (2, 2, 2)
    with pytest.raises(ParameterError):
        GeneralLsviAgent(F, GeneralLsviConfig(K=5, H=4), 2, 2)
    with pytest.raises(ParameterError):
        FiniteFunctionClass(np.full((1, 2, 2), 10.0)).check_range(3)


def test_singleton_class_with_true_q_has_zero_regret():
    mdp = random_mdp(make_rng(0), 4, 2, 3)
    _, Qstar, _ = exact_optimal_values(mdp)
    vstar = exact_optimal_values(mdp)[0][0, 0]
    F = FiniteFunctionClass(Qstar[None])
    agent = GeneralLsviAgent(F, GeneralLsviConfig(K=30, H=3), 4, 2)
    rng = make_rng(1)
    for _ in range(30):
        pol, _ = agent.plan()
        assert evaluate_policy(mdp, pol) == vstar
        agent.observe(sample_episode(mdp, pol, rng))


def test_minimizer_finds_truth_with_enough_data():
    mdp, _ = build_linear_env(6, 4, 2, 3, seed=0)
    F = build_function_class(mdp, n_perturbed=6, scale=0.5, seed=0)
    rng = make_rng(0)
    logs = [sample_episode(mdp, PolicyTable(rng.integers(0, 2, size=(3, 4))), rng)
            for _ in range(300)]
    cfg = GeneralLsviConfig(K=300, H=3, c_prime=0.05)
    Q, pol, V = backward_pass_general(301, logs, F, cfg)
    assert evaluate_policy(mdp, pol) == pytest.approx(exact_optimal_values(mdp)[0][0, 0])
    assert Q.min() >= 0 and Q.max() <= 3


def test_general_agent_regret_is_sublinear():
    mdp, _ = build_linear_env(6, 4, 2, 3, seed=0)
    F = build_function_class(mdp, n_perturbed=10, scale=0.5, seed=1)
    vstar = exact_optimal_values(mdp)[0][0, 0]
    agent = GeneralLsviAgent(F, GeneralLsviConfig(K=400, H=3, c_prime=0.05), 4, 2)
    rng = make_rng(0)
    regret = []
    for _ in range(400):
        pol, _ = agent.plan()
        regret.append(vstar - evaluate_policy(mdp, pol))
        agent.observe(sample_episode(mdp, pol, rng))
    regret = np.array(regret)
    assert regret[300:].mean() <= 0.5 * regret[:100].mean() + 1e-12
