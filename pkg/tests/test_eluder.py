from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lbmrl.eluder import (MAX_EXHAUSTIVE, EluderQuery, cover_size, eluder_dimension,
                          is_independent, lift_model_class, minimal_cover_size)
from lbmrl.env import ParameterError, make_rng
from oracles import eluder_by_subsets


def test_singleton_class_has_dimension_zero():
    assert eluder_dimension(EluderQuery(np.array([[0.3, 0.7, 1.0]]), 0.1)) == 0


def test_binary_class_on_one_point():
    assert eluder_dimension(EluderQuery(np.array([[0.0], [1.0]]), 0.5)) == 1


def test_gap_at_or_below_epsilon_is_not_independent():
    assert eluder_dimension(EluderQuery(np.array([[0.0], [0.5]]), 0.5)) == 0


def test_indicator_class_dimension_equals_domain_size():
    # {0} plus every point indicator: each new point is independent of the rest
    n = 5
    values = np.vstack([np.zeros(n), np.eye(n)])
    assert eluder_dimension(EluderQuery(values, 0.5)) == n


def test_linear_class_in_two_dimensions():
    # f_theta(x) = <theta, x> over a grid of thetas; dimension is at least d
    thetas = np.array([[a, b] for a in (-1, 0, 1) for b in (-1, 0, 1)], dtype=float)
    xs = np.array([[1, 0], [0, 1], [1, 1]], dtype=float)
    dim = eluder_dimension(EluderQuery(thetas @ xs.T, 0.5))
    assert dim >= 2
    assert dim == eluder_by_subsets(thetas @ xs.T, 0.5)


def test_is_independent_definition():
    values = np.array([[0.0, 0.0], [0.2, 1.0]])
    assert is_independent(1, [], values, 0.5)
    assert is_independent(1, [0], values, 0.5)       # ||.||_Z = 0.2 <= 0.5
    assert not is_independent(0, [], values, 0.5)    # gap 0.2 <= 0.5
    assert not is_independent(1, [0], values, 0.1)  # ||.||_Z = 0.2 > 0.1


@pytest.mark.parametrize("seed", range(20))
def test_exhaustive_matches_subset_oracle(seed):
    rng = make_rng(1000 + seed)
    M = int(rng.integers(2, 7))
    n = int(rng.integers(1, 9))
    values = rng.integers(0, 4, size=(M, n)) * 0.5
    eps = float(rng.choice([0.1, 0.25, 0.5, 0.75, 1.0]))
    assert eluder_dimension(EluderQuery(values, eps)) == eluder_by_subsets(values, eps)


@given(st.integers(0, 10_000), st.floats(0.05, 1.5))
def test_exhaustive_matches_oracle_on_continuous_values(seed, eps):
    rng = make_rng(seed)
    values = rng.random((int(rng.integers(2, 5)), int(rng.integers(1, 6)))) * 2
    assert eluder_dimension(EluderQuery(values, eps)) == eluder_by_subsets(values, eps)


@given(st.integers(0, 10_000))
def test_dimension_is_monotone(seed):
    rng = make_rng(seed)
    values = rng.integers(0, 3, size=(4, 5)).astype(float)
    dims = [eluder_dimension(EluderQuery(values, e)) for e in (0.25, 0.75, 1.5, 2.5)]
    assert all(a >= b for a, b in zip(dims, dims[1:]))
    # adding a member never decreases the dimension
    more = np.vstack([values, rng.integers(0, 3, size=(1, 5))])
    assert eluder_dimension(EluderQuery(more, 0.75)) >= dims[1]
    # restricting the domain never increases it
    assert eluder_dimension(EluderQuery(values, 0.75, domain=[0, 2, 4])) <= dims[1]


@given(st.integers(0, 10_000))
def test_greedy_is_a_lower_bound(seed):
    rng = make_rng(seed)
    values = rng.integers(0, 3, size=(4, 6)).astype(float)
    exact = eluder_dimension(EluderQuery(values, 0.5))
    lb, label = eluder_dimension(EluderQuery(values, 0.5, mode="greedy"), restarts=8)
    assert label == "lower_bound" and lb <= exact


def test_exhaustive_refuses_large_domains():
    with pytest.raises(ParameterError):
        eluder_dimension(EluderQuery(np.zeros((2, MAX_EXHAUSTIVE + 1)), 0.1))
    lb, _ = eluder_dimension(EluderQuery(np.eye(MAX_EXHAUSTIVE + 1), 0.5, mode="greedy"))
    assert lb >= 1


def test_query_validation():
    with pytest.raises(ParameterError):
        EluderQuery(np.zeros((2, 2)), -1.0)
    with pytest.raises(ParameterError):
        EluderQuery(np.zeros((2, 2)), 0.1, mode="bogus")


def test_cover_sizes():
    values = np.array([[0.0], [0.1], [0.2], [1.0]])
    assert minimal_cover_size(values, 0.1) == 2
    assert cover_size(values, 0.1) >= 2
    assert minimal_cover_size(values, 0.0) == 4
    assert minimal_cover_size(values, 1.0) == 1


@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_greedy_cover_is_valid_and_not_smaller_than_minimum(seed, eps):
    rng = make_rng(seed)
    values = rng.random((6, 3))
    assert cover_size(values, eps) >= minimal_cover_size(values, eps)


def test_lift_model_class_evaluates_expectations():
    rng = make_rng(0)
    kernels = rng.dirichlet(np.ones(3), size=(2, 1, 3, 2))
    V = [np.array([0.0, 1.0, 2.0]), np.array([1.0, 1.0, 1.0])]
    lifted = lift_model_class(kernels, V)
    assert lifted.shape == (2, 12)
    np.testing.assert_allclose(lifted[:, 6:], 1.0)
    np.testing.assert_allclose(lifted[1, 0], kernels[1, 0, 0, 0] @ V[0])
