import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neon_gt.channel import OutcomeVector, encode
from neon_gt.oracle import (
    OracleGuardError,
    comp_possible_defectives,
    dense_or_encode,
    exhaustive_consistent_sets,
)
from neon_gt.params import derive_noiseless_params, derive_noisy_params
from neon_gt.tree_design import build_neon_design, build_noisy_design, materialize_matrix

A_SMALL = np.array(
    [
        [1, 1, 0, 0],
        [0, 0, 1, 1],
        [1, 0, 1, 0],
        [0, 1, 0, 1],
    ],
    dtype=np.uint8,
)


def test_dense_or_by_hand():
    assert dense_or_encode(A_SMALL, [0]).bits.tolist() == [1, 0, 1, 0]
    assert dense_or_encode(A_SMALL, [0, 3]).bits.tolist() == [1, 1, 1, 1]
    assert dense_or_encode(A_SMALL, []).bits.tolist() == [0, 0, 0, 0]


def test_comp_by_hand():
    y = dense_or_encode(A_SMALL, [0])
    assert comp_possible_defectives(A_SMALL, y).possible == frozenset({0})
    y = dense_or_encode(A_SMALL, [0, 3])
    assert comp_possible_defectives(A_SMALL, y).possible == frozenset({0, 1, 2, 3})


def test_comp_reports_untested():
    A = np.array([[1, 0, 0], [1, 1, 0]], dtype=np.uint8)
    res = comp_possible_defectives(A, OutcomeVector(np.array([1, 1], dtype=np.uint8)))
    assert res.untested == frozenset({2})
    assert 2 not in res.possible


def test_exhaustive_by_hand():
    y = dense_or_encode(A_SMALL, [0, 3])
    # {0,3} and {1,2} both explain an all-positive outcome
    assert exhaustive_consistent_sets(A_SMALL, y, 2) == [frozenset({0, 3}), frozenset({1, 2})]
    y = dense_or_encode(A_SMALL, [1])
    assert exhaustive_consistent_sets(A_SMALL, y, 2) == [frozenset({1})]
    assert exhaustive_consistent_sets(A_SMALL, dense_or_encode(A_SMALL, []), 1) == [frozenset()]


def test_guards():
    with pytest.raises(OracleGuardError):
        exhaustive_consistent_sets(np.zeros((2, 33), dtype=np.uint8), OutcomeVector(np.zeros(2)), 1)
    with pytest.raises(OracleGuardError):
        exhaustive_consistent_sets(np.zeros((2, 8), dtype=np.uint8), OutcomeVector(np.zeros(2)), 4)
    with pytest.raises(OracleGuardError):
        dense_or_encode(A_SMALL, [9])
    with pytest.raises(OracleGuardError):
        comp_possible_defectives(A_SMALL, OutcomeVector(np.zeros(3)))


@given(st.integers(0, 2 ** 32), st.sets(st.integers(0, 63), max_size=4))
@settings(max_examples=40, deadline=None)
def test_sparse_encode_matches_dense_neon(seed, S):
    d = build_neon_design(derive_noiseless_params(64, 4, 2, zeta=3, lam=6), seed=seed)
    assert encode(d, S) == dense_or_encode(materialize_matrix(d), S)


@given(st.integers(0, 2 ** 32), st.sets(st.integers(0, 63), max_size=4))
@settings(max_examples=40, deadline=None)
def test_sparse_encode_matches_dense_noisy(seed, S):
    d = build_noisy_design(derive_noisy_params(64, 4, 3, 3, 1.0), seed=seed)
    assert encode(d, S) == dense_or_encode(materialize_matrix(d), S)


@given(st.integers(0, 2 ** 32), st.sets(st.integers(0, 31), max_size=2))
@settings(max_examples=40, deadline=None)
def test_truth_is_always_consistent(seed, S):
    d = build_neon_design(derive_noiseless_params(32, 2, 2, zeta=4, lam=4), seed=seed)
    A = materialize_matrix(d)
    y = dense_or_encode(A, S)
    sets = exhaustive_consistent_sets(A, y, 2)
    assert frozenset(S) in sets
    comp = comp_possible_defectives(A, y).possible
    assert all(s <= comp for s in sets)
