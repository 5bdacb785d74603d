import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neon_gt.channel import ChannelSpec, OutcomeVector, apply_channel, encode
from neon_gt.noisy_decoder import (
    DensityState,
    NodeVerdict,
    chain_density,
    chain_verify,
    decode_noisy,
    node_positive,
    subtree_scan,
)
from neon_gt.params import derive_noisy_params
from neon_gt.tree_design import DesignError, NodeId, build_noisy_design


@dataclass
class PrivateTests:
    """Stand-in design: every node at every level owns one private test."""

    log2_n: int
    reps: int = 1

    def tests(self, level, nodes):
        return ((1 << level) + np.asarray(nodes, dtype=np.int64))[None, :]


def outcome_with(log2_n, positives):
    bits = np.zeros(1 << (log2_n + 1), dtype=np.uint8)
    for level, index in positives:
        bits[(1 << level) + index] = 1
    return OutcomeVector(bits)


def test_majority_is_strict():
    assert NodeVerdict(NodeId(1, 0), 2, 3).positive
    assert not NodeVerdict(NodeId(1, 0), 2, 4).positive
    assert not NodeVerdict(NodeId(1, 0), 0, 1).positive


def test_density_state():
    s = DensityState(NodeId(2, 1), 2, 3)
    assert s.density == Fraction(2, 3) and s.possibly_defective
    assert not DensityState(None, 1, 2).possibly_defective
    with pytest.raises(ValueError):
        DensityState(None, 3, 2)
    with pytest.raises(ValueError):
        DensityState(None, 0, 0)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=40))
def test_chain_density_matches_fraction(chain):
    s = chain_density(chain)
    assert s.density == Fraction(sum(chain), len(chain))
    assert s.possibly_defective == (2 * sum(chain) > len(chain))


def test_root_counts_once_in_density():
    # root (level 0) counted as one positive at depth 1
    d = PrivateTests(log2_n=2)
    # path 0 -> 0 -> 1: child negative, grandchild positive: 2 of 3
    y = outcome_with(2, [(2, 1)])
    assert subtree_scan(d, y, NodeId(0, 0), 2) == [NodeId(2, 1)]
    # nothing positive below the root: 1 of 3
    assert subtree_scan(d, outcome_with(2, []), NodeId(0, 0), 2) == []
    # depth 1: 2 of 2 survives, 1 of 2 does not
    assert subtree_scan(d, outcome_with(2, [(1, 1)]), NodeId(0, 0), 1) == [NodeId(1, 1)]
    assert subtree_scan(d, outcome_with(2, []), NodeId(0, 0), 1) == []


def test_scan_rejects_overrun():
    d = PrivateTests(log2_n=2)
    with pytest.raises(DesignError):
        subtree_scan(d, outcome_with(2, []), NodeId(1, 0), 2)


@given(st.integers(1, 4), st.data())
def test_scan_against_brute_force_paths(depth, data):
    n = depth
    d = PrivateTests(log2_n=n)
    bits = data.draw(st.lists(st.integers(0, 1), min_size=1 << (n + 1), max_size=1 << (n + 1)))
    y = OutcomeVector(np.array(bits, dtype=np.uint8))
    got = {node.index for node in subtree_scan(d, y, NodeId(0, 0), depth)}
    want = set()
    for leaf in range(1 << depth):
        mult = 1 + sum(bits[(1 << lv) + (leaf >> (depth - lv))] for lv in range(1, depth + 1))
        if 2 * mult > depth + 1:
            want.add(leaf)
    assert got == want


def real(n=64, K=2, zeta=8, cp=3, eps=1.0, seed=0, **kw):
    return build_noisy_design(derive_noisy_params(n, K, zeta, cp, eps, **kw), seed=seed)


def test_node_positive_bounds():
    d = real()
    y = encode(d, [5])
    assert node_positive(d, y, NodeId(6, 5)).positive
    assert node_positive(d, y, NodeId(d.last_level, 5)).positive
    with pytest.raises(DesignError):
        node_positive(d, y, NodeId(3, 8))
    with pytest.raises(DesignError):
        node_positive(d, y, NodeId(d.last_level + 1, 0))


def test_chain_verify_true_item():
    d = real()
    y = encode(d, [17])
    assert chain_verify(d, y, 17)


def test_all_positive_outcome_aborts_on_cap():
    d = real(n=256, K=4)
    y = OutcomeVector(np.ones(d.total_tests, dtype=np.uint8))
    res = decode_noisy(d, y, survivor_cap=10)
    assert res.items == [] and res.trace.aborted
    full = decode_noisy(d, y, survivor_cap=1e9)
    assert full.items == list(range(256))


def test_all_negative_outcome_decodes_empty():
    d = real(n=256, K=4)
    res = decode_noisy(d, OutcomeVector(np.zeros(d.total_tests, dtype=np.uint8)))
    assert res.items == [] and not res.trace.aborted
    assert res.trace.frontier_sizes[0] == 4


def test_trace_tracks_true_survivors():
    d = real(n=256, K=4, zeta=16)
    S = [3, 90, 200]
    res = decode_noisy(d, encode(d, S), truth=S)
    assert res.trace.true_survivors[-1] == 3
    assert len(res.trace.frontier_sizes) == len(res.trace.true_survivors) + 1
    assert res.trace.chain_checked == res.trace.frontier_sizes[-1]


def test_truncated_last_step():
    # 8 - 2 = 6 levels with r = 4: one full step and one of depth 2
    d = real(n=256, K=4, r=4)
    res = decode_noisy(d, encode(d, [1]))
    assert len(res.trace.frontier_sizes) == 3


def test_length_mismatch():
    d = real()
    with pytest.raises(DesignError):
        decode_noisy(d, OutcomeVector(np.zeros(5, dtype=np.uint8)))


@pytest.mark.parametrize("n", [8, 16, 32])
def test_zero_noise_exact_small(n):
    d = real(n=n, K=2, zeta=256, cp=1, eps=7.0, seed=n)
    for size in range(3):
        for S in itertools.combinations(range(n), size):
            assert decode_noisy(d, encode(d, S)).items == list(S)


@given(st.sets(st.integers(0, 1023), max_size=8), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_noisy_repetitions_recover(S, seed):
    d = real(n=1024, K=8, zeta=20, cp=9, eps=1.0, seed=seed, rho=0.01)
    y = apply_channel(encode(d, S), ChannelSpec.bsc(0.01), seed)
    out = decode_noisy(d, y).items
    # allow at most a single miss under noise; exactness is measured statistically elsewhere
    assert len(set(S) ^ set(out)) <= 1
