from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neon_gt.params import derive_noiseless_params, derive_noisy_params
from neon_gt.tree_design import (
    DesignError,
    NodeId,
    build_neon_design,
    build_noisy_design,
    build_split_design,
    default_start_level,
    design_to_dict,
    draw_circles,
    load_design,
    materialize_matrix,
    node_children,
    node_of_item,
    save_design,
)


def small_neon(n=256, K=4, C=3, zeta=4, lam=12, seed=0, shared=True):
    p = derive_noiseless_params(n, K, C, zeta=zeta, lam=lam)
    return build_neon_design(p, seed=seed, shared_local=shared)


def small_noisy(n=256, K=4, zeta=4, cp=3, eps=1.0, seed=0):
    return build_noisy_design(derive_noisy_params(n, K, zeta, cp, eps), seed=seed)


def test_node_addressing():
    node = NodeId(3, 5)
    assert list(node.items(6)) == list(range(40, 48))
    assert node_children(node, 6) == (NodeId(4, 10), NodeId(4, 11))
    assert node_of_item(43, 3, 6) == node
    with pytest.raises(DesignError):
        node_children(NodeId(6, 0), 6)


@pytest.mark.parametrize("t,level", [(1, 1), (2, 2), (3, 3), (4, 3), (5, 4), (16, 5)])
def test_default_start_level(t, level):
    assert default_start_level(t) == level


def test_split_design_shapes():
    d = build_split_design(1024, 4, 4, reps=2, seed=3)
    assert d.tests_per_level == 16
    assert d.start_level == 3 and d.end_level == 10
    assert d.total_tests == 16 * 2 * 8
    for level in d.levels:
        a = d.assignment[level]
        assert a.shape == (2, 1 << level)
        assert a.min() >= 0 and a.max() < 16
    assert d.test_index(3, 1, 0) == (0 * 2 + 1) * 16 + d.assignment[3][1, 0]
    with pytest.raises(DesignError):
        d.rank(2)


def test_split_design_deterministic():
    a = build_split_design(512, 4, 4, seed=11)
    b = build_split_design(512, 4, 4, seed=11)
    c = build_split_design(512, 4, 4, seed=12)
    assert a == b
    assert a != c


def test_split_design_empty_range_allowed():
    d = build_split_design(8, 4, 2, start_level=4, end_level=3)
    assert d.n_levels == 0 and d.total_tests == 0


@pytest.mark.parametrize("kwargs", [dict(N=100, t=2, zeta=2), dict(N=64, t=0, zeta=2), dict(N=64, t=2, zeta=2, reps=0)])
def test_split_design_rejects(kwargs):
    with pytest.raises(DesignError):
        build_split_design(**kwargs)


@pytest.mark.parametrize("blocks,circles", [(5, 3), (8, 2), (100, 6), (6, 6)])
def test_draw_circles_distinct_sorted(blocks, circles):
    out = draw_circles(np.random.default_rng(0), 500, blocks, circles)
    assert out.shape == (500, circles)
    assert np.all(np.diff(out, axis=1) > 0)
    assert out.min() >= 0 and out.max() < blocks


def test_draw_circles_uniform_marginals():
    out = draw_circles(np.random.default_rng(1), 40000, 10, 3)
    freq = np.bincount(out.ravel(), minlength=10) / out.size
    assert np.allclose(freq, 0.1, atol=0.005)


def test_neon_structure():
    d = small_neon()
    assert d.blocks == 24  # ceil(12 * 4 / 2)
    assert d.circling.shape == (256, 3)
    assert d.total_tests == d.blocks * d.block_rows
    A = materialize_matrix(d)
    # each column active in exactly C blocks, one test per tested level in each
    block_of_row = np.arange(A.shape[0]) // d.block_rows
    for j in range(0, 256, 37):
        rows = np.flatnonzero(A[:, j])
        assert rows.size == 3 * d.local.n_levels
        assert sorted(set(block_of_row[rows].tolist())) == d.circling[j].tolist()


def test_shared_local_means_identical_blocks():
    d = small_neon(shared=True)
    A = materialize_matrix(d)
    s = d.block_rows
    # restricted to circled columns, every block is the same local matrix
    both = [j for j in range(256) if 0 in d.circling[j] and 1 in d.circling[j]]
    assert both
    assert np.array_equal(A[:s, both], A[s:2 * s, both])


def test_independent_local_differs():
    d = small_neon(shared=False)
    assert d.local.reps == d.blocks
    assert not np.array_equal(d.local.assignment[d.local.end_level][0], d.local.assignment[d.local.end_level][1])


@given(st.integers(min_value=5, max_value=11), st.integers(min_value=1, max_value=8),
       st.integers(min_value=1, max_value=4), st.integers(min_value=0, max_value=2 ** 32))
@settings(max_examples=30, deadline=None)
def test_neon_total_is_blocks_times_rows(n, K, C, seed):
    p = derive_noiseless_params(1 << n, K, C, zeta=2, lam=3.0 * C)
    try:
        d = build_neon_design(p, seed=seed)
    except DesignError:
        return
    assert d.total_tests == d.blocks * d.block_rows
    assert d.item_tests([0, (1 << n) - 1]).max() < d.total_tests


def test_noisy_structure():
    d = small_noisy()
    p = d.params
    assert d.r_prime == p.extra_levels == 2
    assert d.total_tests == p.total_tests == 16 * 3 * (8 - 2 + 2)
    A = materialize_matrix(d)
    # each item sits in C' tests per branch level and per chain slot
    assert np.all(A.sum(axis=0) == 3 * (8 - 2 + 2))
    # each test row belongs to one (level, bank) and holds nodes of that level only
    t = d.tests_per_bank
    level0 = d.tests(3, np.arange(8))
    assert level0.min() >= 0 and level0.max() < t * 3


def test_noisy_chain_is_per_item():
    d = small_noisy()
    idx = d.tests(d.log2_n + 1, np.arange(256))
    assert idx.shape == (3, 256)
    with pytest.raises(DesignError):
        d.tests(d.last_level + 1, [0])
    with pytest.raises(DesignError):
        d.tests(d.frontier_level, [0])


def test_materialize_guard():
    d = small_neon()
    with pytest.raises(DesignError):
        materialize_matrix(d, max_cells=10)


@pytest.mark.parametrize("factory", [small_neon, small_noisy])
def test_serialization_roundtrip(tmp_path, factory):
    d = factory(seed=5)
    path = tmp_path / "design.json"
    save_design(d, path)
    again = load_design(path)
    assert design_to_dict(again) == design_to_dict(d)
    assert np.array_equal(materialize_matrix(again), materialize_matrix(d))


def test_same_seed_same_design():
    assert design_to_dict(small_neon(seed=9)) == design_to_dict(small_neon(seed=9))
    assert design_to_dict(small_neon(seed=9)) != design_to_dict(small_neon(seed=10))
    assert design_to_dict(small_noisy(seed=9)) == design_to_dict(small_noisy(seed=9))


def test_noisy_design_rejects_non_power_k():
    p = derive_noisy_params(256, 4, 4, 3, 1.0)
    with pytest.raises(DesignError):
        build_noisy_design(replace(p, k_max=3))
