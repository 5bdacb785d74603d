"""Block-wise binary-splitting decoder with a global multiplicity filter.

Every block runs the same descent: start with all nodes of the first tested
level, keep a node iff the test holding it in that block is positive, and
expand survivors to their children until the leaf level.  An item is
declared defective when at least ``C`` blocks emit it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .channel import OutcomeVector
from .tree_design import NeonDesign


class DecodeError(ValueError):
    pass


@dataclass
class LocalResult:
    block_id: int
    items: List[int]
    nodes_visited: int
    positive_nodes: int = 0


@dataclass
class MultiplicityTable:
    counts: np.ndarray

    def __getitem__(self, item: int) -> int:
        return int(self.counts[item])

    def histogram(self) -> Dict[int, int]:
        """multiplicity -> number of items with it (zero omitted)."""
        values, freq = np.unique(self.counts[self.counts > 0], return_counts=True)
        return {int(v): int(f) for v, f in zip(values, freq)}


@dataclass
class NeonDecodeResult:
    items: List[int]
    table: MultiplicityTable
    nodes_visited: int
    block_visits: np.ndarray
    block_positives: np.ndarray
    claims: np.ndarray = field(repr=False)  # (n_claims, 2) rows of (block, item)

    def local_results(self) -> List[LocalResult]:
        out = []
        for b in range(self.block_visits.size):
            items = self.claims[self.claims[:, 0] == b, 1]
            out.append(LocalResult(b, items.tolist(), int(self.block_visits[b]), int(self.block_positives[b])))
        return out


def _descend(design: NeonDesign, bits: np.ndarray, blocks: np.ndarray, offsets: np.ndarray):
    """Run the descent for ``blocks`` at once.

    ``offsets[j]`` is where block ``blocks[j]`` starts inside ``bits``.
    Returns leaf survivors as parallel (block position, item) arrays plus
    per-block visit and positive counts.
    """
    loc = design.local
    t = loc.tests_per_level
    nb = blocks.size
    width = 1 << loc.start_level
    pos = np.repeat(np.arange(nb), width)
    idx = np.tile(np.arange(width, dtype=np.int64), nb)
    visits = np.zeros(nb, dtype=np.int64)
    positives = np.zeros(nb, dtype=np.int64)
    for level in loc.levels:
        visits += np.bincount(pos, minlength=nb)
        a = loc.assignment[level][design.local_rep(blocks[pos]), idx]
        hit = bits[offsets[pos] + loc.rank(level) * t + a].astype(bool)
        pos, idx = pos[hit], idx[hit]
        positives += np.bincount(pos, minlength=nb)
        if level < loc.end_level:
            pos = np.repeat(pos, 2)
            idx = (idx[:, None] * 2 + np.array([0, 1])).ravel()
    return pos, idx, visits, positives


def local_decode(design: NeonDesign, block_id: int, y_block: OutcomeVector) -> LocalResult:
    if y_block.m != design.block_rows:
        raise DecodeError(f"block slice has {y_block.m} bits, expected {design.block_rows}")
    blocks = np.array([block_id], dtype=np.int64)
    pos, idx, visits, positives = _descend(design, y_block.bits, blocks, np.zeros(1, dtype=np.int64))
    items = sorted(set(idx.tolist()))
    return LocalResult(block_id, items, int(visits[0]), int(positives[0]))


def block_slice(design: NeonDesign, y: OutcomeVector, block_id: int) -> OutcomeVector:
    s = design.block_rows
    return OutcomeVector(y.bits[block_id * s:(block_id + 1) * s])


def global_decode(design: NeonDesign, y: OutcomeVector, threshold: Optional[int] = None) -> NeonDecodeResult:
    if y.m != design.total_tests:
        raise DecodeError(f"outcome has {y.m} bits, design has {design.total_tests} tests")
    if threshold is None:
        threshold = design.circles
    blocks = np.arange(design.blocks, dtype=np.int64)
    pos, idx, visits, positives = _descend(design, y.bits, blocks, blocks * design.block_rows)
    # a block cannot emit an item twice; dedupe anyway before counting
    pairs = np.unique(pos * design.n_items + idx)
    claim_blocks, claim_items = np.divmod(pairs, design.n_items)
    counts = np.bincount(claim_items, minlength=design.n_items)
    found = np.flatnonzero(counts >= threshold)
    return NeonDecodeResult(
        items=found.tolist(),
        table=MultiplicityTable(counts),
        nodes_visited=int(visits.sum()),
        block_visits=visits,
        block_positives=positives,
        claims=np.stack([claim_blocks, claim_items], axis=1),
    )
