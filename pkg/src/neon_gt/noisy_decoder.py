"""Density-tracked subtree decoder for the repeated (BSC / BAC) design.

A node is positive when strictly more than half of its ``C'`` tests are
positive.  Decoding proceeds in steps: from every frontier node, the full
subtree of depth ``r`` is scanned, tracking along each path the number of
positive nodes (multiplicity) and the path length (depth).  The step root
counts as one positive node at depth 1, so a node ``d`` levels below it has
depth ``d + 1``.  Leaves whose density ``multiplicity / depth`` is strictly
above 1/2 seed the next step.  Survivors at the leaf level are accepted when
strictly more than half of their ``r'`` chain slots are positive.

Ties reject everywhere; even ``C'`` or even ``r'`` therefore bias towards
false negatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, List, NamedTuple, Optional, Sequence

import numpy as np

from .channel import OutcomeVector
from .tree_design import DesignError, NodeId, NoisyDesign


@dataclass(frozen=True)
class NodeVerdict:
    node: NodeId
    positive_votes: int
    reps: int

    @property
    def positive(self) -> bool:
        return 2 * self.positive_votes > self.reps


@dataclass(frozen=True)
class DensityState:
    node: Optional[NodeId]
    multiplicity: int
    depth_in_step: int

    def __post_init__(self) -> None:
        if self.depth_in_step < 1 or not 0 <= self.multiplicity <= self.depth_in_step:
            raise ValueError(f"invalid density state {self}")

    @property
    def density(self) -> Fraction:
        return Fraction(self.multiplicity, self.depth_in_step)

    @property
    def possibly_defective(self) -> bool:
        return 2 * self.multiplicity > self.depth_in_step


def chain_density(chain: Sequence[int]) -> DensityState:
    """Density state at the end of a 0/1 path, every entry counted."""
    return DensityState(None, int(sum(chain)), len(chain))


@dataclass
class DecodeTrace:
    frontier_sizes: List[int] = field(default_factory=list)
    nodes_visited: int = 0
    chain_checked: int = 0
    aborted: bool = False
    true_survivors: List[int] = field(default_factory=list)
    false_survivors: List[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "frontier_sizes": list(self.frontier_sizes),
            "nodes_visited": self.nodes_visited,
            "chain_checked": self.chain_checked,
            "aborted": self.aborted,
            "true_survivors": list(self.true_survivors),
            "false_survivors": list(self.false_survivors),
        }


class NoisyDecodeResult(NamedTuple):
    items: List[int]
    trace: DecodeTrace


def vote_counts(design: NoisyDesign, y: OutcomeVector, level: int, nodes) -> np.ndarray:
    """Positive tests among each node's ``C'`` repetitions."""
    return y.bits[design.tests(level, nodes)].sum(axis=0, dtype=np.int64)


def node_positive(design: NoisyDesign, y: OutcomeVector, node: NodeId) -> NodeVerdict:
    """Verdict for a branching node, or a chain slot ``(log2 N + e, item)``."""
    exists = 0 <= node.index < (1 << min(node.level, design.log2_n))
    if not exists or node.level > design.last_level:
        raise DesignError(f"{node} does not exist")
    votes = int(vote_counts(design, y, node.level, [node.index])[0])
    return NodeVerdict(node, votes, design.reps)


def _scan(design: NoisyDesign, y: OutcomeVector, root_level: int, roots: np.ndarray, depth: int):
    """Scan the depth-``depth`` subtrees of ``roots``; return surviving leaf indices and visits."""
    if root_level + depth > design.log2_n:
        raise DesignError(f"subtree of depth {depth} below level {root_level} overruns the tree")
    idx = np.asarray(roots, dtype=np.int64)
    mult = np.ones(idx.size, dtype=np.int64)
    visits = 0
    offsets = np.array([0, 1], dtype=np.int64)
    for d in range(1, depth + 1):
        idx = (idx[:, None] * 2 + offsets).ravel()
        mult = np.repeat(mult, 2)
        votes = vote_counts(design, y, root_level + d, idx)
        mult += 2 * votes > design.reps
        visits += idx.size
        assert np.all(mult <= d + 1)
    keep = 2 * mult > depth + 1
    return np.unique(idx[keep]), visits


def subtree_scan(design: NoisyDesign, y: OutcomeVector, root: NodeId, depth: int) -> List[NodeId]:
    leaves, _ = _scan(design, y, root.level, np.array([root.index]), depth)
    return [NodeId(root.level + depth, int(i)) for i in leaves]


def _chain_positives(design: NoisyDesign, y: OutcomeVector, items: np.ndarray) -> np.ndarray:
    n = design.log2_n
    total = np.zeros(items.size, dtype=np.int64)
    for e in range(1, design.r_prime + 1):
        total += 2 * vote_counts(design, y, n + e, items) > design.reps
    return total


def chain_verify(design: NoisyDesign, y: OutcomeVector, item: int) -> bool:
    return bool(2 * _chain_positives(design, y, np.array([item]))[0] > design.r_prime)


def _true_nodes(defectives: Iterable[int], level: int, log2_n: int) -> np.ndarray:
    d = np.asarray(sorted(defectives), dtype=np.int64)
    return np.unique(d >> (log2_n - level))


def decode_noisy(
    design: NoisyDesign,
    y: OutcomeVector,
    truth: Optional[Iterable[int]] = None,
    survivor_cap: Optional[float] = None,
) -> NoisyDecodeResult:
    if y.m != design.total_tests:
        raise DesignError(f"outcome has {y.m} bits, design has {design.total_tests} tests")
    p = design.params
    r = p.subtree_depth
    if survivor_cap is None:
        survivor_cap = p.false_positive_budget
    truth = None if truth is None else sorted(set(truth))
    trace = DecodeTrace()
    n = design.log2_n
    level = design.frontier_level
    frontier = np.arange(1 << level, dtype=np.int64)
    trace.frontier_sizes.append(int(frontier.size))
    n_steps = math.ceil((n - level) / r)
    for _ in range(n_steps):
        depth = min(r, n - level)
        frontier, visits = _scan(design, y, level, frontier, depth)
        level += depth
        trace.nodes_visited += visits
        trace.frontier_sizes.append(int(frontier.size))
        if truth is not None:
            tp = int(np.isin(frontier, _true_nodes(truth, level, n)).sum())
            trace.true_survivors.append(tp)
            trace.false_survivors.append(int(frontier.size) - tp)
        if frontier.size > survivor_cap:
            trace.aborted = True
            return NoisyDecodeResult([], trace)
    positives = _chain_positives(design, y, frontier)
    trace.chain_checked = int(frontier.size)
    trace.nodes_visited += int(frontier.size) * design.r_prime
    accepted = frontier[2 * positives > design.r_prime]
    return NoisyDecodeResult(accepted.tolist(), trace)
