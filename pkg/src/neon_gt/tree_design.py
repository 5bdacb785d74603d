"""Binary-tree addressing and sparse test designs.

Levels are 0-based: the root is level 0 and level ``l`` holds ``2**l``
nodes.  Node ``(l, i)`` covers items ``[i * 2**(n-l), (i+1) * 2**(n-l))``
where ``n = log2 N``, so the node at level ``l`` holding item ``j`` is
``j >> (n - l)``.

Designs store, for every tested (level, repetition), an integer array that
maps node index to a test index inside that level's bank.  Dense matrices
are only produced by :func:`materialize_matrix`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Tuple, Union

import numpy as np

from .params import (
    NoisyParams,
    ParameterError,
    SchemeParams,
    is_power_of_two,
)

SCHEMA_VERSION = 1
MAX_DENSE_CELLS = 2 ** 26

# stream tags for SeedSequence spawn keys
_SPLIT_TAG = 1
_CIRCLE_TAG = 2
_CHAIN_TAG = 3


class DesignError(ValueError):
    pass


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


@dataclass(frozen=True, order=True)
class NodeId:
    level: int
    index: int

    def items(self, log2_n: int) -> range:
        width = 1 << (log2_n - self.level)
        return range(self.index * width, (self.index + 1) * width)


def node_children(node: NodeId, log2_n: int) -> Tuple[NodeId, NodeId]:
    if node.level >= log2_n:
        raise DesignError(f"{node} is a leaf of a depth-{log2_n} tree")
    return NodeId(node.level + 1, 2 * node.index), NodeId(node.level + 1, 2 * node.index + 1)


def node_of_item(item: int, level: int, log2_n: int) -> NodeId:
    return NodeId(level, item >> (log2_n - level))


# ---------------------------------------------------------------------------
# split designs


@dataclass(frozen=True, eq=False)
class SplitDesign:
    """Per-level random node-to-test assignment, repeated ``reps`` times."""

    n_items: int
    defect_bound: int
    tests_per_level: int
    start_level: int
    end_level: int
    reps: int
    assignment: Dict[int, np.ndarray]
    seed: int

    @property
    def log2_n(self) -> int:
        return self.n_items.bit_length() - 1

    @property
    def levels(self) -> range:
        return range(self.start_level, self.end_level + 1)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def total_tests(self) -> int:
        return self.reps * self.tests_per_level * self.n_levels

    def rank(self, level: int) -> int:
        if level not in self.levels:
            raise DesignError(f"level {level} is not tested (levels {self.start_level}..{self.end_level})")
        return level - self.start_level

    def test_index(self, level: int, rep: int, node: int) -> int:
        """Test index of ``node`` counting banks level-major, then repetition."""
        t = self.tests_per_level
        return (self.rank(level) * self.reps + rep) * t + int(self.assignment[level][rep, node])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SplitDesign):
            return NotImplemented
        head = (self.n_items, self.defect_bound, self.tests_per_level, self.start_level,
                self.end_level, self.reps, self.seed)
        other_head = (other.n_items, other.defect_bound, other.tests_per_level, other.start_level,
                      other.end_level, other.reps, other.seed)
        return head == other_head and all(
            np.array_equal(self.assignment[lv], other.assignment[lv]) for lv in self.levels
        )


def default_start_level(t: int) -> int:
    """First tested level: one below the shallowest level with at least ``t`` nodes."""
    return math.ceil(math.log2(t)) + 1 if t > 1 else 1


def build_split_design(
    N: int,
    t: int,
    zeta: float,
    reps: int = 1,
    start_level: int | None = None,
    end_level: int | None = None,
    seed: int = 0,
) -> SplitDesign:
    if not is_power_of_two(N):
        raise DesignError(f"N={N} must be a power of two")
    if not 1 <= t <= N:
        raise DesignError(f"defect bound t={t} outside [1, N]")
    if reps < 1:
        raise DesignError("reps must be >= 1")
    log2_n = N.bit_length() - 1
    if start_level is None:
        start_level = default_start_level(t)
    if end_level is None:
        end_level = log2_n
    if end_level > log2_n or start_level < 0:
        raise DesignError("tested levels must lie inside the tree")
    if start_level > end_level + 1:
        raise DesignError("start_level may exceed end_level by at most one (empty design)")
    tests = math.ceil(zeta * t)
    if tests < 1:
        raise DesignError("zeta * t must be positive")
    assignment = {}
    for level in range(start_level, end_level + 1):
        rng = _stream(seed, _SPLIT_TAG, level)
        assignment[level] = rng.integers(0, tests, size=(reps, 1 << level), dtype=np.int64)
    return SplitDesign(N, t, tests, start_level, end_level, reps, assignment, int(seed))


# ---------------------------------------------------------------------------
# NEON block-and-circle design


def draw_circles(rng: np.random.Generator, n_items: int, blocks: int, circles: int) -> np.ndarray:
    """Uniform ``circles``-subset of ``range(blocks)`` per item, rows sorted."""
    if circles > blocks:
        raise DesignError(f"cannot circle {circles} of {blocks} blocks")
    if blocks < 4 * circles:
        out = np.empty((n_items, circles), dtype=np.int64)
        chunk = max(1, (1 << 20) // blocks)
        for lo in range(0, n_items, chunk):
            hi = min(n_items, lo + chunk)
            keys = rng.random((hi - lo, blocks))
            out[lo:hi] = np.argsort(keys, axis=1)[:, :circles]
        out.sort(axis=1)
        return out
    # rejection sampling of distinct tuples; uniform over subsets
    out = np.sort(rng.integers(0, blocks, size=(n_items, circles)), axis=1)
    bad = np.flatnonzero((np.diff(out, axis=1) == 0).any(axis=1)) if circles > 1 else np.empty(0, int)
    while bad.size:
        redraw = np.sort(rng.integers(0, blocks, size=(bad.size, circles)), axis=1)
        out[bad] = redraw
        still = (np.diff(redraw, axis=1) == 0).any(axis=1)
        bad = bad[still]
    return out


@dataclass(frozen=True, eq=False)
class NeonDesign:
    params: SchemeParams
    local: SplitDesign
    blocks: int
    circling: np.ndarray
    shared_local: bool
    seed: int

    scheme = "neon"

    @property
    def n_items(self) -> int:
        return self.local.n_items

    @property
    def circles(self) -> int:
        return self.circling.shape[1]

    @property
    def block_rows(self) -> int:
        """Rows of one block, counted structurally from the local design."""
        return self.local.tests_per_level * self.local.n_levels

    @property
    def total_tests(self) -> int:
        return self.blocks * self.block_rows

    def local_rep(self, block: Union[int, np.ndarray]):
        """Row of the local assignment that ``block`` reads."""
        return np.zeros_like(block) if self.shared_local else block

    def block_tests(self, block: Union[int, np.ndarray], level: int, nodes) -> np.ndarray:
        """Global test index holding ``nodes`` at ``level`` inside ``block`` (broadcasting)."""
        loc = self.local
        a = loc.assignment[level][self.local_rep(block), nodes]
        return np.asarray(block) * self.block_rows + loc.rank(level) * loc.tests_per_level + a

    def item_tests(self, items: Iterable[int]) -> np.ndarray:
        """``(len(items), C * levels)`` array of every test each item sits in."""
        items = np.asarray(list(items) if not isinstance(items, np.ndarray) else items, dtype=np.int64)
        log2_n = self.local.log2_n
        if items.size == 0:
            return np.empty((0, self.circles * self.local.n_levels), dtype=np.int64)
        blocks = self.circling[items]  # (m, C)
        cols = []
        for level in self.local.levels:
            nodes = (items >> (log2_n - level))[:, None]
            cols.append(self.block_tests(blocks, level, nodes))
        if not cols:
            return np.empty((items.size, 0), dtype=np.int64)
        return np.stack(cols, axis=2).reshape(items.size, -1)

    def block_load(self, defectives: Iterable[int]) -> np.ndarray:
        """Number of circled defectives per block."""
        d = np.asarray(sorted(defectives), dtype=np.int64)
        return np.bincount(self.circling[d].ravel(), minlength=self.blocks)


def build_neon_design(params: SchemeParams, seed: int = 0, shared_local: bool = True) -> NeonDesign:
    if params.blocks < params.circles:
        raise DesignError(f"blocks={params.blocks} < circles={params.circles}")
    reps = 1 if shared_local else params.blocks
    local = build_split_design(
        params.n_items, params.local_bound, params.zeta, reps=reps, seed=seed,
    )
    if local.n_levels == 0:
        raise DesignError("local design has no tested levels; N too small for this K")
    rng = _stream(seed, _CIRCLE_TAG)
    circling = draw_circles(rng, params.n_items, params.blocks, params.circles)
    return NeonDesign(params, local, params.blocks, circling, shared_local, int(seed))


# ---------------------------------------------------------------------------
# repeated design with extra chain levels


@dataclass(frozen=True, eq=False)
class NoisyDesign:
    params: NoisyParams
    branch: SplitDesign
    chain: np.ndarray  # (r', C', N) bank-local test indices
    seed: int

    @property
    def scheme(self) -> str:
        return self.params.mode

    @property
    def mode(self) -> str:
        return self.params.mode

    @property
    def n_items(self) -> int:
        return self.params.n_items

    @property
    def log2_n(self) -> int:
        return self.params.log2_n

    @property
    def reps(self) -> int:
        return self.params.reps

    @property
    def r_prime(self) -> int:
        return self.chain.shape[0]

    @property
    def tests_per_bank(self) -> int:
        return self.branch.tests_per_level

    @property
    def frontier_level(self) -> int:
        return self.params.log2_k

    @property
    def last_level(self) -> int:
        return self.log2_n + self.r_prime

    @property
    def total_tests(self) -> int:
        return self.tests_per_bank * self.reps * (self.branch.n_levels + self.r_prime)

    def tests(self, level: int, nodes) -> np.ndarray:
        """``(C', len(nodes))`` global test indices of ``nodes`` at ``level``.

        Levels ``log2 N + 1 .. log2 N + r'`` are chain slots indexed by item.
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        t, reps = self.tests_per_bank, self.reps
        if self.branch.start_level <= level <= self.log2_n:
            a = self.branch.assignment[level][:, nodes]
            rank = level - self.branch.start_level
        elif self.log2_n < level <= self.last_level:
            a = self.chain[level - self.log2_n - 1][:, nodes]
            rank = self.branch.n_levels + level - self.log2_n - 1
        else:
            raise DesignError(f"level {level} is outside the design's tested levels")
        base = (rank * reps + np.arange(reps))[:, None] * t
        return base + a

    def item_tests(self, items: Iterable[int]) -> np.ndarray:
        items = np.asarray(list(items) if not isinstance(items, np.ndarray) else items, dtype=np.int64)
        cols = []
        for level in range(self.branch.start_level, self.last_level + 1):
            nodes = items >> (self.log2_n - level) if level <= self.log2_n else items
            cols.append(self.tests(level, nodes).T)
        if not cols:
            return np.empty((items.size, 0), dtype=np.int64)
        return np.concatenate(cols, axis=1)


def build_noisy_design(params: NoisyParams, seed: int = 0) -> NoisyDesign:
    N, K = params.n_items, params.k_max
    if not (is_power_of_two(N) and is_power_of_two(K)) or K >= N:
        raise DesignError("need N, K powers of two with K < N")
    if params.extra_levels < 1:
        raise DesignError("at least one extra chain level is required")
    branch = build_split_design(
        N, K, params.zeta, reps=params.reps,
        start_level=params.log2_k + 1, end_level=params.log2_n, seed=seed,
    )
    rng = _stream(seed, _CHAIN_TAG)
    chain = rng.integers(0, branch.tests_per_level, size=(params.extra_levels, params.reps, N), dtype=np.int64)
    return NoisyDesign(params, branch, chain, int(seed))


Design = Union[NeonDesign, NoisyDesign]


def materialize_matrix(design: Design, max_cells: int = MAX_DENSE_CELLS) -> np.ndarray:
    """Dense ``M x N`` 0/1 matrix of the sparse design."""
    m, n = design.total_tests, design.n_items
    if m * n > max_cells:
        raise DesignError(f"{m}x{n} matrix exceeds the {max_cells}-cell guard")
    A = np.zeros((m, n), dtype=np.uint8)
    rows = design.item_tests(np.arange(n))
    A[rows, np.arange(n)[:, None]] = 1
    return A


# ---------------------------------------------------------------------------
# serialization


def design_to_dict(design: Design) -> dict:
    if isinstance(design, NeonDesign):
        split = design.local
        extra = {"circling": design.circling.tolist(), "shared_local": design.shared_local}
        scheme = "neon"
        k = design.params.k_max
    else:
        split = design.branch
        extra = {"chain": design.chain.tolist()}
        scheme = design.mode
        k = design.params.k_max
    return {
        "schema_version": SCHEMA_VERSION,
        "scheme": scheme,
        "N": design.n_items,
        "K": k,
        "parameters": design.params.to_dict(),
        "seed": design.seed,
        "split": {
            "defect_bound": split.defect_bound,
            "tests_per_level": split.tests_per_level,
            "start_level": split.start_level,
            "end_level": split.end_level,
            "reps": split.reps,
            "seed": split.seed,
        },
        "levels": {str(lv): split.assignment[lv].tolist() for lv in split.levels},
        **extra,
    }


def design_from_dict(doc: dict) -> Design:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DesignError(f"unsupported schema_version {doc.get('schema_version')!r}")
    s = doc["split"]
    assignment = {int(lv): np.asarray(arr, dtype=np.int64) for lv, arr in doc["levels"].items()}
    split = SplitDesign(
        doc["N"], s["defect_bound"], s["tests_per_level"], s["start_level"], s["end_level"],
        s["reps"], assignment, s["seed"],
    )
    if doc["scheme"] == "neon":
        params = SchemeParams(**doc["parameters"])
        circling = np.asarray(doc["circling"], dtype=np.int64)
        return NeonDesign(params, split, params.blocks, circling, doc["shared_local"], doc["seed"])
    if doc["scheme"] in ("bsc", "bac"):
        params = NoisyParams(**doc["parameters"])
        chain = np.asarray(doc["chain"], dtype=np.int64).reshape(params.extra_levels, params.reps, doc["N"])
        return NoisyDesign(params, split, chain, doc["seed"])
    raise ParameterError(f"unknown scheme {doc['scheme']!r}")


def save_design(design: Design, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(design_to_dict(design)))


def load_design(path: Union[str, Path]) -> Design:
    return design_from_dict(json.loads(Path(path).read_text()))
