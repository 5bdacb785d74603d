"""Brute-force references on dense matrices, for small instances only."""
from __future__ import annotations

from itertools import combinations
from typing import FrozenSet, Iterable, List, NamedTuple

import numpy as np

from .channel import OutcomeVector

MAX_EXHAUSTIVE_N = 32
MAX_EXHAUSTIVE_K = 3
MAX_DENSE_CELLS = 2 ** 26


class OracleGuardError(ValueError):
    pass


def _check(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2:
        raise OracleGuardError("test matrix must be two-dimensional")
    if A.size > MAX_DENSE_CELLS:
        raise OracleGuardError(f"{A.shape} matrix exceeds the dense guard")
    return A.astype(bool)


def dense_or_encode(A: np.ndarray, defectives: Iterable[int]) -> OutcomeVector:
    """``y_i = OR_j (A_ij AND x_j)``, evaluated literally."""
    A = _check(A)
    m, n = A.shape
    x = np.zeros(n, dtype=bool)
    d = list(defectives)
    if any(not 0 <= j < n for j in d):
        raise OracleGuardError(f"defective ids must lie in [0, {n})")
    x[d] = True
    y = np.zeros(m, dtype=bool)
    for i in range(m):
        y[i] = bool(np.any(A[i] & x))
    return OutcomeVector(y.astype(np.uint8))


class CompResult(NamedTuple):
    possible: FrozenSet[int]
    untested: FrozenSet[int]


def comp_possible_defectives(A: np.ndarray, y: OutcomeVector) -> CompResult:
    """Items whose every test is positive; items in no test are reported apart."""
    A = _check(A)
    if y.m != A.shape[0]:
        raise OracleGuardError("outcome length does not match matrix rows")
    tested = A.any(axis=0)
    in_negative = A[~y.bits.astype(bool)].any(axis=0)
    possible = np.flatnonzero(tested & ~in_negative)
    return CompResult(frozenset(possible.tolist()), frozenset(np.flatnonzero(~tested).tolist()))


def exhaustive_consistent_sets(A: np.ndarray, y: OutcomeVector, K: int) -> List[FrozenSet[int]]:
    """Every ``S`` with ``|S| <= K`` and ``A o S == y``, by size then lexicographically."""
    A = _check(A)
    m, n = A.shape
    if n > MAX_EXHAUSTIVE_N or K > MAX_EXHAUSTIVE_K:
        raise OracleGuardError(f"exhaustive search limited to N <= {MAX_EXHAUSTIVE_N}, K <= {MAX_EXHAUSTIVE_K}")
    if y.m != m:
        raise OracleGuardError("outcome length does not match matrix rows")
    # columns and outcome as Python integer bitsets
    cols = [int.from_bytes(np.packbits(A[:, j]).tobytes(), "big") for j in range(n)]
    target = int.from_bytes(np.packbits(y.bits.astype(bool)).tobytes(), "big")
    found = []
    for size in range(K + 1):
        for combo in combinations(range(n), size):
            acc = 0
            for j in combo:
                acc |= cols[j]
            if acc == target:
                found.append(frozenset(combo))
    return found
