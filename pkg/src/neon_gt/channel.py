"""Noiseless OR-encoding and seeded bit-flip channels."""
from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from .params import ParameterError

SeedLike = Union[int, Sequence[int]]

_CHANNEL_TAG = 7


class DefectiveSetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OutcomeVector:
    bits: np.ndarray  # uint8, one entry per test

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", np.ascontiguousarray(self.bits, dtype=np.uint8))

    @property
    def m(self) -> int:
        return int(self.bits.size)

    def __len__(self) -> int:
        return self.m

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OutcomeVector):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def to_bytes(self) -> bytes:
        """8-byte big-endian length header followed by MSB-first packed bits."""
        return struct.pack(">Q", self.m) + np.packbits(self.bits).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "OutcomeVector":
        (m,) = struct.unpack(">Q", data[:8])
        bits = np.unpackbits(np.frombuffer(data[8:], dtype=np.uint8), count=m)
        return cls(bits)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


class ChannelKind(str, Enum):
    NOISELESS = "noiseless"
    FPC = "fpc"
    FNC = "fnc"
    BSC = "bsc"
    BAC = "bac"


@dataclass(frozen=True)
class ChannelSpec:
    kind: ChannelKind = ChannelKind.NOISELESS
    rho: float = 0.0
    rho_prime: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        for name in ("rho", "rho_prime"):
            v = getattr(self, name)
            if not 0.0 <= v < 0.5:
                raise ParameterError(f"{name}={v} must lie in [0, 1/2)")
        k, r, rp = self.kind, self.rho, self.rho_prime
        ok = {
            ChannelKind.NOISELESS: r == 0 and rp == 0,
            ChannelKind.FPC: rp == 0,
            ChannelKind.FNC: r == 0,
            ChannelKind.BSC: r == rp,
            ChannelKind.BAC: True,
        }[k]
        if not ok:
            raise ParameterError(f"rates ({r}, {rp}) inconsistent with channel {k.value}")

    @classmethod
    def noiseless(cls) -> "ChannelSpec":
        return cls(ChannelKind.NOISELESS)

    @classmethod
    def fpc(cls, rho: float) -> "ChannelSpec":
        return cls(ChannelKind.FPC, rho, 0.0)

    @classmethod
    def fnc(cls, rho_prime: float) -> "ChannelSpec":
        return cls(ChannelKind.FNC, 0.0, rho_prime)

    @classmethod
    def bsc(cls, rho: float) -> "ChannelSpec":
        return cls(ChannelKind.BSC, rho, rho)

    @classmethod
    def bac(cls, rho: float, rho_prime: float) -> "ChannelSpec":
        return cls(ChannelKind.BAC, rho, rho_prime)


def check_defectives(
    defectives: Iterable[int], n_items: int, k_max: int, strict: bool = False
) -> np.ndarray:
    d = np.unique(np.asarray(list(defectives), dtype=np.int64))
    if d.size and (d[0] < 0 or d[-1] >= n_items):
        raise DefectiveSetError(f"defective ids must lie in [0, {n_items})")
    if d.size > k_max:
        msg = f"{d.size} defectives exceed the design bound K={k_max}"
        if strict:
            raise DefectiveSetError(msg)
        warnings.warn(msg, stacklevel=3)
    return d


def encode(design, defectives: Iterable[int], strict: bool = False) -> OutcomeVector:
    """OR of the defectives' columns, walking only their sparse test lists."""
    d = check_defectives(defectives, design.n_items, design.params.k_max, strict)
    bits = np.zeros(design.total_tests, dtype=np.uint8)
    if d.size:
        bits[design.item_tests(d).ravel()] = 1
    return OutcomeVector(bits)


def channel_rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based generator; draw ``t`` of the stream belongs to test ``t``."""
    key = (seed,) if isinstance(seed, (int, np.integer)) else tuple(seed)
    ss = np.random.SeedSequence(entropy=[int(x) for x in key] + [_CHANNEL_TAG])
    return np.random.Generator(np.random.Philox(ss))


def apply_channel(y: OutcomeVector, spec: ChannelSpec, seed: SeedLike = 0) -> OutcomeVector:
    """Flip 0 -> 1 with probability ``rho`` and 1 -> 0 with ``rho_prime``, independently per test."""
    if spec.rho == 0.0 and spec.rho_prime == 0.0:
        return OutcomeVector(y.bits.copy())
    u = channel_rng(seed).random(y.m)
    ones = y.bits.astype(bool)
    flip = np.where(ones, u < spec.rho_prime, u < spec.rho)
    return OutcomeVector((ones ^ flip).astype(np.uint8))


def flip_counts(before: OutcomeVector, after: OutcomeVector) -> Tuple[int, int]:
    """(zeros flipped to one, ones flipped to zero)."""
    b, a = before.bits.astype(bool), after.bits.astype(bool)
    return int(np.count_nonzero(~b & a)), int(np.count_nonzero(b & ~a))
