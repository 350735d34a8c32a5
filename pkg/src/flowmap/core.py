"""Shared value types, box domains and the seeded random stream."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when a vector does not have the length its context requires."""


def as_vector(values, length: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce ``values`` to a finite 1-d float64 array, optionally checking its length."""
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(
            f"dimension mismatch: {name} has length {arr.shape[0]}, expected {length}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[lo_0, hi_0] x ... x [lo_k, hi_k]``.

    A coordinate with ``lo == hi`` is legal and pins that coordinate.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError(f"box bounds differ in shape: {lo.shape} vs {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError(f"box has lo > hi: lo={lo}, hi={hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_intervals(cls, intervals: Iterable[Sequence[float]]) -> "BoxDomain":
        pairs = [tuple(iv) for iv in intervals]
        return cls(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))

    @classmethod
    def point(cls, values) -> "BoxDomain":
        v = np.atleast_1d(np.asarray(values, dtype=np.float64))
        return cls(v, v)

    @property
    def dim(self) -> int:
        return int(self.lo.shape[0])

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def degenerate(self) -> np.ndarray:
        return self.lo == self.hi

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, atol: float = 0.0) -> np.ndarray:
        """Membership test; accepts one point or an ``(n, dim)`` array."""
        x = np.asarray(x, dtype=np.float64)
        return np.all((x >= self.lo - atol) & (x <= self.hi + atol), axis=-1)

    def volume(self, skip_degenerate: bool = False) -> float:
        w = self.width
        if skip_degenerate:
            w = w[~self.degenerate]
        return float(np.prod(w))

    def intersect(self, other: "BoxDomain") -> "BoxDomain | None":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo > hi):
            return None
        return BoxDomain(lo, hi)

    def replace(self, index: int, lo: float, hi: float | None = None) -> "BoxDomain":
        """Copy of the box with one coordinate interval swapped out."""
        new_lo, new_hi = self.lo.copy(), self.hi.copy()
        new_lo[index] = lo
        new_hi[index] = lo if hi is None else hi
        return BoxDomain(new_lo, new_hi)

    def __eq__(self, other):
        if not isinstance(other, BoxDomain):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self):
        ivs = ", ".join(f"[{a:g}, {b:g}]" for a, b in zip(self.lo, self.hi))
        return f"BoxDomain({ivs})"


@dataclass(frozen=True)
class DataPair:
    """One observation ``((x_in, alpha, delta), x_out)``."""

    x_in: np.ndarray
    alpha: np.ndarray
    delta: float
    x_out: np.ndarray

    def __post_init__(self):
        x_in = as_vector(self.x_in, name="x_in")
        x_out = as_vector(self.x_out, x_in.shape[0], name="x_out")
        alpha = as_vector(self.alpha, name="alpha")
        delta = float(self.delta)
        if not (np.isfinite(delta) and delta >= 0.0):
            raise ValueError(f"time lag must be finite and >= 0, got {delta}")
        object.__setattr__(self, "x_in", x_in)
        object.__setattr__(self, "x_out", x_out)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "delta", delta)

    def __eq__(self, other):
        if not isinstance(other, DataPair):
            return NotImplemented
        return (self.delta == other.delta and np.array_equal(self.x_in, other.x_in)
                and np.array_equal(self.alpha, other.alpha) and np.array_equal(self.x_out, other.x_out))

    __hash__ = None


@dataclass
class Trajectory:
    """States of one solution, ``states[k]`` observed at ``times[k]``."""

    times: np.ndarray
    states: np.ndarray
    alpha: np.ndarray
    x0: np.ndarray = field(default=None)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        if self.times.ndim != 1 or self.states.shape[0] != self.times.shape[0]:
            raise DimensionError(
                f"{self.times.shape[0]} times but {self.states.shape[0]} states"
            )
        # zero-length composition steps are allowed in predicted trajectories
        if np.any(np.diff(self.times) < 0):
            raise ValueError("trajectory times must be non-decreasing")
        if self.x0 is None:
            self.x0 = self.states[0].copy()
        else:
            self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))

    @property
    def d(self) -> int:
        return int(self.states.shape[1])

    def __len__(self):
        return int(self.times.shape[0])


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


class Rng:
    """Seeded random stream on numpy's counter-based Philox generator.

    ``Rng(seed).substream("data")`` always yields the same independent stream,
    regardless of how many draws were made from the parent or its siblings.
    """

    def __init__(self, seed: int = 0, _path: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._path = tuple(_path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self._path)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def substream(self, label: str | int) -> "Rng":
        key = label if isinstance(label, int) else _label_key(label)
        return Rng(self.seed, self._path + (key,))

    def uniform(self, lo, hi, size=None) -> np.ndarray:
        return self.generator.uniform(lo, hi, size)

    def normal(self, loc=0.0, scale=1.0, size=None) -> np.ndarray:
        return self.generator.normal(loc, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self._path})"


def sample_uniform_box(domain: BoxDomain, rng: Rng, n: int | None = None) -> np.ndarray:
    """Uniform draw from ``domain``; returns shape ``(dim,)`` or ``(n, dim)``.

    Degenerate coordinates return their fixed value without consuming
    different amounts of randomness, so pinning a coordinate does not shift
    the stream seen by the others.
    """
    shape = (domain.dim,) if n is None else (n, domain.dim)
    u = rng.generator.random(shape)
    x = np.minimum(domain.lo + u * domain.width, domain.hi)
    return np.where(domain.degenerate, domain.lo, x)
