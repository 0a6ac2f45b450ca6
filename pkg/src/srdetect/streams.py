"""Splittable, counter-keyed random streams.

Every random draw in the package comes from a SplitMix64 sequence whose
starting point is a hash of ``(seed, purpose..., replication[, branch])``.
Replication ``i`` therefore sees the same numbers however many replications
are requested and however they are scheduled across threads.

The arithmetic is written twice, once as numba functions for the compiled
simulators and once in plain Python for :class:`Substream`; the two agree
bit for bit on uniforms.
"""
from __future__ import annotations

import hashlib
import math

import numba as nb
import numpy as np

__all__ = ["RandomStreams", "Substream", "purpose_key"]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO_PI = 6.283185307179586
_U53 = 1.1102230246251565e-16  # 2**-53

_UG = np.uint64(_GOLDEN)
_UM1 = np.uint64(_M1)
_UM2 = np.uint64(_M2)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)


def _mix_py(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def _combine_py(h: int, key: int) -> int:
    return _mix_py(h ^ _mix_py((key + _GOLDEN) & _MASK))


def purpose_key(name: str) -> int:
    """Stable 64-bit key for a purpose label."""
    return int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")


@nb.njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _UM1
    z = (z ^ (z >> _S27)) * _UM2
    return z ^ (z >> _S31)


@nb.njit(inline="always", cache=True)
def combine(h, key):
    return mix64(h ^ mix64(np.uint64(key) + _UG))


@nb.njit(inline="always", cache=True)
def next_uniform(s):
    """Advance state ``s``; return ``(s, u)`` with ``u`` uniform on the open interval (0, 1)."""
    s = s + _UG
    return s, (np.float64(mix64(s) >> _S11) + 0.5) * _U53


@nb.njit(inline="always", cache=True)
def next_normal(s):
    s, u1 = next_uniform(s)
    s, u2 = next_uniform(s)
    return s, np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


class Substream:
    """One replication's generator; mirrors the compiled draws."""

    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state & _MASK

    def uniform(self) -> float:
        self.state = (self.state + _GOLDEN) & _MASK
        return ((_mix_py(self.state) >> 11) + 0.5) * _U53

    def normal(self) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)

    def draw(self, model, post: bool) -> float:
        a0, b0, a1, b1 = (float(v) for v in model.params)
        if model.family == "gaussian_mean_shift":
            return (a1 if post else a0) + b0 * self.normal()
        if model.family == "bernoulli":
            return 1.0 if self.uniform() < (a1 if post else a0) else 0.0
        return -math.log(self.uniform()) / (a1 if post else a0)


class RandomStreams:
    """Root of a tree of independent substreams.

    >>> root = RandomStreams(7)
    >>> arl = root.spawn("arl")
    >>> s0 = arl.substream(0)     # replication 0
    >>> b = arl.substream(0, 12)  # replication 0, branch 12
    """

    def __init__(self, seed: int, _root: int | None = None, _path: tuple = ()):
        seed = int(seed)
        if not 0 <= seed <= _MASK:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self.path = _path
        self.root = _mix_py((seed + _GOLDEN) & _MASK) if _root is None else _root

    def spawn(self, *keys: str | int) -> "RandomStreams":
        root = self.root
        for key in keys:
            k = purpose_key(key) if isinstance(key, str) else int(key) & _MASK
            root = _combine_py(root, k)
        return RandomStreams(self.seed, root, self.path + keys)

    def substream(self, rep: int, *branch: int) -> Substream:
        h = _combine_py(self.root, rep)
        for b in branch:
            h = _combine_py(h, b)
        return Substream(h)

    @property
    def root_u64(self) -> np.uint64:
        return np.uint64(self.root)

    def __repr__(self) -> str:
        return f"RandomStreams(seed={self.seed}, path={self.path!r})"


def as_streams(rng) -> RandomStreams:
    """Accept a :class:`RandomStreams` or a plain integer seed."""
    if isinstance(rng, RandomStreams):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RandomStreams(int(rng))
    raise TypeError(f"expected RandomStreams or an integer seed, got {type(rng).__name__}")
