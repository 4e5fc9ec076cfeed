"""Counter-based uniform streams keyed on (seed, trajectory, channel, leg).

Every variate is a pure function of its key and its position in the stream,
so coupled finite-difference legs and parallel workers reproduce bit-for-bit
regardless of execution order. The block cipher is Philox4x32-10; one block
yields four 32-bit words, consumed as two double-precision uniforms.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = [
    "Leg",
    "Coupling",
    "StreamKey",
    "UniformStream",
    "open_stream",
    "crn_keys",
    "philox4x32",
    "derive_seed",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


class Leg(enum.IntEnum):
    NOMINAL = 0
    PERTURBED_PLUS = 1
    PERTURBED_MINUS = 2


class Coupling(enum.Enum):
    IRN = "IRN"
    CRN = "CRN"
    CRP = "CRP"


@nb.njit(cache=True, nogil=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds on a 128-bit counter and 64-bit key.

    All arguments are uint64 holding 32-bit values; returns four uint64
    holding the 32-bit output words.
    """
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SHIFT
        lo0 = p0 & _MASK
        hi1 = p1 >> _SHIFT
        lo1 = p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(cache=True, nogil=True, inline="always")
def _to_open_unit(a, b):
    # 53-bit mantissa from two words, offset by half an ulp: never 0 or 1
    m = ((a >> np.uint64(5)) << np.uint64(26)) | (b >> np.uint64(6))
    return (np.float64(m) + 0.5) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True, nogil=True)
def uniform_pair(seed, block, trajectory_index, channel_index, leg):
    """The two uniforms in block ``block`` of one stream.

    Counter layout: (block, trajectory_index, channel_index, leg); the key is
    the 64-bit seed split into two 32-bit halves.
    """
    s = np.uint64(seed)
    k0 = s & _MASK
    k1 = s >> _SHIFT
    w0, w1, w2, w3 = philox4x32(
        np.uint64(block) & _MASK,
        np.uint64(trajectory_index) & _MASK,
        np.uint64(channel_index) & _MASK,
        np.uint64(leg) & _MASK,
        k0,
        k1,
    )
    return _to_open_unit(w0, w1), _to_open_unit(w2, w3)


@nb.njit(cache=True, nogil=True)
def _fill_uniforms(seed, trajectory_index, channel_index, leg, start, out):
    # start counts variates, two per block
    n = out.shape[0]
    i = 0
    pos = start
    while i < n:
        u0, u1 = uniform_pair(seed, pos // 2, trajectory_index, channel_index, leg)
        if pos % 2 == 0:
            out[i] = u0
            i += 1
            pos += 1
            if i < n:
                out[i] = u1
                i += 1
                pos += 1
        else:
            out[i] = u1
            i += 1
            pos += 1


@dataclass(frozen=True)
class StreamKey:
    """Identity of one uniform stream.

    ``channel_index`` 0 is the direct-method stream; ``k >= 1`` is the
    internal Poisson clock of reaction channel ``k``.
    """

    seed: int
    trajectory_index: int
    channel_index: int = 0
    leg: Leg = Leg.NOMINAL

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 0 <= self.trajectory_index < 2**32:
            raise ValueError("trajectory_index must fit in 32 bits")
        if not 0 <= self.channel_index < 2**32:
            raise ValueError("channel_index must fit in 32 bits")
        object.__setattr__(self, "leg", Leg(self.leg))


class UniformStream:
    """Single-consumer source of uniform(0, 1) variates for one key."""

    def __init__(self, key: StreamKey):
        self.key = key
        self._pos = 0

    @property
    def position(self) -> int:
        return self._pos

    def random(self, size: int | None = None):
        n = 1 if size is None else int(size)
        out = np.empty(n, dtype=np.float64)
        k = self.key
        _fill_uniforms(k.seed, k.trajectory_index, k.channel_index, int(k.leg), self._pos, out)
        self._pos += n
        return float(out[0]) if size is None else out

    def __iter__(self):
        while True:
            yield self.random()


def open_stream(key: StreamKey) -> UniformStream:
    return UniformStream(key)


def crn_keys(seed: int, trajectory_index: int, coupling: Coupling | str = Coupling.CRN,
             two_sided: bool = False) -> tuple[StreamKey, StreamKey]:
    """Stream keys for the (lower, upper) legs of one coupled pair.

    CRN and CRP give both legs the same key, so the legs consume identical
    variates (CRP callers derive the per-channel clocks from it by setting
    ``channel_index``). IRN gives the legs distinct ``leg`` fields. For a
    one-sided pair the lower leg is the nominal one; a two-sided pair uses
    the minus and plus legs.
    """
    coupling = Coupling(coupling)
    if coupling is Coupling.IRN:
        lower = Leg.PERTURBED_MINUS if two_sided else Leg.NOMINAL
        return (StreamKey(seed, trajectory_index, 0, lower),
                StreamKey(seed, trajectory_index, 0, Leg.PERTURBED_PLUS))
    key = StreamKey(seed, trajectory_index, 0, Leg.NOMINAL)
    return key, key


def derive_seed(master_seed: int, *labels) -> int:
    """64-bit seed for one study cell, derived from the master seed and labels.

    Labels are hashed through ``numpy.random.SeedSequence`` so distinct cells
    draw from unrelated key spaces.
    """
    words = []
    for lab in labels:
        if isinstance(lab, str):
            words.extend(lab.encode())
        else:
            words.append(int(lab))
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(words))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
