"""Counter-based random streams for order-independent parallel episodes.

Philox4x32-10 evaluated as a pure function of (seed, episode, step, attempt):
any episode/step draws its randomness without generator state, so batched and
sequential simulations produce bit-identical paths regardless of scheduling.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)

_INV32 = float(2.0**-32)


def philox4x32(c0, c1, c2, c3, k0, k1, rounds=10):
    """One Philox4x32 block per counter entry; returns four uint32 words.

    Counter and key components broadcast like numpy arrays.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint32) for c in (c0, c1, c2, c3))
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    c0, c1, c2, c3 = c0.copy(), c1.copy(), c2.copy(), c3.copy()
    k0 = np.uint32(k0)
    k1 = np.uint32(k1)
    with np.errstate(over="ignore"):  # uint32 wraparound is the algorithm
        for _ in range(rounds):
            p0 = c0.astype(np.uint64) * _M0
            p1 = c2.astype(np.uint64) * _M1
            lo0 = (p0 & _MASK32).astype(np.uint32)
            hi0 = (p0 >> np.uint64(32)).astype(np.uint32)
            lo1 = (p1 & _MASK32).astype(np.uint32)
            hi1 = (p1 >> np.uint64(32)).astype(np.uint32)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return c0, c1, c2, c3


def _key(seed):
    seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    return np.uint32(seed & _MASK32), np.uint32(seed >> np.uint64(32))


def step_uniforms(seed, episode, step, attempt=0):
    """Four uniforms in (0, 1) for (episode, step, attempt), vectorized over episodes.

    Word 0 drives the band draw; words 1-3 feed the move sampler. Retries of a
    rejection sampler increment ``attempt``.
    """
    episode = np.asarray(episode, dtype=np.uint64)
    k0, k1 = _key(seed)
    x0, x1, x2, x3 = philox4x32(
        (episode & _MASK32).astype(np.uint32),
        (episode >> np.uint64(32)).astype(np.uint32),
        np.uint32(step),
        np.uint32(attempt),
        k0,
        k1,
    )
    to_u = lambda w: (w.astype(np.float64) + 0.5) * _INV32
    return to_u(x0), to_u(x1), to_u(x2), to_u(x3)


def substream_generator(seed, *path):
    """numpy Generator on an independent Philox substream keyed by an index path.

    For non-episode Monte Carlo (moment checks, volume estimates) where bulk
    draws matter more than counter addressing.
    """
    return np.random.Generator(np.random.Philox(key=np.uint64(seed), counter=list(path) + [0] * (4 - len(path))))
