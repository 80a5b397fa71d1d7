"""Counter-based normal variates keyed by ``(seed, stream, index, path, step)``.

Every variate is a pure function of its coordinates: a Philox4x32-10 block is
evaluated at counter ``(step // 2, path, index, stream)`` under the 64-bit seed
as key, and its four output words feed one Box-Muller pair (two 53-bit
uniforms). The pair covers steps ``2j`` and ``2j + 1``. Generation order and
worker count therefore cannot change any value.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

_MUL0 = np.uint64(0xD2511F53)
_MUL1 = np.uint64(0xCD9E8D57)
_BUMP0 = 0x9E3779B9
_BUMP1 = 0xBB67AE85
_LO32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_ROUNDS = 10

# stream tags (fourth counter word)
STREAM_BROWNIAN = 0
STREAM_INITIAL = 1
STREAM_MIXTURE = 2

MASK64 = (1 << 64) - 1


def split_seed(seed: int) -> tuple[int, int]:
    seed = int(seed) & MASK64
    return seed & 0xFFFFFFFF, seed >> 32


def philox4x32(c0, c1, c2, c3, key: tuple[int, int]):
    """Philox4x32-10 on arrays of 32-bit counter words (held in uint64)."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    k0, k1 = (int(k) & 0xFFFFFFFF for k in key)
    for r in range(_ROUNDS):
        p0 = _MUL0 * c0
        p1 = _MUL1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _LO32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _LO32,
        )
        k0 = (k0 + _BUMP0) & 0xFFFFFFFF
        k1 = (k1 + _BUMP1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _uniform53(hi, lo):
    # (0, 1]: never zero so the logarithm below stays finite
    return (((hi >> np.uint64(5)) << np.uint64(26)) + (lo >> np.uint64(6)) + np.uint64(1)) * (1.0 / 2.0**53)


def _normal_block(seed: int, stream: int, index: int, n_paths: int, n_cols: int) -> np.ndarray:
    """Standard normals of shape ``(n_paths, n_cols)`` for one index."""
    n_pairs = (n_cols + 1) // 2
    pair = np.arange(n_pairs, dtype=np.uint64)[None, :]
    path = np.arange(n_paths, dtype=np.uint64)[:, None]
    c0 = np.broadcast_to(pair, (n_paths, n_pairs))
    c1 = np.broadcast_to(path, (n_paths, n_pairs))
    c2 = np.full((n_paths, n_pairs), index, dtype=np.uint64)
    c3 = np.full((n_paths, n_pairs), stream, dtype=np.uint64)
    w0, w1, w2, w3 = philox4x32(c0, c1, c2, c3, split_seed(seed))
    radius = np.sqrt(-2.0 * np.log(_uniform53(w0, w1)))
    angle = (2.0 * np.pi) * _uniform53(w2, w3)
    out = np.empty((n_paths, 2 * n_pairs))
    out[:, 0::2] = radius * np.cos(angle)
    out[:, 1::2] = radius * np.sin(angle)
    return out[:, :n_cols]


def keyed_normals(
    seed: int,
    stream: int,
    n_index: int,
    n_paths: int,
    n_cols: int,
    workers: int = 1,
    indices=None,
) -> np.ndarray:
    """Array ``(len(indices), n_paths, n_cols)`` of independent N(0, 1) variates.

    Entry ``[a, m, k]`` depends only on ``(seed, stream, indices[a], m, k)``.
    Indices are split across ``workers`` threads; each writes a disjoint slice.
    """
    if indices is None:
        indices = range(n_index)
    indices = [int(i) for i in indices]
    if min(n_paths, n_cols) < 1 or not indices:
        raise ValueError("all dimensions must be >= 1")
    out = np.empty((len(indices), n_paths, n_cols))

    def fill(a: int) -> None:
        out[a] = _normal_block(seed, stream, indices[a], n_paths, n_cols)

    if workers <= 1:
        for a in range(len(indices)):
            fill(a)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, range(len(indices))))
    return out
