"""Counter-based reproducible Gaussian streams.

Every random quantity in the codec (codebook atoms, the shared starting
state) is a slice of a deterministic stream addressed by

    (seed, stream, index)

so that encoder and decoder, or any number of generation workers, obtain
bit-identical values without communicating.  Streams are backed by the
Philox (4x64) counter-based generator, which supports O(1) random access:
counter block ``b`` always yields raw words ``4b .. 4b+3``.

Normals use a fixed Box-Muller convention, evaluated in float32:

    raw word p  ->  u1 = (hi32(p) + 1) * 2**-32   in (0, 1]
                    u2 =  lo32(p)      * 2**-32   in [0, 1)
    value 2p    =  sqrt(-2 ln u1) * cos(2 pi u2)
    value 2p+1  =  sqrt(-2 ln u1) * sin(2 pi u2)

The convention (including the float32 evaluation) is part of the stream
definition and must not change: stored bitstreams depend on it.
"""

from __future__ import annotations

import numpy as np

_WORDS_PER_BLOCK = 4  # Philox4x64 emits 4 uint64 words per counter tick
_TWO_PI = np.float32(2.0 * np.pi)
_INV_2_32 = np.float32(2.0**-32)
_LO_MASK = np.uint64(0xFFFFFFFF)


def _raw_words(seed: int, stream: int, word_start: int, count: int) -> np.ndarray:
    """Raw uint64 words [word_start, word_start+count) of stream (seed, stream)."""
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    block = word_start // _WORDS_PER_BLOCK
    skip = word_start - block * _WORDS_PER_BLOCK
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream], dtype=np.uint64)
    bg = np.random.Philox(key=key, counter=[block, 0, 0, 0])
    raw = bg.random_raw(skip + count)
    return raw[skip:] if skip else raw


def normal_values(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Values [start, start+count) of the Gaussian stream, as float32.

    Any partition of an index range into sub-ranges regenerates the same
    bytes, which is what makes chunked/parallel generation safe.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return np.empty(0, dtype=np.float32)
    pair_start = start // 2
    pair_stop = (start + count + 1) // 2
    raw = _raw_words(seed, stream, pair_start, pair_stop - pair_start)

    u1 = ((raw >> np.uint64(32)).astype(np.float32) + np.float32(1.0)) * _INV_2_32
    u2 = (raw & _LO_MASK).astype(np.float32) * _INV_2_32
    radius = np.sqrt(np.float32(-2.0) * np.log(u1))
    theta = _TWO_PI * u2
    out = np.empty(2 * raw.shape[0], dtype=np.float32)
    out[0::2] = radius * np.cos(theta)
    out[1::2] = radius * np.sin(theta)

    offset = start - 2 * pair_start
    return out[offset : offset + count]


def normal_matrix(
    seed: int,
    stream: int,
    rows: int,
    cols: int,
    *,
    col_start: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """Columns [col_start, col_start+cols) of the stream laid out rows-first.

    Column ``j`` of the full matrix occupies stream values
    ``[j*rows, (j+1)*rows)``; the result is identical for any ``workers``.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    total = rows * cols
    start = rows * col_start
    if workers == 1 or cols < 2 * workers:
        flat = normal_values(seed, stream, start, total)
    else:
        # Chunk on column boundaries; each chunk is an independent slice of
        # the same stream, so the concatenation is exact.
        bounds = np.linspace(0, cols, workers + 1, dtype=np.int64)
        flat = np.empty(total, dtype=np.float32)
        from concurrent.futures import ThreadPoolExecutor

        def fill(lo: int, hi: int) -> None:
            flat[lo * rows : hi * rows] = normal_values(
                seed, stream, start + lo * rows, (hi - lo) * rows
            )

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: fill(*b), zip(bounds[:-1], bounds[1:])))
    return flat.reshape((rows, cols), order="F")
