"""Counter-based standard-normal streams.

Every draw is addressed by ``(seed, stream, row)``: row ``i`` of a stream
always produces the same normals no matter which chunk of rows is generated
or in what order.  This is what lets scenario sets be built in streaming
chunks while staying bit-identical to a one-shot generation.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_WORDS_PER_BLOCK = 4  # Philox4x64 emits four 64-bit words per counter increment
_MANTISSA = 2.0**-53

# stream identifiers; the low 40 bits carry an index (macro-run, outer scenario)
TRAIN = 1
OUTER = 2
INNER = 3
NESTED_OUTER = 4
NESTED_INNER = 5
VALUATION = 6
MISC = 7


def stream_id(kind: int, index: int = 0, sub: int = 0) -> int:
    """Pack a stream kind, an index and a sub-index into one 64-bit id."""
    if not 0 <= index < 2**40 or not 0 <= sub < 2**16:
        raise ValueError("stream index out of range")
    return (kind << 56) | (sub << 40) | index


def normals(seed: int, stream: int, start: int, rows: int, width: int) -> np.ndarray:
    """Return a ``(rows, width)`` block of N(0, 1) draws for rows ``start..start+rows``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must fit in 64 bits")
    if rows < 0 or width < 1 or start < 0:
        raise ValueError("invalid block shape")
    blocks = -(-width // _WORDS_PER_BLOCK)
    padded = blocks * _WORDS_PER_BLOCK
    bg = np.random.Philox(key=seed | (stream << 64), counter=start * blocks)
    raw = bg.random_raw(rows * padded).reshape(rows, padded)[:, :width]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _MANTISSA
    return ndtri(u)
