"""Mixed-radix index arithmetic shared by all modules.

Global convention: a configuration ``(x_1, ..., x_m)`` over base ``B`` maps
to the flat index ``sum_i x_i * B**(m - i)`` -- the first coordinate is the
most significant digit.  Index sets (parent sets, row/column groups) are
always sorted ascending before their coordinates are packed.  This is
exactly NumPy's C-order ravel of an ``(B,) * m`` array, which the rest of
the package relies on.
"""

from __future__ import annotations

import numpy as np


def encode(config, base: int) -> int:
    """Flat index of a single configuration, first coordinate most significant."""
    idx = 0
    for x in config:
        if not 0 <= x < base:
            raise ValueError(f"coordinate {x} out of range for base {base}")
        idx = idx * base + int(x)
    return idx


def decode(index: int, base: int, length: int) -> tuple[int, ...]:
    """Inverse of :func:`encode`."""
    if not 0 <= index < base**length:
        raise ValueError(f"index {index} out of range for base {base}^{length}")
    digits = []
    for _ in range(length):
        index, d = divmod(index, base)
        digits.append(d)
    return tuple(reversed(digits))


def all_configs(base: int, length: int) -> np.ndarray:
    """All configurations in ascending flat-index order.

    Returns an ``(base**length, length)`` int array whose row ``i`` is
    ``decode(i, base, length)``.
    """
    n = base**length
    out = np.empty((n, length), dtype=np.int64)
    idx = np.arange(n)
    for pos in range(length - 1, -1, -1):
        idx, out[:, pos] = np.divmod(idx, base)
    return out


def digit(index, base: int, length: int, pos: int):
    """Digit at position ``pos`` (0 = most significant); vectorized over ``index``."""
    return (index // base ** (length - 1 - pos)) % base


def subcode(index, base: int, length: int, positions) -> np.ndarray:
    """Flat code of the sub-configuration at ``positions`` (given in pack order).

    Vectorized over ``index``: extracts the digits at ``positions`` and packs
    them most-significant-first in the order listed.
    """
    index = np.asarray(index)
    out = np.zeros_like(index)
    for p in positions:
        out = out * base + digit(index, base, length, p)
    return out
