"""Counter-based random streams.

Every network realization is addressed by ``(seed, sample_index)``; within
it every parameter ``(layer, row, column)`` owns two fixed 64-bit words.
The words are read straight out of a Philox stream at a computed counter
offset, so any block of samples can be regenerated independently and the
result never depends on how the index range is split across workers.
"""
from __future__ import annotations

import secrets

import numpy as np

_WORDS_PER_COUNTER = 4  # Philox4x64 emits four words per counter step
_STREAM_TAG = 0x65766770  # fixed second key word, separates us from other Philox users
_MASK64 = (1 << 64) - 1


def words_per_sample(n_entries: int) -> int:
    """Words reserved per realization: two per parameter, rounded to a counter step."""
    w = 2 * n_entries
    return -(-w // _WORDS_PER_COUNTER) * _WORDS_PER_COUNTER


def _key(seed: int) -> np.ndarray:
    return np.array([int(seed) & _MASK64, _STREAM_TAG], dtype=np.uint64)


def raw_words(seed: int, start: int, count: int, n_entries: int) -> np.ndarray:
    """Raw words for samples ``start .. start+count-1``, shape ``(count, words)``."""
    if start < 0 or count < 0:
        raise ValueError("sample range must be nonnegative")
    wps = words_per_sample(n_entries)
    counter = start * (wps // _WORDS_PER_COUNTER)
    bitgen = np.random.Philox(key=_key(seed), counter=counter)
    return bitgen.random_raw(count * wps).reshape(count, wps)


def to_unit(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles on (0, 1] using the top 53 bits."""
    return ((words >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def fresh_seed() -> int:
    return secrets.randbits(63)
