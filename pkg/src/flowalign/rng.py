"""Named deterministic random streams.

Every stochastic draw in the pipeline (dataset rendering, weight init,
noise, timestep draws, label dropout, sampler noise) comes from a
Philox4x64-10 counter-based generator keyed by a 64-bit seed plus a path
of labels, e.g. ``stream(seed, "train", "eps", step)``. A given
(seed, path) always yields the same values, independent of platform,
call order, or thread count, which is what makes runs bit-reproducible.

String labels are mapped to 32-bit words with CRC-32; integer labels are
used as-is (callers keep ints < 2**32 and never mix a raw int with a
string at the same path position, so paths cannot collide).
"""

from __future__ import annotations

import zlib

import numpy as np

Label = int | str


def _label_word(label: Label) -> int:
    if isinstance(label, (int, np.integer)):
        value = int(label)
        if not 0 <= value < 2**32:
            raise ValueError(f"integer stream labels must be in [0, 2**32), got {value}")
        return value
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    raise TypeError(f"stream labels must be int or str, got {type(label).__name__}")


def stream(seed: int, *path: Label) -> np.random.Generator:
    """Return the generator for a named stream.

    The same (seed, path) always produces an identical stream.
    """
    entropy = int(seed) & 0xFFFFFFFFFFFFFFFF
    key = tuple(_label_word(p) for p in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy, spawn_key=key)))


def normal32(seed: int, *path: Label, shape: tuple[int, ...]) -> np.ndarray:
    """Standard-normal float32 draw from a named stream."""
    return stream(seed, *path).standard_normal(shape, dtype=np.float32)


def uniform32(seed: int, *path: Label, shape: tuple[int, ...]) -> np.ndarray:
    """Uniform [0,1) float32 draw from a named stream."""
    return stream(seed, *path).random(shape, dtype=np.float32)
