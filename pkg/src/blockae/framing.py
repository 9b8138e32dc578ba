"""Random bit-frame generation, batching, and on-disk serialization.

A frame is a flat vector of ``bits_per_block * block_count`` bits, read as
``block_count`` consecutive blocks of ``bits_per_block`` bits. Bits are kept
as integers in {0, 1} everywhere outside the model boundary so error counting
stays exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

DATASET_MAGIC = 0x53544942  # ascii "BITS", little-endian
DATASET_VERSION = 1
_HEADER = struct.Struct("<6I")  # magic, version, bits_per_block, block_count, count, seed


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of random bit frames.

    ``frames`` has shape ``(count, bits_per_block * block_count)`` and dtype
    uint8. Regenerating with the same (seed, count, bits_per_block,
    block_count) yields bit-identical frames.
    """

    frames: np.ndarray
    bits_per_block: int
    block_count: int
    seed: int
    role: str = "train"

    @property
    def frame_bits(self) -> int:
        return self.bits_per_block * self.block_count

    def __len__(self) -> int:
        return self.frames.shape[0]


def generate_dataset(
    count: int, bits_per_block: int, block_count: int, seed: int, role: str = "train"
) -> Dataset:
    """Draw ``count`` frames of i.i.d. uniform bits, deterministically."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if bits_per_block < 1 or block_count < 1:
        raise ValueError(
            f"bits_per_block and block_count must be >= 1, got "
            f"({bits_per_block}, {block_count})"
        )
    rng = np.random.default_rng(seed)
    frames = rng.integers(0, 2, size=(count, bits_per_block * block_count), dtype=np.uint8)
    return Dataset(frames=frames, bits_per_block=bits_per_block, block_count=block_count,
                   seed=seed, role=role)


def batch_iterator(dataset: Dataset, batch_size: int, shuffle_seed: int) -> Iterator[np.ndarray]:
    """Yield every frame exactly once, in a shuffle determined by ``shuffle_seed``.

    The final partial batch is yielded. Each yielded array is a copy, safe to
    mutate downstream.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("dataset is empty")
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch_size must be in [1, {n}], got {batch_size}")
    order = np.random.default_rng(shuffle_seed).permutation(n)
    for start in range(0, n, batch_size):
        yield dataset.frames[order[start:start + batch_size]].copy()


def frame_stream(
    bits_per_block: int, block_count: int, seed: int, batch_size: int
) -> Iterator[np.ndarray]:
    """Infinite stream of fresh random frame batches.

    Used by Monte-Carlo sweeps that need far more bits than any fixed test
    set contains. Deterministic given ``seed``; each worker should own its
    own seed.
    """
    if bits_per_block < 1 or block_count < 1 or batch_size < 1:
        raise ValueError("bits_per_block, block_count, and batch_size must be >= 1")
    rng = np.random.default_rng(seed)
    frame_bits = bits_per_block * block_count
    while True:
        yield rng.integers(0, 2, size=(batch_size, frame_bits), dtype=np.uint8)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset as a small header plus MSB-first packed bits.

    Header fields are little-endian u32: magic, version, bits_per_block,
    block_count, count, seed. The seed must fit in 32 bits.
    """
    if not 0 <= dataset.seed < 2**32:
        raise ValueError(f"on-disk format stores the seed as u32, got {dataset.seed}")
    payload = np.packbits(dataset.frames.reshape(-1))
    header = _HEADER.pack(DATASET_MAGIC, DATASET_VERSION, dataset.bits_per_block,
                          dataset.block_count, len(dataset), dataset.seed)
    Path(path).write_bytes(header + payload.tobytes())


def load_dataset(path, role: str = "train") -> Dataset:
    """Read a dataset written by :func:`save_dataset`."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: file too short to hold a dataset header")
    magic, version, bits_per_block, block_count, count, seed = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise ValueError(f"{path}: bad magic 0x{magic:08x}")
    if version != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    total_bits = count * bits_per_block * block_count
    payload = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size)
    if len(payload) != (total_bits + 7) // 8:
        raise ValueError(f"{path}: payload length does not match header")
    bits = np.unpackbits(payload)[:total_bits]
    frames = bits.reshape(count, bits_per_block * block_count)
    return Dataset(frames=frames, bits_per_block=bits_per_block, block_count=block_count,
                   seed=seed, role=role)


def as_test_set(dataset: Dataset) -> Dataset:
    return replace(dataset, role="test")
