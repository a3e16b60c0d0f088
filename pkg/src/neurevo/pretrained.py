"""Checkpoint binary format and the small pretrained feature-extractor stubs.

Checkpoint layout (little-endian): a uint32 tensor count, then per tensor a
uint32 rank followed by that many uint32 dims, then the concatenated float32
data of every tensor in declaration order. The same container is used for
trained-model dumps.

Each stub id (1, 2, 3) names a fixed two-block conv feature extractor
(3x3 conv + relu + 2x2 max-pool, twice) with its own weight checkpoint.
The weights stay trainable after loading.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .layertree import STUB_IDS

STUB_NAMES = {1: "vgg_stub", 2: "mobilenet_stub", 3: "inception_stub"}
STUB_FILTERS = (8, 16)
STUB_INPUT_CHANNELS = 3


class CheckpointError(Exception):
    pass


def write_checkpoint(path, tensors: list[np.ndarray]) -> None:
    """Write tensors in the flat float32 container format."""
    parts = [struct.pack("<I", len(tensors))]
    for t in tensors:
        parts.append(struct.pack("<I", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
    for t in tensors:
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path) -> list[np.ndarray]:
    """Read a checkpoint; raises CheckpointError on truncation or trailing bytes."""
    raw = Path(path).read_bytes()
    offset = 0

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(raw):
            raise CheckpointError(f"truncated header at byte {offset}")
        values = struct.unpack_from(fmt, raw, offset)
        offset += size
        return values

    (count,) = take("<I")
    shapes = []
    for _ in range(count):
        (rank,) = take("<I")
        shapes.append(take(f"<{rank}I"))
    tensors = []
    for shape in shapes:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        size = 4 * n
        if offset + size > len(raw):
            raise CheckpointError(f"truncated tensor data at byte {offset}")
        flat = np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
        offset += size
        tensors.append(flat.reshape(shape).copy())
    if offset != len(raw):
        raise CheckpointError(f"{len(raw) - offset} trailing bytes")
    return tensors


def _glorot(rng: np.random.Generator, shape, fan_in, fan_out) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def stub_tensors(stub_id: int) -> list[np.ndarray]:
    """Deterministic weights for one stub: conv1 w/b, conv2 w/b."""
    if stub_id not in STUB_IDS:
        raise ValueError(f"unknown stub id {stub_id}")
    rng = np.random.default_rng(7000 + stub_id)
    f1, f2 = STUB_FILTERS
    c = STUB_INPUT_CHANNELS
    return [
        _glorot(rng, (3, 3, c, f1), 9 * c, 9 * f1),
        np.zeros(f1, dtype=np.float32),
        _glorot(rng, (3, 3, f1, f2), 9 * f1, 9 * f2),
        np.zeros(f2, dtype=np.float32),
    ]


class StubStore:
    """Provider of stub weights, optionally backed by checkpoint files.

    With a directory, checkpoints are written on first use and loaded from
    disk afterwards; without one, the deterministic tensors are served from
    memory.
    """

    def __init__(self, directory: Optional[str] = None):
        self.directory = Path(directory) if directory else None
        self._cache: dict[int, list[np.ndarray]] = {}

    def path_for(self, stub_id: int) -> Path:
        if self.directory is None:
            raise ValueError("store has no backing directory")
        return self.directory / f"stub_{stub_id}.bin"

    def tensors(self, stub_id: int) -> list[np.ndarray]:
        if stub_id not in STUB_IDS:
            raise ValueError(f"unknown stub id {stub_id}")
        if stub_id not in self._cache:
            if self.directory is None:
                self._cache[stub_id] = stub_tensors(stub_id)
            else:
                path = self.path_for(stub_id)
                if not path.exists():
                    self.directory.mkdir(parents=True, exist_ok=True)
                    write_checkpoint(path, stub_tensors(stub_id))
                self._cache[stub_id] = read_checkpoint(path)
        return [t.copy() for t in self._cache[stub_id]]
