"""Dataset loading: synthetic image generators and the CIFAR-10 binary format.

Loaders are pure given (files, seed) and never write. Synthetic sets use a
stratified 70/15/15 split; CIFAR-10 uses the published 50,000/10,000 split
with a validation fraction carved out of train.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .preprocess import DataPair, Split

CIFAR_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6)) + ("test_batch.bin",)
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3072 pixel bytes
SYNTHETIC_KINDS = ("blobs", "rings", "bars")


class DatasetError(Exception):
    pass


class MissingFile(DatasetError):
    pass


class TruncatedRecord(DatasetError):
    def __init__(self, file: str, offset: int):
        self.file = file
        self.offset = offset
        super().__init__(f"{file}: truncated record at byte offset {offset}")


class LabelOutOfRange(DatasetError):
    pass


def stratified_split(y: np.ndarray, fractions: tuple[float, float, float],
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class allocation into three splits; counts per class are exact ±1."""
    buckets: tuple[list, list, list] = ([], [], [])
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        n = len(idx)
        n0 = round(n * fractions[0])
        n1 = round(n * fractions[1])
        buckets[0].extend(idx[:n0])
        buckets[1].extend(idx[n0:n0 + n1])
        buckets[2].extend(idx[n0 + n1:])
    return tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets)


def _assemble(x, y, n_classes, fractions, rng) -> DataPair:
    tr, va, te = stratified_split(y, fractions, rng)
    return DataPair(Split(x[tr], y[tr]), Split(x[va], y[va]), Split(x[te], y[te]),
                    n_classes)


def _gauss_bump(h, w, cy, cx, sigma):
    yy, xx = np.mgrid[0:h, 0:w]
    return np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma ** 2))


AMBIGUOUS_TEST_FRACTION = 0.04  # duplicated-feature pairs injected into the test split


def _inject_ambiguous_pairs(test: Split, rng: np.random.Generator) -> Split:
    """Copy features between differently-labeled test instances.

    Each pair shares identical features but different labels, so every
    deterministic classifier misses at least one of the two; this pins the
    best reachable test accuracy strictly below 1.
    """
    n = len(test.y)
    pairs = max(1, int(round(AMBIGUOUS_TEST_FRACTION * n / 2)))
    x = test.x.copy()
    used: set[int] = set()
    for _ in range(pairs):
        candidates = [i for i in range(n) if i not in used]
        a = int(candidates[rng.integers(len(candidates))])
        others = [i for i in candidates if test.y[i] != test.y[a] and i != a]
        if not others:
            break
        b = int(others[rng.integers(len(others))])
        x[b] = x[a]
        used.update((a, b))
    return Split(x, test.y)


def make_blobs(n: int, height: int, width: int, seed: int, n_classes: int = 3) -> DataPair:
    """Gaussian blobs whose class is carried by position only.

    Class means are well separated spatially, but pixels sit on a large DC
    offset with low contrast, so gradient descent on the raw values is slow:
    given a generous budget any dense probe solves the task, while under a
    tight epoch budget pipelines that normalize the data first converge far
    sooner. That keeps architecture and preprocessing choices consequential.
    """
    rng = np.random.default_rng(seed)
    positions = [(0.32, 0.32), (0.5, 0.5), (0.68, 0.68), (0.32, 0.68)][:n_classes]
    amplitude = np.array([0.22, 0.20, 0.18])
    y = np.arange(n) % n_classes
    x = np.empty((n, height, width, 3), dtype=np.float32)
    for i in range(n):
        c = y[i]
        cy = positions[c][0] * (height - 1) + rng.normal(0, 0.25)
        cx = positions[c][1] * (width - 1) + rng.normal(0, 0.25)
        bump = _gauss_bump(height, width, cy, cx, 0.10 * max(height, width))
        img = 0.72 + bump[:, :, None] * amplitude[None, None, :]
        img = img + rng.normal(0, 0.045, size=img.shape)
        x[i] = np.clip(img, 0.0, 1.0)
    pair = _assemble(x, y, n_classes, (0.7, 0.15, 0.15), rng)
    return DataPair(pair.train, pair.validation,
                    _inject_ambiguous_pairs(pair.test, rng), n_classes)


def make_rings(n: int, height: int, width: int, seed: int) -> DataPair:
    """Two classes: filled disk versus annulus."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = np.empty((n, height, width, 3), dtype=np.float32)
    yy, xx = np.mgrid[0:height, 0:width]
    for i in range(n):
        cy = (height - 1) / 2 + rng.normal(0, 0.3)
        cx = (width - 1) / 2 + rng.normal(0, 0.3)
        r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        outer = 0.38 * min(height, width)
        if y[i] == 0:
            mask = (r <= outer).astype(np.float32)
        else:
            mask = ((r <= outer) & (r >= 0.55 * outer)).astype(np.float32)
        img = mask[:, :, None] * np.array([0.9, 0.8, 0.3]) \
            + rng.normal(0, 0.08, size=(height, width, 3))
        x[i] = np.clip(img, 0.0, 1.0)
    return _assemble(x, y, 2, (0.7, 0.15, 0.15), rng)


def make_bars(n: int, height: int, width: int, seed: int) -> DataPair:
    """Two classes: horizontal versus vertical stripes."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = np.empty((n, height, width, 3), dtype=np.float32)
    for i in range(n):
        phase = rng.uniform(0, np.pi)
        idx = np.arange(height if y[i] == 0 else width)
        wave = 0.5 + 0.45 * np.sin(idx * np.pi / 2 + phase)
        img = np.tile(wave[:, None] if y[i] == 0 else wave[None, :],
                      (1, width) if y[i] == 0 else (height, 1))
        img = img[:, :, None] * np.array([0.7, 0.7, 0.9]) \
            + rng.normal(0, 0.08, size=(height, width, 3))
        x[i] = np.clip(img, 0.0, 1.0)
    return _assemble(x, y, 2, (0.7, 0.15, 0.15), rng)


def make_synthetic(kind: str, n: int = 240, height: int = 8, width: int = 8,
                   seed: int = 0) -> DataPair:
    if n < 30:
        raise DatasetError("synthetic datasets need n >= 30")
    if kind == "blobs":
        return make_blobs(n, height, width, seed)
    if kind == "rings":
        return make_rings(n, height, width, seed)
    if kind == "bars":
        return make_bars(n, height, width, seed)
    raise DatasetError(f"unknown synthetic kind {kind!r}")


def _read_cifar_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    raw = path.read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
        raise TruncatedRecord(path.name, len(raw) - len(raw) % CIFAR_RECORD_BYTES)
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.max(initial=0) > 9:
        raise LabelOutOfRange(f"{path.name}: label {labels.max()} outside [0, 9]")
    pixels = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return (pixels.astype(np.float32) / 255.0), labels


def load_cifar10(directory, val_fraction: float = 0.1, seed: int = 0) -> DataPair:
    """Load the six binary batch files; validation is carved from train."""
    directory = Path(directory)
    xs, ys = [], []
    for name in CIFAR_FILES:
        path = directory / name
        if not path.exists():
            raise MissingFile(f"missing CIFAR-10 batch file {path}")
        x, y = _read_cifar_file(path)
        xs.append(x)
        ys.append(y)
    x_test, y_test = xs.pop(), ys.pop()
    x_train = np.concatenate(xs)
    y_train = np.concatenate(ys)
    rng = np.random.default_rng(seed)
    val_count = {cls: int(round(val_fraction * np.count_nonzero(y_train == cls)))
                 for cls in np.unique(y_train)}
    val_idx = []
    for cls, count in val_count.items():
        idx = np.flatnonzero(y_train == cls)
        val_idx.extend(idx[rng.permutation(len(idx))[:count]])
    val_mask = np.zeros(len(y_train), dtype=bool)
    val_mask[np.array(val_idx, dtype=np.int64)] = True
    return DataPair(Split(x_train[~val_mask], y_train[~val_mask]),
                    Split(x_train[val_mask], y_train[val_mask]),
                    Split(x_test, y_test), 10)


@dataclass(frozen=True)
class DatasetSpec:
    """Parsed dataset selector, e.g. ``blobs:n=300,seed=7`` or ``cifar10:dir=...``."""

    kind: str
    params: tuple[tuple[str, str], ...] = ()

    @classmethod
    def parse(cls, text: str) -> "DatasetSpec":
        kind, _, rest = text.partition(":")
        kind = kind.strip()
        if kind not in SYNTHETIC_KINDS + ("cifar10",):
            raise DatasetError(f"unknown dataset kind {kind!r}")
        params = []
        if rest.strip():
            for piece in rest.split(","):
                key, sep, value = piece.partition("=")
                if not sep:
                    raise DatasetError(f"malformed dataset parameter {piece!r}")
                params.append((key.strip(), value.strip()))
        return cls(kind, tuple(sorted(params)))

    def get(self, key: str, default=None):
        for k, v in self.params:
            if k == key:
                return v
        return default

    @property
    def canonical_id(self) -> str:
        if not self.params:
            return self.kind
        return self.kind + ":" + ",".join(f"{k}={v}" for k, v in self.params)

    def load(self, val_fraction: float = 0.1) -> DataPair:
        if self.kind == "cifar10":
            directory = self.get("dir")
            if not directory:
                raise DatasetError("cifar10 needs a dir=... parameter")
            return load_cifar10(directory, val_fraction, int(self.get("seed", "0")))
        allowed = {"n", "height", "width", "seed"}
        unknown = [k for k, _ in self.params if k not in allowed]
        if unknown:
            raise DatasetError(f"unknown dataset parameters {unknown}")
        return make_synthetic(self.kind,
                              n=int(self.get("n", "240")),
                              height=int(self.get("height", "8")),
                              width=int(self.get("width", "8")),
                              seed=int(self.get("seed", "0")))
