"""Dataset transforms evolved alongside the network.

Two families: per-instance filters (windowing, blur, edges, spectra, ...)
and fit/apply transforms whose statistics come from the train split only.
All transforms are pure; inputs are never mutated and labels pass through
untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import fft as sp_fft
from scipy import ndimage


class PreprocessError(Exception):
    pass


class NotRGB(PreprocessError):
    pass


class NotSingleChannel(PreprocessError):
    pass


class NotImage(PreprocessError):
    pass


class InvalidSigma(PreprocessError):
    pass


class InvalidBins(PreprocessError):
    pass


@dataclass(frozen=True)
class Split:
    x: np.ndarray  # (N, H, W, C) images or (N, D) flat features
    y: np.ndarray  # int labels, shape (N,)


@dataclass(frozen=True)
class DataPair:
    """Train/validation/test splits sharing one instance shape."""

    train: Split
    validation: Split
    test: Split
    n_classes: int

    @property
    def instance_shape(self) -> tuple[int, ...]:
        return tuple(self.train.x.shape[1:])

    @property
    def is_image(self) -> bool:
        return len(self.instance_shape) == 3

    @property
    def channels(self) -> int:
        if not self.is_image:
            raise NotImage("flat instances have no channel axis")
        return self.instance_shape[2]

    def splits(self):
        return (("train", self.train), ("validation", self.validation),
                ("test", self.test))


def _map_splits(d: DataPair, fn: Callable[[np.ndarray], np.ndarray]) -> DataPair:
    return DataPair(Split(fn(d.train.x), d.train.y),
                    Split(fn(d.validation.x), d.validation.y),
                    Split(fn(d.test.x), d.test.y),
                    d.n_classes)


def _require_image(d: DataPair, op: str) -> None:
    if not d.is_image:
        raise NotImage(f"{op} needs image instances, got shape {d.instance_shape}")


def hann_window(n: int) -> np.ndarray:
    """Symmetric Hann taper; a single-sample axis gets the identity window."""
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1)))


def cosine_window(d: DataPair) -> DataPair:
    """Separable Hann taper applied per instance, identically on every split."""
    _require_image(d, "cosine_window")
    h, w, _ = d.instance_shape
    taper = (hann_window(h)[:, None] * hann_window(w)[None, :])[None, :, :, None]
    return _map_splits(d, lambda x: (x * taper).astype(x.dtype))


_LUMA = np.array([0.299, 0.587, 0.114])


def grayscale(d: DataPair) -> DataPair:
    """Collapse RGB to a single luma channel."""
    _require_image(d, "grayscale")
    if d.channels != 3:
        raise NotRGB(f"grayscale needs 3 channels, got {d.channels}")
    return _map_splits(d, lambda x: (x @ _LUMA.astype(x.dtype))[..., None])


@dataclass(frozen=True)
class NormalizeStats:
    """Fit/apply statistics; computed from the train split only."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.mean) / np.maximum(self.std, 1e-8)).astype(x.dtype)


def fit_normalization(train_x: np.ndarray) -> NormalizeStats:
    if train_x.ndim == 4:
        axes = (0, 1, 2)  # per channel
    else:
        axes = (0,)       # per feature
    x64 = train_x.astype(np.float64)
    return NormalizeStats(x64.mean(axis=axes), x64.std(axis=axes))


def normalize_fit_apply(d: DataPair) -> DataPair:
    stats = fit_normalization(d.train.x)
    return _map_splits(d, stats.apply)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    k = np.exp(-np.arange(-radius, radius + 1) ** 2 / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(d: DataPair, sigma: float) -> DataPair:
    """Separable Gaussian filter, kernel cut at radius ceil(3*sigma),
    reflect padding at the borders."""
    if not sigma > 0:
        raise InvalidSigma(f"sigma must be > 0, got {sigma}")
    _require_image(d, "gaussian_blur")
    kernel = gaussian_kernel(sigma)

    def blur(x):
        out = ndimage.correlate1d(x.astype(np.float64), kernel, axis=1, mode="reflect")
        out = ndimage.correlate1d(out, kernel, axis=2, mode="reflect")
        return out.astype(x.dtype)

    return _map_splits(d, blur)


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def sobel_edges(d: DataPair) -> DataPair:
    """Gradient magnitude with the standard 3x3 kernels, reflect padding.

    RGB inputs are reduced by grayscale first; other multi-channel inputs
    use the mean of per-channel magnitudes. Output is single-channel.
    """
    _require_image(d, "sobel_edges")
    if d.channels == 3:
        d = grayscale(d)

    def edge(x):
        x64 = x.astype(np.float64)
        kx = _SOBEL_X[None, :, :, None]
        ky = _SOBEL_Y[None, :, :, None]
        gx = ndimage.correlate(x64, kx, mode="reflect")
        gy = ndimage.correlate(x64, ky, mode="reflect")
        mag = np.sqrt(gx * gx + gy * gy).mean(axis=3, keepdims=True)
        return mag.astype(x.dtype)

    return _map_splits(d, edge)


def fourier_magnitude(d: DataPair) -> DataPair:
    """Centered 2-D DFT magnitude, log1p-compressed. Single-channel only."""
    _require_image(d, "fourier_magnitude")
    if d.channels != 1:
        raise NotSingleChannel("fourier_magnitude needs a single channel")

    def spectrum(x):
        mag = np.abs(np.fft.fft2(x[..., 0].astype(np.float64)))
        mag = np.fft.fftshift(mag, axes=(1, 2))
        return np.log1p(mag)[..., None].astype(x.dtype)

    return _map_splits(d, spectrum)


def dct_transform(d: DataPair) -> DataPair:
    """Orthonormal type-II 2-D DCT per instance. Single-channel only."""
    _require_image(d, "dct_transform")
    if d.channels != 1:
        raise NotSingleChannel("dct_transform needs a single channel")

    def dct2(x):
        out = sp_fft.dctn(x.astype(np.float64), type=2, norm="ortho", axes=(1, 2))
        return out.astype(x.dtype)

    return _map_splits(d, dct2)


def intensity_histogram(d: DataPair, bins: int) -> DataPair:
    """Replace each instance by per-channel normalized intensity counts.

    Values are binned over [0, 1] (clipped); the result is a flat
    (bins * channels) feature vector, so downstream shape becomes flat.
    """
    if bins < 2:
        raise InvalidBins(f"bins must be >= 2, got {bins}")

    def hist(x):
        if x.ndim == 4:
            n, h, w, c = x.shape
            flat = x.reshape(n, h * w, c)
        else:
            n, dim = x.shape
            flat = x.reshape(n, dim, 1)
        c = flat.shape[2]
        idx = np.clip((np.clip(flat, 0.0, 1.0) * bins).astype(np.int64), 0, bins - 1)
        counts = np.zeros((n, c, bins), dtype=np.float64)
        n_idx = np.arange(n)[:, None, None]
        c_idx = np.arange(c)[None, :, None]
        np.add.at(counts, (n_idx, c_idx, idx.swapaxes(1, 2)), 1.0)
        counts /= flat.shape[1]
        return counts.reshape(n, c * bins).astype(x.dtype)

    return _map_splits(d, hist)


def threshold_binarize(d: DataPair, t: float) -> DataPair:
    """Pixel -> 1 where value >= t, else 0."""
    return _map_splits(d, lambda x: (x >= t).astype(x.dtype))


def transform_output_shape(name: str, shape: tuple[int, ...], **params) -> tuple[int, ...]:
    """Declared output instance shape for each transform, given the input shape."""
    if name in ("cosine_window", "normalize_fit_apply", "gaussian_blur",
                "threshold_binarize", "fourier_magnitude", "dct_transform"):
        return shape
    if name == "grayscale":
        return (shape[0], shape[1], 1)
    if name == "sobel_edges":
        return (shape[0], shape[1], 1)
    if name == "intensity_histogram":
        channels = shape[2] if len(shape) == 3 else 1
        return (params["bins"] * channels,)
    raise KeyError(name)
