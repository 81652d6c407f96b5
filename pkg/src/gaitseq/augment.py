"""Sequence augmentation: temporal crops, coordinate jitter, standardization.

Training samples go through ``random_crop -> jitter -> standardize``; held-out
sequences use the deterministic ``center_crop -> standardize`` path with the
statistics of the training split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataError, Keypoint, KeypointSequence, N_FEATURES, column_index


class SequenceTooShortError(DataError):
    """A crop was requested that is longer than the sequence."""


@dataclass(frozen=True)
class CropWindow:
    """A contiguous frame window [start, start + length)."""

    start: int
    length: int


@dataclass(frozen=True)
class JitterSpec:
    """Gaussian coordinate noise scaled to a fraction of the head length."""

    sigma_fraction: float = 0.01

    def sigma_for(self, seq: KeypointSequence) -> float:
        return self.sigma_fraction * head_length(seq)


def random_crop_window(n_frames: int, length: int, rng: np.random.Generator) -> CropWindow:
    """Window with start drawn uniformly from {0, ..., n_frames - length}."""
    if length < 1:
        raise ValueError(f"crop length must be >= 1, got {length}")
    if n_frames < length:
        raise SequenceTooShortError(
            f"sequence too short: {n_frames} frames < crop length {length}"
        )
    start = int(rng.integers(0, n_frames - length + 1))
    return CropWindow(start=start, length=length)


def random_crop(seq: KeypointSequence, length: int, rng: np.random.Generator) -> np.ndarray:
    """Copy of a uniformly placed window of `length` rows, no interpolation."""
    window = random_crop_window(seq.n_frames, length, rng)
    return seq.frames[window.start : window.start + window.length].copy()


def center_crop_window(n_frames: int, length: int) -> CropWindow:
    """Deterministic middle window, start = floor((F - length) / 2)."""
    if length < 1:
        raise ValueError(f"crop length must be >= 1, got {length}")
    if n_frames < length:
        raise SequenceTooShortError(
            f"sequence too short: {n_frames} frames < crop length {length}"
        )
    return CropWindow(start=(n_frames - length) // 2, length=length)


def center_crop(seq: KeypointSequence, length: int) -> np.ndarray:
    window = center_crop_window(seq.n_frames, length)
    return seq.frames[window.start : window.start + window.length].copy()


def head_length(seq: KeypointSequence) -> float:
    """Mean Euclidean distance between the forehead and nose keypoints.

    One value per sequence: the per-frame distances are averaged so the
    jitter amplitude does not flicker with per-frame pose noise.
    """
    fx = seq.frames[:, column_index(Keypoint.FOREHEAD, "x")]
    fy = seq.frames[:, column_index(Keypoint.FOREHEAD, "y")]
    nx = seq.frames[:, column_index(Keypoint.NOSE, "x")]
    ny = seq.frames[:, column_index(Keypoint.NOSE, "y")]
    return float(np.mean(np.hypot(fx - nx, fy - ny)))


def jitter(matrix: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add independent Normal(0, sigma) noise to every coordinate.

    sigma = 0 returns an untouched copy without consuming the RNG.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return matrix.copy()
    return matrix + rng.normal(0.0, sigma, size=matrix.shape)


@dataclass
class FeatureStats:
    """Per-column mean/std of the 18 features over a training split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != (N_FEATURES,) or self.std.shape != (N_FEATURES,):
            raise ValueError("FeatureStats requires 18 per-column values")
        if np.any(self.std < 0):
            raise ValueError("std must be non-negative")

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "FeatureStats":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(mean=matrix.mean(axis=0), std=matrix.std(axis=0))

    @classmethod
    def from_sequences(cls, seqs: list[KeypointSequence]) -> "FeatureStats":
        return cls.from_matrix(np.concatenate([s.frames for s in seqs], axis=0))


STD_FLOOR = 1e-8


def standardize(matrix: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Map column j to (x - mean_j) / max(std_j, 1e-8).

    Constant columns come out as all zeros thanks to the epsilon guard.
    """
    return (matrix - stats.mean) / np.maximum(stats.std, STD_FLOOR)


def training_view(
    seq: KeypointSequence,
    length: int,
    jitter_spec: JitterSpec,
    stats: FeatureStats | None,
    rng: np.random.Generator,
) -> np.ndarray:
    """One augmented training sample: random crop, jitter, standardize."""
    out = random_crop(seq, length, rng)
    sigma = jitter_spec.sigma_for(seq)
    if sigma > 0:
        out = jitter(out, sigma, rng)
    if stats is not None:
        out = standardize(out, stats)
    return out


def evaluation_view(
    seq: KeypointSequence, length: int, stats: FeatureStats | None
) -> np.ndarray:
    """Deterministic held-out sample: center crop, standardize, no jitter."""
    out = center_crop(seq, length)
    if stats is not None:
        out = standardize(out, stats)
    return out
