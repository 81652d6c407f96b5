"""Synthetic two-class walking-cow trajectories with known separability.

The generator lays out a side-view cow walking in +x (image coordinates,
y grows downward).  Hooves follow a cycloidal stance/swing template: a hoof
stays planted for the stance fraction of each gait cycle, then swings forward
by one stride length along a smooth profile with a vertical lift arc.  Body
keypoints drift at the walking speed; the head keypoints bob vertically once
per cycle and the back keypoints carry a constant upward arch offset.

Class structure mirrors real lameness cues: the lame class walks with a
longer stride period, slower speed, stronger head bob, and an arched back.
Labels are assigned per cow so grouped cross-validation has real structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataError, Dataset, Keypoint, KeypointSequence, Label, write_dataset
from .seeding import stable_seed

# Rest-pose geometry (pixels): x offsets from the body origin, y absolute.
GROUND_Y = 260.0
_BODY_POSE = {
    Keypoint.NOSE: (230.0, 150.0),
    Keypoint.FOREHEAD: (205.0, 120.0),
    Keypoint.WITHERS: (150.0, 110.0),
    Keypoint.CAUDAL_THORACIC_VERTEBRAE: (110.0, 105.0),
    Keypoint.SACRUM: (70.0, 110.0),
}
_HOOF_X = {
    Keypoint.LEFT_HIND_HOOF: 60.0,
    Keypoint.RIGHT_HIND_HOOF: 80.0,
    Keypoint.LEFT_FRONT_HOOF: 150.0,
    Keypoint.RIGHT_FRONT_HOOF: 170.0,
}
# Lateral-walk footfall phases, as fractions of the gait cycle.
_HOOF_PHASE = {
    Keypoint.LEFT_HIND_HOOF: 0.0,
    Keypoint.RIGHT_HIND_HOOF: 0.5,
    Keypoint.LEFT_FRONT_HOOF: 0.25,
    Keypoint.RIGHT_FRONT_HOOF: 0.75,
}
# Head bob hits both head keypoints equally, so the forehead-nose distance
# (the jitter length scale) stays constant.
_HEAD_KEYPOINTS = (Keypoint.NOSE, Keypoint.FOREHEAD)


@dataclass(frozen=True)
class GaitParams:
    """Kinematic template parameters for one gait class."""

    stride_period: float  # frames per full gait cycle
    walk_speed: float  # body drift, px/frame
    head_bob_amplitude: float  # px
    back_arch_offset: float  # px, upward shift of the mid-back
    noise_sigma: float = 0.0  # additive Gaussian noise, px
    fps: float = 30.0
    duty_factor: float = 0.6  # stance fraction of the cycle
    swing_lift: float = 6.0  # hoof lift at mid-swing, px

    def __post_init__(self) -> None:
        if self.stride_period < 2:
            raise ValueError(f"stride_period must be >= 2 frames, got {self.stride_period}")
        for name in ("walk_speed", "head_bob_amplitude", "back_arch_offset", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 < self.duty_factor < 1.0:
            raise ValueError("duty_factor must be in (0, 1)")

    @classmethod
    def normal(cls, noise_sigma: float = 0.0) -> "GaitParams":
        """Sound gait: 31-frame strides, brisk walk, small head bob."""
        return cls(
            stride_period=31.0,
            walk_speed=3.0,
            head_bob_amplitude=3.0,
            back_arch_offset=0.0,
            noise_sigma=noise_sigma,
        )

    @classmethod
    def lame(cls, noise_sigma: float = 0.0) -> "GaitParams":
        """Impaired gait: 45-frame strides, slower, bobbing head, arched back."""
        return cls(
            stride_period=45.0,
            walk_speed=2.0,
            head_bob_amplitude=8.0,
            back_arch_offset=12.0,
            noise_sigma=noise_sigma,
        )


def _cycle_progress(u: np.ndarray, duty: float) -> np.ndarray:
    """Monotone staircase advancing 1.0 per cycle: flat in stance, smooth in swing."""
    whole = np.floor(u)
    w = u - whole
    swing = np.clip((w - duty) / (1.0 - duty), 0.0, 1.0)
    # Cycloid-style ease-in/out: zero velocity at both ends of the swing.
    profile = swing - np.sin(2.0 * math.pi * swing) / (2.0 * math.pi)
    return whole + profile


def _swing_height(u: np.ndarray, duty: float, lift: float) -> np.ndarray:
    w = u - np.floor(u)
    swing = np.clip((w - duty) / (1.0 - duty), 0.0, 1.0)
    return lift * np.sin(math.pi * swing)


def generate_sequence(
    label: Label,
    params: GaitParams,
    n_frames: int,
    cow_id: str,
    rng: np.random.Generator,
    sequence_id: str | None = None,
) -> KeypointSequence:
    """Generate one trajectory of `n_frames` for the given class template."""
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    t = np.arange(n_frames, dtype=np.float64)
    stride_length = params.walk_speed * params.stride_period
    frames = np.empty((n_frames, 18), dtype=np.float64)

    for kp, base_x in _HOOF_X.items():
        u = t / params.stride_period + _HOOF_PHASE[kp]
        x = base_x + stride_length * _cycle_progress(u, params.duty_factor)
        y = GROUND_Y - _swing_height(u, params.duty_factor, params.swing_lift)
        frames[:, 2 * kp] = x
        frames[:, 2 * kp + 1] = y

    drift = params.walk_speed * t
    bob = params.head_bob_amplitude * np.sin(2.0 * math.pi * t / params.stride_period)
    for kp, (base_x, base_y) in _BODY_POSE.items():
        x = base_x + drift
        y = np.full(n_frames, base_y)
        if kp in _HEAD_KEYPOINTS:
            y = y + bob
        if kp is Keypoint.CAUDAL_THORACIC_VERTEBRAE:
            y = y - params.back_arch_offset
        elif kp in (Keypoint.WITHERS, Keypoint.SACRUM):
            y = y - 0.4 * params.back_arch_offset
        frames[:, 2 * kp] = x
        frames[:, 2 * kp + 1] = y

    if params.noise_sigma > 0:
        frames = frames + rng.normal(0.0, params.noise_sigma, size=frames.shape)

    return KeypointSequence(
        sequence_id=sequence_id if sequence_id is not None else f"{cow_id}-0",
        cow_id=cow_id,
        label=label,
        fps=params.fps,
        frames=frames,
    )


def generate_dataset(
    n_cows: int,
    seqs_per_cow: int,
    lame_fraction: float,
    normal_params: GaitParams,
    lame_params: GaitParams,
    seed: int,
    out_dir: str | Path | None = None,
    frame_range: tuple[int, int] = (90, 207),
) -> Dataset:
    """Generate a cow-labelled dataset; optionally write it to disk.

    Each cow gets one class for all its sequences and its own derived RNG
    stream, so the dataset is a pure function of the arguments.  Sequence
    lengths are drawn uniformly from `frame_range` (inclusive).
    """
    if n_cows < 2:
        raise DataError(f"need at least 2 cows, got {n_cows}")
    if seqs_per_cow < 1:
        raise DataError(f"seqs_per_cow must be >= 1, got {seqs_per_cow}")
    if normal_params.fps != lame_params.fps:
        raise DataError("normal and lame templates must share one fps")
    n_lame = round(n_cows * lame_fraction)
    if n_lame < 1 or n_lame >= n_cows:
        raise DataError(
            f"infeasible class split: lame_fraction {lame_fraction} gives "
            f"{n_lame}/{n_cows} lame cows; both classes must be represented"
        )

    label_rng = np.random.default_rng(stable_seed(seed, "cow-labels"))
    lame_cows = set(label_rng.permutation(n_cows)[:n_lame].tolist())

    lo, hi = frame_range
    sequences: list[KeypointSequence] = []
    for ci in range(n_cows):
        cow_id = f"cow{ci:03d}"
        label = Label.LAME if ci in lame_cows else Label.NORMAL
        params = lame_params if label == Label.LAME else normal_params
        cow_rng = np.random.default_rng(stable_seed(seed, "cow", cow_id, int(label)))
        for si in range(seqs_per_cow):
            n_frames = int(cow_rng.integers(lo, hi + 1))
            sequences.append(
                generate_sequence(
                    label, params, n_frames, cow_id, cow_rng, sequence_id=f"{cow_id}-{si}"
                )
            )
    dataset = Dataset(sequences=sequences)
    if out_dir is not None:
        manifest = write_dataset(dataset, out_dir)
        dataset.manifest_path = manifest
    return dataset
