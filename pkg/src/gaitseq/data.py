"""Keypoint trajectory data model and on-disk dataset formats.

A dataset is a directory holding a ``manifest.json`` plus one CSV file per
sequence.  The manifest lists ``{"fps": <number>, "sequences": [{"id", "cow_id",
"label", "file"}, ...]}`` where ``file`` is relative to the manifest.  Each
sequence CSV has a fixed 19-column header (``frame`` plus x/y for the nine
keypoints in canonical order) and one row per video frame, frame indices
starting at 0.

Floats are serialized with their shortest round-trip decimal representation
(`repr`), so a load/write cycle reproduces files byte for byte.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_KEYPOINTS = 9
N_FEATURES = 2 * N_KEYPOINTS


class DataError(Exception):
    """Malformed or inconsistent dataset, prediction, or model files."""


class Keypoint(enum.IntEnum):
    """The nine tracked anatomical landmarks, in canonical column order."""

    LEFT_HIND_HOOF = 0
    RIGHT_HIND_HOOF = 1
    LEFT_FRONT_HOOF = 2
    RIGHT_FRONT_HOOF = 3
    NOSE = 4
    FOREHEAD = 5
    WITHERS = 6
    CAUDAL_THORACIC_VERTEBRAE = 7
    SACRUM = 8

    @property
    def short_name(self) -> str:
        return _SHORT_NAMES[self]


_SHORT_NAMES = {
    Keypoint.LEFT_HIND_HOOF: "lh_hoof",
    Keypoint.RIGHT_HIND_HOOF: "rh_hoof",
    Keypoint.LEFT_FRONT_HOOF: "lf_hoof",
    Keypoint.RIGHT_FRONT_HOOF: "rf_hoof",
    Keypoint.NOSE: "nose",
    Keypoint.FOREHEAD: "forehead",
    Keypoint.WITHERS: "withers",
    Keypoint.CAUDAL_THORACIC_VERTEBRAE: "ctv",
    Keypoint.SACRUM: "sacrum",
}

#: Names of the 18 feature columns: x then y per keypoint, keypoints in enum order.
COLUMN_NAMES: tuple[str, ...] = tuple(
    f"{kp.short_name}_{axis}" for kp in Keypoint for axis in ("x", "y")
)

CSV_HEADER: tuple[str, ...] = ("frame",) + COLUMN_NAMES


def column_index(keypoint: Keypoint, axis: str) -> int:
    """Column of `keypoint`'s x or y coordinate in an F x 18 matrix."""
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    return 2 * int(keypoint) + (0 if axis == "x" else 1)


class Label(enum.IntEnum):
    """Binary gait class; LAME is the positive class."""

    NORMAL = 0
    LAME = 1

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise DataError(f"unknown label {text!r} (expected 'normal' or 'lame')") from None

    def to_text(self) -> str:
        return self.name.lower()


@dataclass
class KeypointSequence:
    """One walking sequence: an F x 18 matrix of image-plane coordinates.

    Columns follow :data:`COLUMN_NAMES`; x grows to the right and y grows
    downward, both in pixels.
    """

    sequence_id: str
    cow_id: str
    label: Label
    fps: float
    frames: np.ndarray

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])


@dataclass
class Dataset:
    """An ordered collection of sequences, keyed by unique sequence ids."""

    sequences: list[KeypointSequence]
    manifest_path: Path | None = None
    _by_id: dict[str, KeypointSequence] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._by_id = {s.sequence_id: s for s in self.sequences}
        if len(self._by_id) != len(self.sequences):
            raise DataError("duplicate sequence_id in dataset")

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def by_id(self, sequence_id: str) -> KeypointSequence:
        return self._by_id[sequence_id]

    def sequence_ids(self) -> list[str]:
        return [s.sequence_id for s in self.sequences]

    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.sequences], dtype=np.int64)

    def cow_ids(self) -> list[str]:
        return [s.cow_id for s in self.sequences]


@dataclass(frozen=True)
class DatasetSummary:
    n_sequences: int
    n_normal: int
    n_lame: int
    n_cows: int
    min_frames: int
    mean_frames: float
    max_frames: int


def format_float(value: float) -> str:
    """Canonical float text: shortest decimal that round-trips, '.' separator."""
    return repr(float(value))


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load a dataset from its manifest, preserving manifest order.

    Raises:
        DataError: missing or unreadable files, malformed rows (with the
            offending sequence id and line number), duplicate sequence ids,
            unknown labels, or an empty manifest.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DataError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"unreadable manifest {manifest_path}: {exc}") from exc

    if not isinstance(manifest, dict) or "sequences" not in manifest:
        raise DataError(f"manifest {manifest_path} missing 'sequences' field")
    entries = manifest["sequences"]
    if not entries:
        raise DataError("empty dataset: manifest lists no sequences")
    fps = manifest.get("fps")
    if not isinstance(fps, (int, float)) or not fps > 0:
        raise DataError(f"manifest {manifest_path}: fps must be a positive number")

    base_dir = manifest_path.parent
    sequences: list[KeypointSequence] = []
    seen: set[str] = set()
    for entry in entries:
        for key in ("id", "cow_id", "label", "file"):
            if key not in entry:
                raise DataError(f"manifest entry missing {key!r}: {entry}")
        seq_id = str(entry["id"])
        if seq_id in seen:
            raise DataError(f"duplicate sequence_id {seq_id!r} in manifest")
        seen.add(seq_id)
        cow_id = str(entry["cow_id"])
        if not cow_id:
            raise DataError(f"sequence {seq_id!r}: empty cow_id")
        label = Label.parse(str(entry["label"]))
        frames = _read_sequence_csv(base_dir / entry["file"], seq_id)
        sequences.append(
            KeypointSequence(
                sequence_id=seq_id, cow_id=cow_id, label=label, fps=float(fps), frames=frames
            )
        )
    return Dataset(sequences=sequences, manifest_path=manifest_path)


def _read_sequence_csv(path: Path, seq_id: str) -> np.ndarray:
    if not path.is_file():
        raise DataError(f"sequence {seq_id!r}: file not found: {path}")
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"sequence {seq_id!r}: empty file {path}") from None
        if tuple(header) != CSV_HEADER:
            raise DataError(f"sequence {seq_id!r}: unexpected CSV header in {path}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise DataError(
                    f"sequence {seq_id!r} line {line_no}: expected "
                    f"{len(CSV_HEADER)} values, got {len(row)}"
                )
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise DataError(
                    f"sequence {seq_id!r} line {line_no}: non-numeric value"
                ) from None
            if int(values[0]) != line_no - 2:
                raise DataError(
                    f"sequence {seq_id!r} line {line_no}: frame index "
                    f"{row[0]} out of order"
                )
            coords = values[1:]
            if not all(math.isfinite(v) for v in coords):
                raise DataError(f"sequence {seq_id!r} line {line_no}: non-finite value")
            rows.append(coords)
    if not rows:
        raise DataError(f"sequence {seq_id!r}: no frames in {path}")
    return np.asarray(rows, dtype=np.float64)


def write_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write `dataset` to `out_dir` as manifest.json plus one CSV per sequence.

    CSV files are named ``<sequence_id>.csv`` and use canonical float
    formatting, so writing a freshly loaded dataset reproduces its files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not dataset.sequences:
        raise DataError("empty dataset: nothing to write")
    fps_values = {s.fps for s in dataset.sequences}
    if len(fps_values) != 1:
        raise DataError("cannot write dataset with mixed fps values")
    fps = fps_values.pop()

    entries = []
    for seq in dataset.sequences:
        file_name = f"{seq.sequence_id}.csv"
        _write_sequence_csv(out_dir / file_name, seq)
        entries.append(
            {
                "id": seq.sequence_id,
                "cow_id": seq.cow_id,
                "label": seq.label.to_text(),
                "file": file_name,
            }
        )
    manifest = {"fps": int(fps) if fps == int(fps) else fps, "sequences": entries}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def _write_sequence_csv(path: Path, seq: KeypointSequence) -> None:
    lines = [",".join(CSV_HEADER)]
    for i, row in enumerate(seq.frames):
        lines.append(",".join([str(i)] + [format_float(v) for v in row]))
    path.write_text("\n".join(lines) + "\n")


def dataset_summary(dataset: Dataset) -> DatasetSummary:
    """Class counts, cow count, and frame-length stats (mean to 1 decimal)."""
    if not dataset.sequences:
        raise DataError("empty dataset")
    labels = dataset.labels()
    lengths = [s.n_frames for s in dataset.sequences]
    return DatasetSummary(
        n_sequences=len(dataset),
        n_normal=int(np.sum(labels == Label.NORMAL)),
        n_lame=int(np.sum(labels == Label.LAME)),
        n_cows=len(set(dataset.cow_ids())),
        min_frames=min(lengths),
        mean_frames=round(sum(lengths) / len(lengths), 1),
        max_frames=max(lengths),
    )


def validate_sequence(seq: KeypointSequence, min_frames: int = 90) -> list[str]:
    """Check a sequence against the data-model invariants.

    Returns a list of human-readable violations; empty iff the sequence is
    valid and at least `min_frames` long.  The default length floor matches
    the longest configured crop window.
    """
    violations: list[str] = []
    if not seq.cow_id:
        violations.append("empty cow_id")
    if not seq.fps > 0:
        violations.append(f"fps must be positive, got {seq.fps}")
    frames = seq.frames
    if frames.ndim != 2 or frames.shape[1] != N_FEATURES:
        violations.append(
            f"frames must be F x {N_FEATURES}, got shape {tuple(frames.shape)}"
        )
        return violations
    if frames.shape[0] < 1:
        violations.append("sequence has no frames")
        return violations
    bad = ~np.isfinite(frames)
    if bad.any():
        for f_idx, c_idx in zip(*np.nonzero(bad)):
            violations.append(
                f"non-finite value at frame {f_idx}, column {COLUMN_NAMES[c_idx]}"
            )
    if frames.shape[0] < min_frames:
        violations.append(
            f"too short: {frames.shape[0]} frames < required {min_frames}"
        )
    return violations
