"""Tests for the synthetic gait generator, with signal-based oracles."""

import numpy as np
import pytest

from gaitseq.data import (
    DataError,
    Keypoint,
    Label,
    column_index,
    load_dataset,
    validate_sequence,
)
from gaitseq.synthetic import GaitParams, generate_dataset, generate_sequence


def estimate_stride_period(seq, lag_range=(15, 70)):
    """Dominant period of the left-hind-hoof forward velocity.

    Independent oracle: autocorrelation of the x-velocity signal, peak
    location over physiological lags.
    """
    x = seq.frames[:, column_index(Keypoint.LEFT_HIND_HOOF, "x")]
    v = np.diff(x)
    v = v - v.mean()
    lo, hi = lag_range
    hi = min(hi, len(v) - 1)
    scores = [np.dot(v[: len(v) - lag], v[lag:]) for lag in range(lo, hi + 1)]
    return lo + int(np.argmax(scores))


class TestGaitParams:
    def test_class_templates_follow_stride_facts(self):
        normal = GaitParams.normal()
        lame = GaitParams.lame()
        assert normal.stride_period == 31.0
        assert lame.stride_period == 45.0
        assert lame.walk_speed < normal.walk_speed
        assert lame.head_bob_amplitude > normal.head_bob_amplitude
        assert lame.back_arch_offset > 0.0 == normal.back_arch_offset
        assert normal.fps == lame.fps == 30.0

    def test_validation(self):
        with pytest.raises(ValueError):
            GaitParams(stride_period=1, walk_speed=1, head_bob_amplitude=0, back_arch_offset=0)
        with pytest.raises(ValueError):
            GaitParams(stride_period=30, walk_speed=-1, head_bob_amplitude=0, back_arch_offset=0)


class TestGenerateSequence:
    def test_deterministic(self):
        params = GaitParams.normal(noise_sigma=2.0)
        a = generate_sequence(Label.NORMAL, params, 120, "cow1", np.random.default_rng(5))
        b = generate_sequence(Label.NORMAL, params, 120, "cow1", np.random.default_rng(5))
        assert np.array_equal(a.frames, b.frames)

    def test_shape_and_validity(self):
        seq = generate_sequence(
            Label.LAME, GaitParams.lame(noise_sigma=1.0), 95, "cow2", np.random.default_rng(6)
        )
        assert seq.frames.shape == (95, 18)
        assert validate_sequence(seq, min_frames=90) == []

    def test_normal_stride_period_near_31(self):
        params = GaitParams.normal(noise_sigma=2.0)
        for seed in range(5):
            seq = generate_sequence(
                Label.NORMAL, params, 180, f"c{seed}", np.random.default_rng(seed)
            )
            assert abs(estimate_stride_period(seq) - 31) <= 2

    def test_lame_stride_period_near_45(self):
        params = GaitParams.lame(noise_sigma=2.0)
        for seed in range(5):
            seq = generate_sequence(
                Label.LAME, params, 180, f"c{seed}", np.random.default_rng(seed)
            )
            assert abs(estimate_stride_period(seq) - 45) <= 2

    def test_head_bob_amplitude_visible(self):
        quiet = generate_sequence(
            Label.NORMAL, GaitParams.normal(), 150, "c", np.random.default_rng(0)
        )
        bobbing = generate_sequence(
            Label.LAME, GaitParams.lame(), 150, "c", np.random.default_rng(0)
        )
        col = column_index(Keypoint.NOSE, "y")
        assert bobbing.frames[:, col].std() > quiet.frames[:, col].std() * 2

    def test_back_arch_shifts_mid_back_up(self):
        flat = generate_sequence(
            Label.NORMAL, GaitParams.normal(), 60, "c", np.random.default_rng(0)
        )
        arched = generate_sequence(
            Label.LAME, GaitParams.lame(), 60, "c", np.random.default_rng(0)
        )
        col = column_index(Keypoint.CAUDAL_THORACIC_VERTEBRAE, "y")
        # image y grows downward, so an arched back has smaller y
        assert arched.frames[:, col].mean() < flat.frames[:, col].mean() - 10

    def test_head_length_constant_without_noise(self):
        from gaitseq.augment import head_length

        seq = generate_sequence(
            Label.LAME, GaitParams.lame(), 100, "c", np.random.default_rng(0)
        )
        fx = seq.frames[:, column_index(Keypoint.FOREHEAD, "x")]
        fy = seq.frames[:, column_index(Keypoint.FOREHEAD, "y")]
        nx = seq.frames[:, column_index(Keypoint.NOSE, "x")]
        ny = seq.frames[:, column_index(Keypoint.NOSE, "y")]
        dists = np.hypot(fx - nx, fy - ny)
        assert dists.std() < 1e-9
        assert head_length(seq) > 0

    def test_hooves_advance_at_walk_speed_on_average(self):
        params = GaitParams.normal()
        seq = generate_sequence(Label.NORMAL, params, 31 * 4 + 1, "c", np.random.default_rng(0))
        col = column_index(Keypoint.RIGHT_HIND_HOOF, "x")
        x = seq.frames[:, col]
        mean_speed = (x[-1] - x[0]) / (len(x) - 1)
        assert mean_speed == pytest.approx(params.walk_speed, rel=1e-6)


class TestGenerateDataset:
    def test_construction_counts(self):
        ds = generate_dataset(40, 5, 0.5, GaitParams.normal(2.0), GaitParams.lame(2.0), seed=1)
        assert len(ds) == 200
        labels = ds.labels()
        assert int(labels.sum()) == 100
        assert len(set(ds.cow_ids())) == 40
        # cow-level labels: every cow is single-class
        for cow in set(ds.cow_ids()):
            cow_labels = {s.label for s in ds if s.cow_id == cow}
            assert len(cow_labels) == 1

    def test_single_class_split_rejected(self):
        with pytest.raises(DataError, match="infeasible class split"):
            generate_dataset(10, 2, 0.0, GaitParams.normal(), GaitParams.lame(), seed=0)
        with pytest.raises(DataError, match="infeasible class split"):
            generate_dataset(10, 2, 1.0, GaitParams.normal(), GaitParams.lame(), seed=0)

    def test_frame_range(self):
        ds = generate_dataset(12, 3, 0.5, GaitParams.normal(), GaitParams.lame(), seed=2)
        lengths = [s.n_frames for s in ds]
        assert min(lengths) >= 90
        assert max(lengths) <= 207

    def test_sequences_pass_validation(self):
        ds = generate_dataset(6, 2, 0.5, GaitParams.normal(2.0), GaitParams.lame(2.0), seed=3)
        for seq in ds:
            assert validate_sequence(seq, min_frames=90) == []

    def test_hash_is_pure_function_of_arguments(self):
        a = generate_dataset(8, 2, 0.5, GaitParams.normal(1.0), GaitParams.lame(1.0), seed=4)
        b = generate_dataset(8, 2, 0.5, GaitParams.normal(1.0), GaitParams.lame(1.0), seed=4)
        for s1, s2 in zip(a, b):
            assert s1.sequence_id == s2.sequence_id
            assert s1.label == s2.label
            assert np.array_equal(s1.frames, s2.frames)
        c = generate_dataset(8, 2, 0.5, GaitParams.normal(1.0), GaitParams.lame(1.0), seed=5)
        assert any(
            not np.array_equal(s1.frames, s3.frames) for s1, s3 in zip(a, c)
        )

    def test_written_dataset_loads_back_equal(self, tmp_path):
        ds = generate_dataset(
            6, 2, 0.5, GaitParams.normal(1.0), GaitParams.lame(1.0), seed=6,
            out_dir=tmp_path / "ds",
        )
        loaded = load_dataset(tmp_path / "ds" / "manifest.json")
        assert loaded.sequence_ids() == ds.sequence_ids()
        for s1, s2 in zip(ds, loaded):
            assert np.array_equal(s1.frames, s2.frames)
            assert s1.label == s2.label
            assert s1.cow_id == s2.cow_id

    def test_depth_one_rule_on_stride_period_separates_classes(self):
        # A single threshold on the estimated stride period classifies
        # nearly perfectly at the default noise level.
        ds = generate_dataset(40, 5, 0.5, GaitParams.normal(2.0), GaitParams.lame(2.0), seed=7)
        threshold = (31 + 45) / 2
        correct = 0
        for seq in ds:
            period = estimate_stride_period(seq)
            decided = Label.LAME if period > threshold else Label.NORMAL
            correct += decided == seq.label
        assert correct / len(ds) >= 0.99
