"""Evaluation: frame expansion, ROC construction, AUROC, EER, reports."""

import numpy as np
import pytest

from fightscore.core import CorpusManifest, VideoRecord
from fightscore.errors import MetricError
from fightscore.metrics import (
    auroc,
    corpus_report,
    eer,
    eer_operating_point,
    expand_to_frames,
    roc_curve,
    video_accuracy,
)


def pair_count_auroc(scores, truth):
    """Mann-Whitney statistic by brute force: ties credit half a pair."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    pos = scores[truth]
    neg = scores[~truth]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (pos.size * neg.size)


class TestExpandToFrames:
    def test_two_clips_exact_cover(self):
        frames = expand_to_frames(np.array([0.1, 0.9]), 32, 64)
        np.testing.assert_array_equal(frames[:32], 0.1)
        np.testing.assert_array_equal(frames[32:], 0.9)

    def test_trailing_frames_reuse_last_clip(self):
        frames = expand_to_frames(np.array([0.1, 0.9]), 32, 70)
        assert frames.size == 70
        np.testing.assert_array_equal(frames[64:], 0.9)

    def test_single_clip_constant(self):
        frames = expand_to_frames(np.array([0.4]), 32, 40)
        np.testing.assert_array_equal(frames, np.full(40, 0.4))

    def test_inconsistent_clip_count_rejected(self):
        with pytest.raises(ValueError):
            expand_to_frames(np.array([0.1, 0.9, 0.5]), 32, 64)

    def test_max_preserved(self):
        rng = np.random.default_rng(60)
        for _ in range(20):
            m = int(rng.integers(1, 12))
            t = int(rng.integers(1, 40))
            extra = int(rng.integers(0, t))
            scores = rng.uniform(0, 1, size=m)
            frames = expand_to_frames(scores, t, m * t + extra)
            assert frames.max() == scores.max()
            assert frames.min() == scores.min()


class TestRocCurve:
    def test_perfect_scores_pass_through_top_left(self):
        curve = roc_curve(np.array([0.9, 0.1]), np.array([1, 0]))
        points = set(zip(curve.fpr.tolist(), curve.tpr.tolist()))
        assert (0.0, 1.0) in points

    def test_inverted_scores_pass_through_bottom_right(self):
        curve = roc_curve(np.array([0.1, 0.9]), np.array([1, 0]))
        points = set(zip(curve.fpr.tolist(), curve.tpr.tolist()))
        assert (1.0, 0.0) in points

    def test_all_tied_scores_collapse_to_diagonal_endpoints(self):
        curve = roc_curve(np.full(6, 0.5), np.array([1, 0, 1, 0, 1, 0]))
        np.testing.assert_array_equal(curve.fpr, [0.0, 1.0])
        np.testing.assert_array_equal(curve.tpr, [0.0, 1.0])

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            roc_curve(np.array([0.1, 0.9]), np.array([1, 1]))
        with pytest.raises(MetricError):
            roc_curve(np.array([0.1, 0.9]), np.array([0, 0]))

    def test_rates_monotone_and_anchored(self):
        rng = np.random.default_rng(61)
        for _ in range(30):
            n = int(rng.integers(4, 120))
            scores = rng.uniform(0, 1, size=n)
            truth = rng.integers(0, 2, size=n)
            if truth.all() or not truth.any():
                truth[0] = 1 - truth[0]
            curve = roc_curve(scores, truth)
            assert (np.diff(curve.fpr) >= 0).all()
            assert (np.diff(curve.tpr) >= 0).all()
            assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
            assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
            assert curve.thresholds[0] == np.inf

    def test_counts_recorded(self):
        curve = roc_curve(np.array([0.2, 0.4, 0.6]), np.array([0, 1, 1]))
        assert (curve.n_pos, curve.n_neg) == (2, 1)


class TestAuroc:
    def test_perfect_is_one(self):
        assert auroc(roc_curve(np.array([0.9, 0.8, 0.1]), np.array([1, 1, 0]))) == 1.0

    def test_all_tied_is_half(self):
        assert auroc(roc_curve(np.full(4, 0.3), np.array([1, 0, 1, 0]))) == 0.5

    def test_matches_pair_counting(self):
        rng = np.random.default_rng(62)
        for i in range(50):
            n = int(rng.integers(5, 50))
            # Quantize half the instances so ties actually occur.
            scores = rng.uniform(0, 1, size=n)
            if i % 2:
                scores = np.round(scores, 1)
            truth = rng.integers(0, 2, size=n)
            if truth.all() or not truth.any():
                truth[0] = 1 - truth[0]
            got = auroc(roc_curve(scores, truth))
            want = pair_count_auroc(scores, truth)
            assert abs(got - want) < 1e-9

    def test_rank_invariance(self):
        rng = np.random.default_rng(63)
        scores = rng.uniform(0, 1, size=40)
        truth = rng.integers(0, 2, size=40)
        truth[0] = 1
        truth[1] = 0
        base = auroc(roc_curve(scores, truth))
        warped = auroc(roc_curve(np.tanh(3 * scores) + 2, truth))
        assert abs(base - warped) < 1e-12

    def test_complement_sums_to_one_without_ties(self):
        rng = np.random.default_rng(64)
        scores = rng.permutation(np.linspace(0.01, 0.99, 30))
        truth = rng.integers(0, 2, size=30)
        truth[0] = 1
        truth[1] = 0
        a = auroc(roc_curve(scores, truth))
        b = auroc(roc_curve(1.0 - scores, truth))
        assert abs(a + b - 1.0) < 1e-12


class TestEer:
    def test_perfect_is_zero(self):
        assert eer(roc_curve(np.array([0.9, 0.8, 0.1]), np.array([1, 1, 0]))) == 0.0

    def test_anti_perfect_is_one(self):
        assert eer(roc_curve(np.array([0.1, 0.9]), np.array([1, 0]))) == 1.0

    def test_all_tied_balanced_is_half(self):
        assert eer(roc_curve(np.full(4, 0.7), np.array([1, 0, 1, 0]))) == 0.5

    def test_rates_equal_at_returned_point(self):
        rng = np.random.default_rng(65)
        for _ in range(40):
            n = int(rng.integers(6, 150))
            scores = rng.uniform(0, 1, size=n)
            truth = rng.integers(0, 2, size=n)
            if truth.all() or not truth.any():
                truth[0] = 1 - truth[0]
            curve = roc_curve(scores, truth)
            fpr, fnr = eer_operating_point(curve)
            assert abs(fpr - fnr) < 1e-6
            assert eer(curve) == fpr
            assert 0.0 <= fpr <= 1.0


class TestVideoAccuracy:
    def test_all_correct(self):
        scores = [np.array([0.9, 0.2]), np.array([0.1, 0.3])]
        assert video_accuracy(scores, [1, 0]) == 1.0

    def test_all_wrong(self):
        scores = [np.array([0.2]), np.array([0.8])]
        assert video_accuracy(scores, [1, 0]) == 0.0

    def test_two_of_three(self):
        scores = [np.array([0.9]), np.array([0.1]), np.array([0.2])]
        assert video_accuracy(scores, [1, 0, 1]) == pytest.approx(2 / 3)

    def test_threshold_is_inclusive(self):
        assert video_accuracy([np.array([0.5])], [1]) == 1.0


def toy_manifest():
    # Two labeled videos with truth plus one abnormal video without truth.
    videos = (
        VideoRecord(video_id="n0", label=0, feature_path="n0.fsq", num_frames=8),
        VideoRecord(
            video_id="a0",
            label=1,
            feature_path="a0.fsq",
            num_frames=8,
            frame_truth=np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=np.uint8),
        ),
        VideoRecord(video_id="a1", label=1, feature_path="a1.fsq", num_frames=8),
    )
    return CorpusManifest(videos=videos, feature_dim=2, clip_len=4)


class TestCorpusReport:
    def test_report_keys_and_trace_alignment(self):
        manifest = toy_manifest()
        clip_scores = {
            "n0": np.array([0.1, 0.2]),
            "a0": np.array([0.3, 0.8]),
            "a1": np.array([0.9, 0.9]),
        }
        report, traces = corpus_report(manifest, clip_scores)
        assert set(report) == {"auroc", "eer", "video_accuracy", "n_frames", "n_videos"}
        assert report["n_videos"] == 3
        # a1 has no truth, so only n0 and a0 contribute frames.
        assert report["n_frames"] == 16
        for trace, rec in zip(traces, manifest.videos):
            assert len(trace["frame_scores"]) == rec.num_frames

    def test_perfect_scorer_reports_unit_auroc(self):
        manifest = toy_manifest()
        clip_scores = {
            "n0": np.array([0.0, 0.0]),
            "a0": np.array([0.0, 1.0]),
            "a1": np.array([1.0, 1.0]),
        }
        report, _ = corpus_report(manifest, clip_scores)
        assert report["auroc"] == 1.0
        assert report["eer"] == 0.0
        assert report["video_accuracy"] == 1.0

    def test_macro_average_uses_mixed_truth_videos_only(self):
        manifest = toy_manifest()
        clip_scores = {
            "n0": np.array([0.4, 0.4]),
            "a0": np.array([0.2, 0.9]),
            "a1": np.array([0.5, 0.5]),
        }
        report, _ = corpus_report(manifest, clip_scores, macro_average=True)
        # Only a0 has both classes in its own truth and it is perfectly ranked.
        assert report["auroc"] == 1.0

    def test_no_truth_anywhere_rejected(self):
        videos = (
            VideoRecord(video_id="a1", label=1, feature_path="a1.fsq", num_frames=8),
        )
        manifest = CorpusManifest(videos=videos, feature_dim=2, clip_len=4)
        with pytest.raises(MetricError):
            corpus_report(manifest, {"a1": np.array([0.9, 0.9])})
