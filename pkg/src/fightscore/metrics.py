"""Frame-level evaluation: score expansion, ROC, AUROC, EER, video accuracy.

Clip scores stand for every frame they cover, so evaluation first expands
them to frame length, then sweeps score thresholds. AUROC is the trapezoidal
area under the resulting curve (equal to the Mann-Whitney pair statistic with
ties counted half) and EER is the point where false positive and false
negative rates cross.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CorpusManifest, ScoreSequence, expected_clip_count
from .errors import MetricError


@dataclass(frozen=True)
class RocCurve:
    """Operating points ordered by descending threshold.

    A +inf sentinel threshold contributes the (0, 0) endpoint; the lowest
    observed score makes every frame predicted-positive, contributing (1, 1).
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int
    n_neg: int

    def __post_init__(self):
        thr = np.asarray(self.thresholds, dtype=np.float64)
        fpr = np.asarray(self.fpr, dtype=np.float64)
        tpr = np.asarray(self.tpr, dtype=np.float64)
        if not (thr.shape == fpr.shape == tpr.shape) or thr.ndim != 1 or thr.size < 2:
            raise MetricError("curve arrays must be equal-length vectors with >= 2 points")
        # Ordered by descending threshold, so the rates only ever grow.
        if (np.diff(fpr) < 0).any() or (np.diff(tpr) < 0).any():
            raise MetricError("fpr and tpr must be non-decreasing along the curve")
        if fpr[0] != 0.0 or tpr[0] != 0.0 or fpr[-1] != 1.0 or tpr[-1] != 1.0:
            raise MetricError("curve must run from (0, 0) to (1, 1)")
        for name, arr in (("thresholds", thr), ("fpr", fpr), ("tpr", tpr)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def expand_to_frames(clip_scores, clip_len: int, num_frames: int) -> np.ndarray:
    """Give every frame the score of its clip.

    Frame j maps to clip min(j // clip_len, M - 1): trailing frames past the
    last full clip reuse the last clip's score.
    """
    if isinstance(clip_scores, ScoreSequence):
        clip_scores = clip_scores.scores
    scores = np.asarray(clip_scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size < 1:
        raise ValueError("clip_scores must be a non-empty vector")
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")
    if clip_len < 1:
        raise ValueError(f"clip_len must be >= 1, got {clip_len}")
    m = scores.size
    expected = expected_clip_count(num_frames, clip_len)
    if m != expected:
        raise ValueError(
            f"{m} clip scores inconsistent with num_frames={num_frames}, "
            f"clip_len={clip_len} (expected {expected})"
        )
    idx = np.minimum(np.arange(num_frames, dtype=np.int64) // clip_len, m - 1)
    return scores[idx]


def roc_curve(frame_scores: np.ndarray, frame_truth: np.ndarray) -> RocCurve:
    """Threshold sweep over the unique score values, descending.

    A frame is predicted positive iff its score >= the threshold, so each
    unique value contributes one operating point and ties collapse onto a
    single point.
    """
    scores = np.asarray(frame_scores, dtype=np.float64)
    truth = np.asarray(frame_truth)
    if scores.shape != truth.shape or scores.ndim != 1:
        raise MetricError(
            f"scores and truth must be equal-length vectors, got {scores.shape} and {truth.shape}"
        )
    if not np.isfinite(scores).all():
        raise MetricError("frame scores must be finite")
    truth = truth.astype(bool)
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError(
            f"frame truth has a single class ({n_pos} positive, {n_neg} negative); "
            "AUROC is undefined"
        )
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    t = truth[order]
    # Last index of each run of equal scores = the point where that threshold
    # has admitted every frame scoring >= it.
    last = np.nonzero(np.diff(s))[0]
    idx = np.concatenate([last, [s.size - 1]])
    tp = np.cumsum(t)[idx]
    fp = np.cumsum(~t)[idx]
    thresholds = np.concatenate([[np.inf], s[idx]])
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, n_pos=n_pos, n_neg=n_neg)


def auroc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    return float(np.trapezoid(curve.tpr, curve.fpr))


def _eer_crossing(curve: RocCurve) -> tuple[float, float]:
    """The (fpr, fnr) pair where they meet, interpolated between samples.

    diff = fpr - fnr runs from -1 at (0, 0) to +1 at (1, 1) and is
    non-decreasing, so a crossing always exists.
    """
    fpr = curve.fpr
    fnr = 1.0 - curve.tpr
    diff = fpr - fnr
    k = int(np.searchsorted(diff, 0.0, side="left"))
    if diff[k] == 0.0:
        return float(fpr[k]), float(fnr[k])
    u = -diff[k - 1] / (diff[k] - diff[k - 1])
    f = fpr[k - 1] + u * (fpr[k] - fpr[k - 1])
    n = fnr[k - 1] + u * (fnr[k] - fnr[k - 1])
    return float(f), float(n)


def eer(curve: RocCurve) -> float:
    """Equal error rate: the fpr where fpr = 1 - tpr, interpolated linearly.

    If a sample point achieves the equality exactly, that point's fpr is
    returned; otherwise the crossing between the two adjacent samples.
    """
    f, _ = _eer_crossing(curve)
    return f


def eer_operating_point(curve: RocCurve) -> tuple[float, float]:
    """The (fpr, fnr) at the equal-error crossing; the two coincide there."""
    return _eer_crossing(curve)


def video_accuracy(
    clip_scores: list[np.ndarray], video_labels: list[int], threshold: float = 0.5
) -> float:
    """A video is predicted positive iff its maximum clip score >= threshold."""
    if len(clip_scores) != len(video_labels) or not clip_scores:
        raise MetricError("need equal, non-empty score and label lists")
    correct = 0
    for scores, label in zip(clip_scores, video_labels):
        pred = 1 if float(np.max(scores)) >= threshold else 0
        correct += pred == label
    return correct / len(video_labels)


def corpus_report(
    manifest: CorpusManifest,
    clip_scores: dict[str, np.ndarray],
    macro_average: bool = False,
    threshold: float = 0.5,
) -> tuple[dict, list[dict]]:
    """Frame-level metrics plus per-video score traces for a scored corpus.

    Frame truth comes from each record's frame_truth; label-0 videos without
    one count as all zeros, label-1 videos without one are skipped for the
    frame metrics (their truth is unknown) but still count toward video
    accuracy. Micro averaging concatenates frames across videos; macro
    averaging means per-video AUROC/EER over videos whose own truth has both
    classes.
    """
    per_video_scores: list[np.ndarray] = []
    per_video_truth: list[np.ndarray | None] = []
    traces: list[dict] = []
    for rec in manifest.videos:
        scores = np.asarray(clip_scores[rec.video_id], dtype=np.float64)
        frames = expand_to_frames(scores, manifest.clip_len, rec.num_frames)
        if rec.frame_truth is not None:
            truth = np.asarray(rec.frame_truth, dtype=bool)
        elif rec.label == 0:
            truth = np.zeros(rec.num_frames, dtype=bool)
        else:
            truth = None
        per_video_scores.append(frames)
        per_video_truth.append(truth)
        traces.append(
            {
                "video_id": rec.video_id,
                "clip_scores": [float(v) for v in scores],
                "frame_scores": [float(v) for v in frames],
            }
        )

    known = [i for i, t in enumerate(per_video_truth) if t is not None]
    if not known:
        raise MetricError("no video carries frame truth; frame metrics are impossible")
    all_scores = np.concatenate([per_video_scores[i] for i in known])
    all_truth = np.concatenate([per_video_truth[i] for i in known])

    if macro_average:
        aurocs = []
        eers = []
        for i in known:
            t = per_video_truth[i]
            if t.any() and not t.all():
                curve = roc_curve(per_video_scores[i], t)
                aurocs.append(auroc(curve))
                eers.append(eer(curve))
        if not aurocs:
            raise MetricError("macro averaging needs >= 1 video with both frame classes")
        auroc_value = float(np.mean(aurocs))
        eer_value = float(np.mean(eers))
    else:
        curve = roc_curve(all_scores, all_truth)
        auroc_value = auroc(curve)
        eer_value = eer(curve)

    acc = video_accuracy(
        [clip_scores[rec.video_id] for rec in manifest.videos],
        [rec.label for rec in manifest.videos],
        threshold=threshold,
    )
    report = {
        "auroc": auroc_value,
        "eer": eer_value,
        "video_accuracy": acc,
        "n_frames": int(all_truth.size),
        "n_videos": len(manifest.videos),
    }
    return report, traces
