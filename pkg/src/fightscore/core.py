"""Domain types and the segment-bagging transform.

All types are immutable after construction and validate their invariants
eagerly, so downstream code can assume well-formed inputs. Feature matrices
are kept in float32 (the on-disk precision); training code promotes to
float64 at the bagging/scoring boundary.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


def expected_clip_count(num_frames: int, clip_len: int) -> int:
    """Number of clips a video of `num_frames` frames decomposes into.

    Full clips of `clip_len` frames; a video shorter than one clip still
    yields a single (padded-by-the-extractor) clip.
    """
    if num_frames >= clip_len:
        return num_frames // clip_len
    return 1


@dataclass(frozen=True)
class FeatureSequence:
    """Per-video matrix of clip features produced by an external extractor.

    `features` has shape (M, D): one row per clip of `clip_len` frames.
    """

    video_id: str
    features: np.ndarray
    clip_len: int
    num_frames: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float32)
        if feats.ndim != 2:
            raise ValidationError(f"{self.video_id}: features must be 2-D, got ndim={feats.ndim}")
        m, d = feats.shape
        if m < 1 or d < 1:
            raise ValidationError(f"{self.video_id}: features must be at least 1x1, got {m}x{d}")
        if not np.isfinite(feats).all():
            raise ValidationError(f"{self.video_id}: features contain non-finite values")
        if self.clip_len < 1:
            raise ValidationError(f"{self.video_id}: clip_len must be positive, got {self.clip_len}")
        if self.num_frames < 1:
            raise ValidationError(f"{self.video_id}: num_frames must be positive, got {self.num_frames}")
        expected = expected_clip_count(self.num_frames, self.clip_len)
        if m != expected:
            raise ValidationError(
                f"{self.video_id}: {m} feature rows inconsistent with "
                f"num_frames={self.num_frames}, clip_len={self.clip_len} (expected {expected})"
            )
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    @property
    def n_clips(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class VideoRecord:
    """One corpus entry: weak video-level label plus optional frame truth."""

    video_id: str
    label: int
    feature_path: str
    num_frames: int
    frame_truth: np.ndarray | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValidationError(f"{self.video_id}: label must be 0 or 1, got {self.label!r}")
        if self.num_frames < 1:
            raise ValidationError(f"{self.video_id}: num_frames must be positive")
        if self.frame_truth is not None:
            truth = np.asarray(self.frame_truth, dtype=np.uint8)
            if truth.ndim != 1 or len(truth) != self.num_frames:
                raise ValidationError(
                    f"{self.video_id}: frame_truth length {truth.size} != num_frames {self.num_frames}"
                )
            if not np.isin(truth, (0, 1)).all():
                raise ValidationError(f"{self.video_id}: frame_truth entries must be 0 or 1")
            if self.label == 0 and truth.any():
                raise ValidationError(f"{self.video_id}: label-0 video has nonzero frame_truth")
            truth.setflags(write=False)
            object.__setattr__(self, "frame_truth", truth)


@dataclass(frozen=True)
class CorpusManifest:
    """A list of videos sharing one feature dimensionality and clip length."""

    videos: tuple[VideoRecord, ...]
    feature_dim: int
    clip_len: int

    def __post_init__(self):
        object.__setattr__(self, "videos", tuple(self.videos))
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be positive")
        if self.clip_len < 1:
            raise ValidationError("clip_len must be positive")

    def by_label(self, label: int) -> list[VideoRecord]:
        return [v for v in self.videos if v.label == label]


@dataclass(frozen=True)
class SegmentBag:
    """Fixed-size summary of one video: N temporally averaged segments."""

    video_id: str
    segments: np.ndarray
    n_segments: int = field(default=32)

    def __post_init__(self):
        segs = np.asarray(self.segments, dtype=np.float64)
        if segs.ndim != 2 or segs.shape[0] != self.n_segments:
            raise ValidationError(
                f"{self.video_id}: segments shape {segs.shape} != ({self.n_segments}, D)"
            )
        if not np.isfinite(segs).all():
            raise ValidationError(f"{self.video_id}: segments contain non-finite values")
        segs.setflags(write=False)
        object.__setattr__(self, "segments", segs)


@dataclass(frozen=True)
class ScoreSequence:
    """Per-clip (or per-segment) anomaly scores for one video, each in [0, 1]."""

    video_id: str
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size < 1:
            raise ValidationError(f"{self.video_id}: scores must be a non-empty vector")
        if not np.isfinite(scores).all() or scores.min() < 0.0 or scores.max() > 1.0:
            raise ValidationError(f"{self.video_id}: scores must lie in [0, 1]")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)


def validate_manifest(manifest: CorpusManifest, *, require_both_classes: bool = True) -> list[str]:
    """Check every manifest invariant and the referenced feature files.

    Returns a list of human-readable violations; empty means the manifest is
    usable. Unreadable or inconsistent feature files become violation entries
    rather than exceptions. `require_both_classes` enforces the training-corpus
    rule that both a label-0 and a label-1 video are present; scoring-only
    corpora (e.g. pseudo-labeling a normal-only set) may disable it.
    """
    from . import store  # local import to avoid a cycle

    violations: list[str] = []
    seen: set[str] = set()
    for rec in manifest.videos:
        if rec.video_id in seen:
            violations.append(f"duplicate video_id {rec.video_id!r}")
            continue
        seen.add(rec.video_id)
        if not os.path.isfile(rec.feature_path):
            violations.append(f"{rec.video_id}: feature file missing: {rec.feature_path}")
            continue
        try:
            header = store.read_feature_header(rec.feature_path)
        except Exception as exc:
            violations.append(f"{rec.video_id}: unreadable feature file {rec.feature_path}: {exc}")
            continue
        if header.d != manifest.feature_dim:
            violations.append(
                f"{rec.video_id}: feature dim {header.d} != manifest feature_dim {manifest.feature_dim}"
            )
        if header.clip_len != manifest.clip_len:
            violations.append(
                f"{rec.video_id}: clip_len {header.clip_len} != manifest clip_len {manifest.clip_len}"
            )
        if header.num_frames != rec.num_frames:
            violations.append(
                f"{rec.video_id}: feature file num_frames {header.num_frames} != record {rec.num_frames}"
            )
        expected = expected_clip_count(header.num_frames, header.clip_len)
        if header.m != expected:
            violations.append(
                f"{rec.video_id}: {header.m} clip rows inconsistent with "
                f"num_frames={header.num_frames}, clip_len={header.clip_len}"
            )
    if require_both_classes:
        labels = {v.label for v in manifest.videos}
        if 0 not in labels:
            violations.append("training corpus has no label-0 (normal) video")
        if 1 not in labels:
            violations.append("training corpus has no label-1 (abnormal) video")
    return violations


def bag_rows(rows: np.ndarray, n: int) -> np.ndarray:
    """Average a (M, D) matrix down (or repeat it up) to exactly n rows.

    For M >= n, output row j is the mean of input rows i with
    floor(i*n/M) == j, computed in float64. For M < n, output row j copies
    input row floor(j*M/n). Deterministic and allocation-light.
    """
    if n < 1:
        raise ValidationError(f"segment count must be >= 1, got {n}")
    rows = np.asarray(rows, dtype=np.float64)
    m = rows.shape[0]
    if m < n:
        idx = (np.arange(n, dtype=np.int64) * m) // n
        return rows[idx]
    assign = (np.arange(m, dtype=np.int64) * n) // m
    out = np.zeros((n, rows.shape[1]), dtype=np.float64)
    np.add.at(out, assign, rows)
    counts = np.bincount(assign, minlength=n).astype(np.float64)
    out /= counts[:, None]
    return out


def bag_segments(seq: FeatureSequence, n: int) -> SegmentBag:
    """Temporal-average a feature sequence into an n-segment bag."""
    return SegmentBag(video_id=seq.video_id, segments=bag_rows(seq.features, n), n_segments=n)
