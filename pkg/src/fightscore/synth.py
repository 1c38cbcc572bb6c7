"""Seeded synthetic feature corpora with planted anomalous windows.

Normal clip features are AR(1)-correlated Gaussian rows. Each abnormal video
carries one contiguous window of clips whose mean is shifted along a fixed
random unit direction shared by the whole corpus, and frame_truth marks
exactly that window's frames. Small corpora generated this way let the whole
training and evaluation path run end to end in seconds with known ground
truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CorpusManifest, FeatureSequence, VideoRecord, expected_clip_count
from .errors import ConfigError, ValidationError
from .store import save_manifest, write_features

TRUTH_SIDECAR = "synth_truth.json"


@dataclass(frozen=True)
class SynthSpec:
    """Corpus shape and distribution knobs; everything derives from `seed`."""

    n_normal: int
    n_abnormal: int
    d: int = 64
    clip_len: int = 32
    clips_range: tuple[int, int] = (12, 120)
    anomaly_frac_range: tuple[float, float] = (0.05, 0.3)
    separation: float = 2.0
    noise_sigma: float = 1.0
    temporal_corr: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_normal < 1 or self.n_abnormal < 1:
            raise ConfigError(
                f"need >= 1 video per class, got {self.n_normal} normal / "
                f"{self.n_abnormal} abnormal"
            )
        if self.d < 1 or self.clip_len < 1:
            raise ConfigError("d and clip_len must be positive")
        lo, hi = self.clips_range
        if not (1 <= lo <= hi):
            raise ConfigError(f"clips_range must satisfy 1 <= min <= max, got {self.clips_range}")
        flo, fhi = self.anomaly_frac_range
        if not (0.0 < flo <= fhi <= 1.0):
            raise ConfigError(
                f"anomaly_frac_range must satisfy 0 < min <= max <= 1, got {self.anomaly_frac_range}"
            )
        if self.separation <= 0.0:
            raise ConfigError(f"separation must be > 0, got {self.separation}")
        if self.noise_sigma <= 0.0:
            raise ConfigError(f"noise_sigma must be > 0, got {self.noise_sigma}")
        if not (0.0 <= self.temporal_corr < 1.0):
            raise ConfigError(f"temporal_corr must lie in [0, 1), got {self.temporal_corr}")


def _ar1_rows(rng: np.random.Generator, m: int, d: int, sigma: float, rho: float) -> np.ndarray:
    """AR(1) rows with marginal per-coordinate variance sigma^2 at every step."""
    z = rng.standard_normal((m, d))
    rows = np.empty((m, d))
    rows[0] = sigma * z[0]
    scale = np.sqrt(1.0 - rho * rho) * sigma
    for i in range(1, m):
        rows[i] = rho * rows[i - 1] + scale * z[i]
    return rows


def generate_corpus(spec: SynthSpec, out_dir: str | Path) -> CorpusManifest:
    """Write feature files, manifest, and a planted-truth sidecar; return the manifest.

    Deterministic for a fixed spec: the RNG stream is consumed in one fixed
    order (direction, then normals, then abnormals). The sidecar records the
    planted direction and each abnormal video's window so oracle scorers can
    be built against the corpus.
    """
    out_dir = Path(out_dir)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed]))

    direction = rng.standard_normal(spec.d)
    direction /= np.linalg.norm(direction)

    t = spec.clip_len
    records: list[VideoRecord] = []
    windows: dict[str, list[int]] = {}

    def make_video(video_id: str, label: int) -> VideoRecord:
        m = int(rng.integers(spec.clips_range[0], spec.clips_range[1] + 1))
        extra = int(rng.integers(0, t))
        num_frames = m * t + extra
        rows = _ar1_rows(rng, m, spec.d, spec.noise_sigma, spec.temporal_corr)
        frame_truth = None
        if label == 1:
            frac = rng.uniform(*spec.anomaly_frac_range)
            w = max(1, round(frac * m))
            start = int(rng.integers(0, m - w + 1))
            rows[start : start + w] += spec.separation * direction
            truth = np.zeros(num_frames, dtype=np.uint8)
            end_frame = num_frames if start + w == m else (start + w) * t
            truth[start * t : end_frame] = 1
            frame_truth = truth
            windows[video_id] = [start, w]
        seq = FeatureSequence(
            video_id=video_id,
            features=rows.astype(np.float32),
            clip_len=t,
            num_frames=num_frames,
        )
        path = features_dir / f"{video_id}.fsq"
        write_features(seq, path)
        return VideoRecord(
            video_id=video_id,
            label=label,
            feature_path=str(path),
            num_frames=num_frames,
            frame_truth=frame_truth,
        )

    for i in range(spec.n_normal):
        records.append(make_video(f"normal_{i:03d}", 0))
    for i in range(spec.n_abnormal):
        records.append(make_video(f"abnormal_{i:03d}", 1))

    manifest = CorpusManifest(videos=tuple(records), feature_dim=spec.d, clip_len=t)
    save_manifest(manifest, out_dir / "manifest.json")
    sidecar = {
        "direction": [float(v) for v in direction],
        "separation": spec.separation,
        "noise_sigma": spec.noise_sigma,
        "windows": windows,
    }
    with open(out_dir / TRUTH_SIDECAR, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return manifest


def load_truth_sidecar(corpus_dir: str | Path) -> dict:
    with open(Path(corpus_dir) / TRUTH_SIDECAR, encoding="utf-8") as fh:
        return json.load(fh)


def corpus_summary(manifest: CorpusManifest) -> str:
    """Human-readable counts, clip-count histogram, and anomaly-fraction stats."""
    normal = manifest.by_label(0)
    abnormal = manifest.by_label(1)
    if not abnormal:
        raise ValidationError("corpus has no abnormal videos")
    clip_counts = np.array(
        [expected_clip_count(rec.num_frames, manifest.clip_len) for rec in manifest.videos]
    )
    fracs = []
    for rec in abnormal:
        if rec.frame_truth is not None:
            fracs.append(float(np.mean(rec.frame_truth)))
    lines = [
        f"videos: {len(manifest.videos)} ({len(normal)} normal, {len(abnormal)} abnormal)",
        f"feature_dim: {manifest.feature_dim}, clip_len: {manifest.clip_len}",
        f"clips per video: min {clip_counts.min()}, median {int(np.median(clip_counts))}, "
        f"max {clip_counts.max()}",
    ]
    edges = np.linspace(clip_counts.min(), clip_counts.max() + 1, num=min(9, 1 + len(set(clip_counts.tolist()))))
    hist, _ = np.histogram(clip_counts, bins=edges)
    bars = ", ".join(
        f"[{int(edges[i])},{int(edges[i + 1])}): {hist[i]}" for i in range(len(hist))
    )
    lines.append(f"clip-count histogram: {bars}")
    if fracs:
        lines.append(
            f"anomalous frame fraction (abnormal videos): min {min(fracs):.3f}, "
            f"mean {float(np.mean(fracs)):.3f}, max {max(fracs):.3f}"
        )
    else:
        lines.append("anomalous frame fraction: no frame truth recorded")
    return "\n".join(lines)
