"""Decode videos, group frames into fixed-length clips, encode, write files."""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .encoder import encode_clips, load_encoder
from .errors import ExportError
from .fsq import write_feature_file, write_manifest

INFO_SIDECAR = "export_info.json"


@dataclass(frozen=True)
class ExportJob:
    """One export run: labeled videos in, feature corpus out."""

    items: tuple[tuple[str, int], ...]
    out_dir: str
    clip_len: int = 32
    resize: int = 224
    tap: str = "mix_5c"
    encoder: str = "builtin"

    def __post_init__(self):
        if not self.items:
            raise ExportError("export job needs at least one video")
        if self.clip_len < 1:
            raise ExportError(f"clip_len must be >= 1, got {self.clip_len}")
        if self.resize < 1:
            raise ExportError(f"resize must be >= 1, got {self.resize}")
        for path, label in self.items:
            if label not in (0, 1):
                raise ExportError(f"{path}: label must be 0 or 1, got {label!r}")
        stems = [Path(p).stem for p, _ in self.items]
        if len(set(stems)) != len(stems):
            raise ExportError("video file stems must be unique; they become video ids")


@dataclass
class ExportResult:
    manifest_path: Path
    exported: list[str] = field(default_factory=list)
    skipped: dict[str, str] = field(default_factory=dict)


def decode_video(path: str | Path, resize: int) -> tuple[np.ndarray, float]:
    """All frames as (n, resize, resize, 3) float32 in [0, 1], plus the fps."""
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise ExportError(f"{path}: could not open video")
    fps = float(cap.get(cv2.CAP_PROP_FPS)) or 0.0
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        frame = cv2.resize(frame, (resize, resize), interpolation=cv2.INTER_AREA)
        frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
    cap.release()
    if not frames:
        raise ExportError(f"{path}: no decodable frames")
    return np.stack(frames).astype(np.float32) / 255.0, fps


def group_clips(frames: np.ndarray, clip_len: int) -> np.ndarray:
    """Non-overlapping clips of `clip_len` frames, shape (M, T, H, W, 3).

    Videos of at least one clip keep floor(n / T) whole clips; shorter ones
    become a single clip padded by repeating the final frame.
    """
    n = frames.shape[0]
    if n >= clip_len:
        m = n // clip_len
        return frames[: m * clip_len].reshape(m, clip_len, *frames.shape[1:])
    pad = np.repeat(frames[-1:], clip_len - n, axis=0)
    return np.concatenate([frames, pad])[None]


def export_features(job: ExportJob) -> ExportResult:
    """Run the job; returns the manifest path plus what was written.

    Undecodable videos are skipped with a warning and recorded in the info
    sidecar; the job fails only if nothing could be exported.
    """
    encoder = load_encoder(job.encoder)
    out_dir = Path(job.out_dir)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    feature_dim = None
    result = ExportResult(manifest_path=out_dir / "manifest.json")
    info = {
        "encoder": job.encoder,
        "tap": job.tap,
        "resize": job.resize,
        "clip_len": job.clip_len,
        "fps": {},
        "native_frames": {},
    }
    for path, label in job.items:
        video_id = Path(path).stem
        try:
            frames, fps = decode_video(path, job.resize)
        except ExportError as exc:
            warnings.warn(str(exc), stacklevel=2)
            result.skipped[str(path)] = str(exc)
            continue
        clips = group_clips(frames, job.clip_len)
        matrix = encode_clips(encoder, clips, job.tap)
        if feature_dim is None:
            feature_dim = matrix.shape[1]
        elif matrix.shape[1] != feature_dim:
            raise ExportError(
                f"{path}: encoder produced {matrix.shape[1]}-dim rows, "
                f"earlier videos got {feature_dim}"
            )
        num_frames = int(frames.shape[0])
        rel = f"features/{video_id}.fsq"
        write_feature_file(out_dir / rel, matrix, job.clip_len, num_frames)
        entries.append(
            {
                "video_id": video_id,
                "label": int(label),
                "feature_path": rel,
                "num_frames": num_frames,
            }
        )
        info["fps"][video_id] = fps
        info["native_frames"][video_id] = num_frames
        result.exported.append(video_id)

    if not entries:
        raise ExportError("no videos could be exported")
    write_manifest(result.manifest_path, entries, feature_dim, job.clip_len)
    info["skipped"] = result.skipped
    with open(out_dir / INFO_SIDECAR, "w", encoding="utf-8") as fh:
        json.dump(info, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return result
