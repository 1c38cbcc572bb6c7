"""On-disk formats: FSQ1 feature files, manifest JSON, score and label JSONL.

The feature format is a 20-byte header (magic ``FSQ1`` plus four u32
little-endian fields: m, d, clip_len, num_frames) followed by exactly
m*d float32 little-endian values in row-major order. Reads are bounded by
the header arithmetic, so a corrupt header can never trigger an oversized
allocation.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CorpusManifest, FeatureSequence, VideoRecord, validate_manifest
from .errors import CorruptionError, FormatError, ValidationError

FEATURE_MAGIC = b"FSQ1"
_HEADER = struct.Struct("<4sIIII")
HEADER_SIZE = _HEADER.size  # 20 bytes


@dataclass(frozen=True)
class FeatureFileHeader:
    m: int
    d: int
    clip_len: int
    num_frames: int


def read_feature_header(path: str | Path) -> FeatureFileHeader:
    """Parse and sanity-check the 20-byte FSQ1 header."""
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    magic, m, d, clip_len, num_frames = _HEADER.unpack(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if m < 1 or d < 1 or clip_len < 1 or num_frames < 1:
        raise FormatError(f"{path}: header fields must be positive (m={m}, d={d}, clip_len={clip_len}, num_frames={num_frames})")
    return FeatureFileHeader(m=m, d=d, clip_len=clip_len, num_frames=num_frames)


def write_features(seq: FeatureSequence, path: str | Path) -> None:
    """Write a validated sequence; the file reads back bit-identically."""
    m, d = seq.features.shape
    header = _HEADER.pack(FEATURE_MAGIC, m, d, seq.clip_len, seq.num_frames)
    payload = np.ascontiguousarray(seq.features, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"failed to write feature file {path}: {exc}") from exc


def read_features(path: str | Path, video_id: str | None = None) -> FeatureSequence:
    """Read one FSQ1 file; payload length must match the header exactly."""
    header = read_feature_header(path)
    expected = header.m * header.d * 4
    actual = os.path.getsize(path) - HEADER_SIZE
    if actual != expected:
        raise CorruptionError(
            f"{path}: payload is {actual} bytes, header declares {expected} "
            f"({header.m}x{header.d} float32)"
        )
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        payload = fh.read(expected)
    feats = np.frombuffer(payload, dtype="<f4").reshape(header.m, header.d)
    if video_id is None:
        video_id = Path(path).stem
    return FeatureSequence(
        video_id=video_id,
        features=feats,
        clip_len=header.clip_len,
        num_frames=header.num_frames,
    )


# ---------------------------------------------------------------------------
# Manifest JSON


def _schema_error(pointer: str, message: str) -> FormatError:
    return FormatError(f"manifest schema violation at {pointer}: {message}")


def _check_int(value, pointer: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _schema_error(pointer, f"expected integer, got {type(value).__name__}")
    if minimum is not None and value < minimum:
        raise _schema_error(pointer, f"expected integer >= {minimum}, got {value}")
    return value


def parse_manifest(doc: dict, base_dir: str | Path = ".") -> CorpusManifest:
    """Build a CorpusManifest from a parsed JSON document.

    Relative feature paths are resolved against `base_dir`. Schema errors
    carry a JSON pointer to the offending field.
    """
    if not isinstance(doc, dict):
        raise _schema_error("/", "expected top-level object")
    for key in ("feature_dim", "clip_len", "videos"):
        if key not in doc:
            raise _schema_error(f"/{key}", "missing required field")
    feature_dim = _check_int(doc["feature_dim"], "/feature_dim", minimum=1)
    clip_len = _check_int(doc["clip_len"], "/clip_len", minimum=1)
    if not isinstance(doc["videos"], list):
        raise _schema_error("/videos", "expected array")
    base = Path(base_dir)
    records = []
    for i, entry in enumerate(doc["videos"]):
        ptr = f"/videos/{i}"
        if not isinstance(entry, dict):
            raise _schema_error(ptr, "expected object")
        for key in ("video_id", "label", "feature_path", "num_frames"):
            if key not in entry:
                raise _schema_error(f"{ptr}/{key}", "missing required field")
        if not isinstance(entry["video_id"], str):
            raise _schema_error(f"{ptr}/video_id", "expected string")
        label = _check_int(entry["label"], f"{ptr}/label")
        if label not in (0, 1):
            raise _schema_error(f"{ptr}/label", f"expected 0 or 1, got {label}")
        if not isinstance(entry["feature_path"], str):
            raise _schema_error(f"{ptr}/feature_path", "expected string")
        num_frames = _check_int(entry["num_frames"], f"{ptr}/num_frames", minimum=1)
        truth = entry.get("frame_truth")
        if truth is not None:
            if not isinstance(truth, list) or any(
                isinstance(v, bool) or not isinstance(v, int) or v not in (0, 1) for v in truth
            ):
                raise _schema_error(f"{ptr}/frame_truth", "expected array of 0|1")
            truth = np.asarray(truth, dtype=np.uint8)
        fpath = Path(entry["feature_path"])
        if not fpath.is_absolute():
            fpath = base / fpath
        try:
            records.append(
                VideoRecord(
                    video_id=entry["video_id"],
                    label=label,
                    feature_path=str(fpath),
                    num_frames=num_frames,
                    frame_truth=truth,
                )
            )
        except ValidationError as exc:
            raise _schema_error(ptr, str(exc)) from exc
    return CorpusManifest(videos=tuple(records), feature_dim=feature_dim, clip_len=clip_len)


def load_manifest(path: str | Path, *, require_both_classes: bool = True) -> CorpusManifest:
    """Load, schema-check, and fully validate a manifest JSON file."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    manifest = parse_manifest(doc, base_dir=path.parent)
    violations = validate_manifest(manifest, require_both_classes=require_both_classes)
    if violations:
        raise ValidationError(
            f"{path}: manifest failed validation:\n  " + "\n  ".join(violations)
        )
    return manifest


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    """Write manifest JSON, relativizing feature paths against the file's directory."""
    path = Path(path)
    base = path.parent.resolve()
    videos = []
    for rec in manifest.videos:
        fpath = Path(rec.feature_path).resolve()
        try:
            rel = str(fpath.relative_to(base))
        except ValueError:
            rel = str(fpath)
        entry: dict = {
            "video_id": rec.video_id,
            "label": rec.label,
            "feature_path": rel,
            "num_frames": rec.num_frames,
        }
        if rec.frame_truth is not None:
            entry["frame_truth"] = [int(v) for v in rec.frame_truth]
        videos.append(entry)
    doc = {"feature_dim": manifest.feature_dim, "clip_len": manifest.clip_len, "videos": videos}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# JSON-lines outputs


def write_score_traces(traces, path: str | Path) -> None:
    """Write per-video score traces: one JSON object per line.

    Each trace is a mapping with keys video_id, clip_scores, frame_scores.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            obj = {
                "video_id": trace["video_id"],
                "clip_scores": [float(s) for s in trace["clip_scores"]],
                "frame_scores": [float(s) for s in trace["frame_scores"]],
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def write_pseudo_labels(targets_by_video: dict[str, np.ndarray], path: str | Path) -> None:
    """Write soft per-clip targets: one {"video_id", "targets"} object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for video_id in targets_by_video:
            obj = {
                "video_id": video_id,
                "targets": [float(t) for t in targets_by_video[video_id]],
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_pseudo_labels(path: str | Path) -> dict[str, np.ndarray]:
    targets: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{line_no}: not valid JSON: {exc}") from exc
            if "video_id" not in obj or "targets" not in obj:
                raise FormatError(f"{path}:{line_no}: expected video_id and targets fields")
            targets[obj["video_id"]] = np.asarray(obj["targets"], dtype=np.float64)
    return targets


def write_loss_csv(losses, path: str | Path) -> None:
    """Loss history as a two-column CSV: epoch (1-based), loss."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(losses, start=1):
            fh.write(f"{epoch},{float(loss)!r}\n")
