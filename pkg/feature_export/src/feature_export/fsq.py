"""Writers for the consumer's on-disk formats.

Kept standalone on purpose: this package talks to the scoring library only
through files, so the binary feature format and the manifest schema are
spelled out here rather than imported.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"FSQ1"
HEADER = struct.Struct("<4sIIII")


def write_feature_file(
    path: str | Path, features: np.ndarray, clip_len: int, num_frames: int
) -> None:
    """One video's clip-feature matrix: 20-byte header + float32 LE rows."""
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 2:
        raise ExportError(f"feature matrix must be 2-D, got shape {features.shape}")
    m, d = features.shape
    if m < 1 or d < 1 or clip_len < 1 or num_frames < 1:
        raise ExportError("feature matrix and header fields must be positive")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, m, d, clip_len, num_frames))
        fh.write(features.tobytes())


def write_manifest(
    path: str | Path, entries: list[dict], feature_dim: int, clip_len: int
) -> None:
    """Corpus manifest JSON; feature paths are relative to the manifest."""
    doc = {"feature_dim": feature_dim, "clip_len": clip_len, "videos": entries}
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
