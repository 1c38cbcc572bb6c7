"""Clip encoders: a deterministic builtin and a TorchScript loading hook.

The builtin is a small fixed-weight 3D conv net emitting 2048-dim rows. It
stands in where no pretrained action-recognition backbone is available;
point `--encoder` at a TorchScript file to use a real one. Either way the
contract is the same: (B, 3, T, H, W) float32 in [0, 1] maps to (B, D).
"""

from pathlib import Path

import numpy as np
import torch

from .errors import ExportError

BUILTIN_FEATURE_DIM = 2048
_BUILTIN_SEED = 2048


class _BuiltinEncoder(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = torch.nn.Conv3d(3, 8, kernel_size=(3, 7, 7), stride=(2, 4, 4))
        self.conv2 = torch.nn.Conv3d(8, 16, kernel_size=(3, 5, 5), stride=(2, 3, 3))
        # 16 channels * 4 * 8 * 4 pooled cells = 2048 features per clip.
        self.pool = torch.nn.AdaptiveAvgPool3d((4, 8, 4))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))
        return self.pool(x).flatten(1)


def builtin_encoder() -> torch.nn.Module:
    torch.manual_seed(_BUILTIN_SEED)
    module = _BuiltinEncoder()
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def load_encoder(spec: str) -> torch.nn.Module:
    """'builtin' or a path to a scripted module saved with torch.jit.save."""
    if spec == "builtin":
        return builtin_encoder()
    path = Path(spec)
    if not path.is_file():
        raise ExportError(f"encoder {spec!r} is neither 'builtin' nor an existing file")
    try:
        module = torch.jit.load(str(path), map_location="cpu")
    except Exception as exc:
        raise ExportError(f"could not load scripted encoder {spec!r}: {exc}") from exc
    module.eval()
    return module


def encode_clips(encoder: torch.nn.Module, clips: np.ndarray, tap: str) -> np.ndarray:
    """Encode (M, T, H, W, 3) float32 clips into an (M, D) float32 matrix.

    Clips run through the encoder one at a time to bound memory. Encoders
    returning a dict of endpoints are indexed by `tap`.
    """
    if clips.ndim != 5 or clips.shape[-1] != 3:
        raise ExportError(f"expected (M, T, H, W, 3) clips, got shape {clips.shape}")
    torch.set_num_threads(1)
    rows = []
    with torch.no_grad():
        for clip in clips:
            x = torch.from_numpy(np.ascontiguousarray(clip, dtype=np.float32))
            x = x.permute(3, 0, 1, 2).unsqueeze(0)
            out = encoder(x)
            if isinstance(out, dict):
                if tap not in out:
                    raise ExportError(
                        f"encoder endpoints {sorted(out)} do not include tap {tap!r}"
                    )
                out = out[tap]
            out = out.reshape(1, -1)
            rows.append(out.numpy().astype(np.float32, copy=True)[0])
    matrix = np.stack(rows)
    if matrix.shape[1] < 1:
        raise ExportError("encoder produced empty feature rows")
    return matrix
