"""Video-to-feature export adapter for the fightscore corpus formats."""

from .encoder import (
    BUILTIN_FEATURE_DIM,
    builtin_encoder,
    encode_clips,
    load_encoder,
)
from .errors import ExportError
from .export import (
    INFO_SIDECAR,
    ExportJob,
    ExportResult,
    decode_video,
    export_features,
    group_clips,
)
from .fsq import write_feature_file, write_manifest

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_FEATURE_DIM",
    "ExportError",
    "ExportJob",
    "ExportResult",
    "INFO_SIDECAR",
    "builtin_encoder",
    "decode_video",
    "encode_clips",
    "export_features",
    "group_clips",
    "load_encoder",
    "write_feature_file",
    "write_manifest",
]
