"""Weakly supervised two-stage fight scoring over precomputed video features."""

from .core import (
    CorpusManifest,
    FeatureSequence,
    ScoreSequence,
    SegmentBag,
    VideoRecord,
    bag_rows,
    bag_segments,
    expected_clip_count,
    validate_manifest,
)
from .errors import (
    ConfigError,
    CorruptionError,
    FightScoreError,
    FormatError,
    MetricError,
    TrainingError,
    ValidationError,
)
from .metrics import (
    RocCurve,
    auroc,
    corpus_report,
    eer,
    eer_operating_point,
    expand_to_frames,
    roc_curve,
    video_accuracy,
)
from .mlp import (
    AdamState,
    GeneratorModel,
    MlpParams,
    adam_step,
    backward,
    forward,
    init_adam_state,
    init_params,
    load_model,
    save_model,
    sigmoid,
)
from .store import (
    load_manifest,
    read_features,
    read_pseudo_labels,
    save_manifest,
    write_features,
    write_loss_csv,
    write_pseudo_labels,
    write_score_traces,
)
from .synth import SynthSpec, corpus_summary, generate_corpus, load_truth_sidecar
from .training import (
    MilConfig,
    PseudoLabelSet,
    RoundsResult,
    Stage2Config,
    bce_loss,
    generate_pseudo_labels,
    load_corpus_features,
    mil_loss,
    run_rounds,
    score_clips,
    score_corpus,
    train_stage_one,
    train_stage_two,
    transform_scores,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ConfigError",
    "CorpusManifest",
    "CorruptionError",
    "FeatureSequence",
    "FightScoreError",
    "FormatError",
    "GeneratorModel",
    "MetricError",
    "MilConfig",
    "MlpParams",
    "PseudoLabelSet",
    "RocCurve",
    "RoundsResult",
    "ScoreSequence",
    "SegmentBag",
    "Stage2Config",
    "SynthSpec",
    "TrainingError",
    "ValidationError",
    "VideoRecord",
    "adam_step",
    "auroc",
    "backward",
    "bag_rows",
    "bag_segments",
    "bce_loss",
    "corpus_report",
    "corpus_summary",
    "eer",
    "eer_operating_point",
    "expand_to_frames",
    "expected_clip_count",
    "forward",
    "generate_corpus",
    "generate_pseudo_labels",
    "init_adam_state",
    "init_params",
    "load_corpus_features",
    "load_manifest",
    "load_model",
    "load_truth_sidecar",
    "mil_loss",
    "read_features",
    "read_pseudo_labels",
    "roc_curve",
    "run_rounds",
    "save_manifest",
    "save_model",
    "score_clips",
    "score_corpus",
    "sigmoid",
    "train_stage_one",
    "train_stage_two",
    "transform_scores",
    "validate_manifest",
    "video_accuracy",
    "write_features",
    "write_loss_csv",
    "write_pseudo_labels",
    "write_score_traces",
]
