"""Losses and the two-stage training scheme.

Stage one trains generator A on video-level labels with a ranking loss over
fixed-size segment bags: the top abnormal-bag score must exceed the top
normal-bag score by a margin, with sparsity and smoothness terms on the
abnormal scores. Stage two turns A's per-clip scores into soft targets
(identity or per-video min-max) and trains generator B against them with
cross-entropy at clip granularity; only B is used for inference afterwards.
Multi-round mode regenerates targets from the latest model and retrains
stage two.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .core import CorpusManifest, FeatureSequence, bag_rows
from .errors import ConfigError, MetricError
from .metrics import corpus_report
from .mlp import (
    GeneratorModel,
    MlpParams,
    adam_step,
    backward,
    forward,
    init_adam_state,
    init_params,
)
from .store import read_features

TRANSFORMS = ("identity", "minmax")
MINMAX_DEGENERATE_EPS = 1e-8


@dataclass(frozen=True)
class MilConfig:
    """Stage-one hyperparameters."""

    epsilon: float = 1.0
    lambda_sparsity: float = 8e-5
    lambda_smooth: float = 8e-5
    n_segments: int = 32
    pairs_per_batch: int = 30
    epochs: int = 10000
    lr: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.lambda_sparsity < 0 or self.lambda_smooth < 0:
            raise ConfigError("lambda coefficients must be >= 0")
        if self.pairs_per_batch < 1:
            raise ConfigError("pairs_per_batch must be >= 1")
        if self.n_segments < 1:
            raise ConfigError("n_segments must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


@dataclass(frozen=True)
class Stage2Config:
    """Stage-two (self-training) hyperparameters."""

    transform: str = "identity"
    epochs: int = 200
    lr: float = 0.001
    include_normals: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"transform must be one of {TRANSFORMS}, got {self.transform!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


@dataclass(frozen=True)
class PseudoLabelSet:
    """Soft per-clip targets keyed by video_id; normal videos are all zeros."""

    targets: dict[str, np.ndarray] = field(default_factory=dict)

    def require_cover(self, manifest: CorpusManifest, features: dict[str, FeatureSequence]) -> None:
        for rec in manifest.videos:
            got = self.targets.get(rec.video_id)
            if got is None:
                raise ConfigError(f"pseudo labels missing for video {rec.video_id!r}")
            if len(got) != features[rec.video_id].n_clips:
                raise ConfigError(
                    f"pseudo labels for {rec.video_id!r} have length {len(got)}, "
                    f"expected {features[rec.video_id].n_clips}"
                )


# ---------------------------------------------------------------------------
# Losses and score transforms


def mil_loss(
    scores_n: np.ndarray, scores_a: np.ndarray, cfg: MilConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Ranking loss for one (normal, abnormal) bag pair, with exact subgradients.

    loss = max(0, eps - (max(scores_a) - max(scores_n)))
         + lambda_sparsity * sum(scores_a)
         + lambda_smooth * sum of squared adjacent differences of scores_a

    Ties in a max are broken toward the lowest index; an inactive hinge
    contributes zero gradient.
    """
    scores_n = np.asarray(scores_n, dtype=np.float64)
    scores_a = np.asarray(scores_a, dtype=np.float64)
    if scores_n.shape != scores_a.shape or scores_n.ndim != 1:
        raise ValueError(
            f"score vectors must share one length, got {scores_n.shape} and {scores_a.shape}"
        )
    i_n = int(np.argmax(scores_n))
    i_a = int(np.argmax(scores_a))
    margin = cfg.epsilon - (scores_a[i_a] - scores_n[i_n])
    hinge = max(0.0, margin)
    diffs = scores_a[1:] - scores_a[:-1]
    loss = (
        hinge
        + cfg.lambda_sparsity * scores_a.sum()
        + cfg.lambda_smooth * (diffs * diffs).sum()
    )
    grad_n = np.zeros_like(scores_n)
    grad_a = np.full_like(scores_a, cfg.lambda_sparsity)
    if margin > 0.0:
        grad_a[i_a] -= 1.0
        grad_n[i_n] += 1.0
    if cfg.lambda_smooth > 0.0 and diffs.size:
        grad_a[1:] += 2.0 * cfg.lambda_smooth * diffs
        grad_a[:-1] -= 2.0 * cfg.lambda_smooth * diffs
    return float(loss), grad_n, grad_a


def bce_loss(scores: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy against soft targets, with exact gradient.

    Scores are clamped to [1e-7, 1 - 1e-7] before the logs so saturated
    sigmoid outputs cannot produce infinities.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if scores.shape != targets.shape or scores.ndim != 1:
        raise ValueError(f"shape mismatch: scores {scores.shape}, targets {targets.shape}")
    if targets.min() < 0.0 or targets.max() > 1.0:
        raise ValueError("targets must lie in [0, 1]")
    k = scores.size
    s = np.clip(scores, 1e-7, 1.0 - 1e-7)
    loss = -np.mean(targets * np.log(s) + (1.0 - targets) * np.log1p(-s))
    grad = (s - targets) / (s * (1.0 - s)) / k
    return float(loss), grad


def transform_scores(scores: np.ndarray, mode: str) -> np.ndarray:
    """Per-video score-to-target map: identity, or min-max to [0, 1].

    A constant score vector has no spread to normalize, so min-max maps it
    to all zeros.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if mode == "identity":
        return scores.copy()
    if mode == "minmax":
        lo = scores.min()
        span = scores.max() - lo
        if span < MINMAX_DEGENERATE_EPS:
            return np.zeros_like(scores)
        return (scores - lo) / span
    raise ValueError(f"unknown transform {mode!r}")


# ---------------------------------------------------------------------------
# Corpus feature access


def load_corpus_features(manifest: CorpusManifest) -> dict[str, FeatureSequence]:
    """Read every referenced feature file once, keyed by video_id."""
    return {
        rec.video_id: read_features(rec.feature_path, video_id=rec.video_id)
        for rec in manifest.videos
    }


def _stream(seed: int, tag: int) -> np.random.Generator:
    # Independent deterministic substreams for sampling vs dropout.
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


# ---------------------------------------------------------------------------
# Stage one


def train_stage_one(
    manifest: CorpusManifest,
    cfg: MilConfig,
    init: MlpParams | None = None,
    features: dict[str, FeatureSequence] | None = None,
) -> tuple[GeneratorModel, list[float]]:
    """Train generator A with the ranking loss over segment bags.

    Every epoch draws `pairs_per_batch` (normal, abnormal) bag pairs
    uniformly with replacement, accumulates the pair losses, and applies one
    Adam step on the summed batch loss. The per-pair forward/backward passes
    are evaluated as one stacked matrix product, which is numerically
    identical to looping over pairs. Returns the model and the per-epoch
    summed batch loss. Deterministic for a fixed seed.
    """
    if features is None:
        features = load_corpus_features(manifest)
    normal_ids = [r.video_id for r in manifest.videos if r.label == 0]
    abnormal_ids = [r.video_id for r in manifest.videos if r.label == 1]
    if not normal_ids or not abnormal_ids:
        raise ConfigError(
            f"stage one needs both classes: {len(normal_ids)} normal / "
            f"{len(abnormal_ids)} abnormal videos found"
        )
    n_seg = cfg.n_segments
    d = manifest.feature_dim
    normal_bags = np.stack([bag_rows(features[v].features, n_seg) for v in normal_ids])
    abnormal_bags = np.stack([bag_rows(features[v].features, n_seg) for v in abnormal_ids])

    params = init if init is not None else init_params(d, cfg.seed)
    if params.d_in != d:
        raise ConfigError(f"model input dim {params.d_in} != corpus feature_dim {d}")
    state = init_adam_state(params, lr=cfg.lr)
    rng_pairs = _stream(cfg.seed, 0)
    rng_drop = _stream(cfg.seed, 1)

    pairs = cfg.pairs_per_batch
    history: list[float] = []
    for _ in range(cfg.epochs):
        idx_n = rng_pairs.integers(0, len(normal_ids), size=pairs)
        idx_a = rng_pairs.integers(0, len(abnormal_ids), size=pairs)
        batch = np.concatenate(
            [normal_bags[idx_n].reshape(-1, d), abnormal_bags[idx_a].reshape(-1, d)]
        )
        scores, trace = forward(params, batch, mode="train", rng=rng_drop)
        per_bag = scores.reshape(2 * pairs, n_seg)
        score_grads = np.zeros_like(per_bag)
        batch_loss = 0.0
        for p in range(pairs):
            loss, grad_n, grad_a = mil_loss(per_bag[p], per_bag[pairs + p], cfg)
            batch_loss += loss
            score_grads[p] += grad_n
            score_grads[pairs + p] += grad_a
        grads = backward(params, trace, batch, score_grads.ravel())
        params, state = adam_step(params, state, grads)
        history.append(batch_loss)
    return GeneratorModel(params=params, state=state), history


# ---------------------------------------------------------------------------
# Pseudo labels and stage two


def score_clips(params: MlpParams, seq: FeatureSequence) -> np.ndarray:
    """Inference-mode scores for every clip of one video (no bagging)."""
    scores, _ = forward(params, seq.features.astype(np.float64), mode="infer")
    return scores


def score_corpus(
    params: MlpParams,
    manifest: CorpusManifest,
    features: dict[str, FeatureSequence] | None = None,
) -> dict[str, np.ndarray]:
    """Per-clip inference scores for every video in the manifest."""
    if features is None:
        features = load_corpus_features(manifest)
    return {rec.video_id: score_clips(params, features[rec.video_id]) for rec in manifest.videos}


def generate_pseudo_labels(
    model: GeneratorModel,
    manifest: CorpusManifest,
    cfg: Stage2Config,
    features: dict[str, FeatureSequence] | None = None,
) -> PseudoLabelSet:
    """Soft per-clip targets: transformed scores for abnormal videos, zeros for normal.

    Normal videos carry no fight event by definition, so every clip target is
    exactly 0 regardless of the model; abnormal videos get the per-video
    transform of the model's raw inference scores.
    """
    if features is None:
        features = load_corpus_features(manifest)
    targets: dict[str, np.ndarray] = {}
    for rec in manifest.videos:
        seq = features[rec.video_id]
        if rec.label == 0:
            targets[rec.video_id] = np.zeros(seq.n_clips)
        else:
            targets[rec.video_id] = transform_scores(score_clips(model.params, seq), cfg.transform)
    return PseudoLabelSet(targets=targets)


def train_stage_two(
    manifest: CorpusManifest,
    pseudo: PseudoLabelSet,
    cfg: Stage2Config,
    init: MlpParams | None = None,
    features: dict[str, FeatureSequence] | None = None,
) -> tuple[GeneratorModel, list[float]]:
    """Train generator B against soft clip targets with cross-entropy.

    Each epoch visits the participating videos in a seeded shuffled order and
    applies one Adam step per video on that video's mean clip loss. By
    default B starts fresh from cfg.seed; pass `init` to warm-start from an
    existing generator's parameters. Returns the model and the per-epoch mean
    video loss.
    """
    if features is None:
        features = load_corpus_features(manifest)
    pseudo.require_cover(manifest, features)
    videos = [r for r in manifest.videos if cfg.include_normals or r.label == 1]
    if not videos:
        raise ConfigError("stage two has no videos to train on (include_normals=False and no abnormal videos)")
    d = manifest.feature_dim
    params = init if init is not None else init_params(d, cfg.seed)
    if params.d_in != d:
        raise ConfigError(f"model input dim {params.d_in} != corpus feature_dim {d}")
    state = init_adam_state(params, lr=cfg.lr)
    rng_order = _stream(cfg.seed, 0)
    rng_drop = _stream(cfg.seed, 1)

    clip_feats = {v.video_id: features[v.video_id].features.astype(np.float64) for v in videos}
    history: list[float] = []
    for _ in range(cfg.epochs):
        order = rng_order.permutation(len(videos))
        epoch_loss = 0.0
        for vi in order:
            rec = videos[vi]
            feats = clip_feats[rec.video_id]
            scores, trace = forward(params, feats, mode="train", rng=rng_drop)
            loss, grad = bce_loss(scores, pseudo.targets[rec.video_id])
            grads = backward(params, trace, feats, grad)
            params, state = adam_step(params, state, grads)
            epoch_loss += loss
        history.append(epoch_loss / len(videos))
    return GeneratorModel(params=params, state=state), history


# ---------------------------------------------------------------------------
# Multi-round orchestration


@dataclass(frozen=True)
class RoundLog:
    round_index: int  # 1-based
    stage2_history: list[float]
    metrics: dict | None


@dataclass(frozen=True)
class RoundsResult:
    model_a: GeneratorModel
    model_b: GeneratorModel
    stage1_history: list[float]
    rounds: list[RoundLog]


def run_rounds(
    manifest: CorpusManifest,
    mil_cfg: MilConfig,
    s2_cfg: Stage2Config,
    rounds: int = 1,
    init_from_a: bool = False,
    eval_manifest: CorpusManifest | None = None,
    features: dict[str, FeatureSequence] | None = None,
) -> RoundsResult:
    """Run stage one once, then `rounds` passes of pseudo-labeling + stage two.

    Round 1 is exactly train_stage_one followed by train_stage_two; every
    later round regenerates pseudo labels from the newest model and retrains
    stage two with a round-derived seed. Per-round evaluation metrics are
    computed on `eval_manifest` when given, else on the training corpus when
    it carries usable frame truth, else omitted.
    """
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}")
    if features is None:
        features = load_corpus_features(manifest)
    model_a, stage1_history = train_stage_one(manifest, mil_cfg, features=features)

    eval_target = eval_manifest if eval_manifest is not None else manifest
    eval_features = features if eval_manifest is None else load_corpus_features(eval_manifest)

    def round_metrics(model: GeneratorModel) -> dict | None:
        truthy = any(
            v.frame_truth is not None and v.frame_truth.any() for v in eval_target.videos
        )
        if not truthy:
            return None
        clip_scores = score_corpus(model.params, eval_target, features=eval_features)
        try:
            report, _ = corpus_report(eval_target, clip_scores)
        except MetricError:
            # Degenerate corpora (single frame class) simply log no metrics.
            return None
        return report

    latest = model_a
    model_b = model_a
    logs: list[RoundLog] = []
    for r in range(1, rounds + 1):
        pseudo = generate_pseudo_labels(latest, manifest, s2_cfg, features=features)
        round_cfg = dataclasses.replace(s2_cfg, seed=s2_cfg.seed + (r - 1))
        init = model_a.params if init_from_a else None
        model_b, hist = train_stage_two(manifest, pseudo, round_cfg, init=init, features=features)
        logs.append(RoundLog(round_index=r, stage2_history=hist, metrics=round_metrics(model_b)))
        latest = model_b
    return RoundsResult(
        model_a=model_a, model_b=model_b, stage1_history=stage1_history, rounds=logs
    )
