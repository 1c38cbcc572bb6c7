"""Command-line entry point: synth, train, pseudo, eval, pipeline.

Every command reads one JSON config file (paths inside it resolve against
the config file's directory) plus a few flag overrides, validates everything
it can before touching the filesystem, and only then writes outputs. Exit
codes: 0 success, 2 usage or config error (no partial outputs), 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CorpusManifest
from .errors import ConfigError, FightScoreError, FormatError
from .metrics import corpus_report
from .mlp import GeneratorModel, MlpParams, load_model, save_model
from .store import load_manifest, write_loss_csv, write_pseudo_labels, write_score_traces
from .synth import SynthSpec, corpus_summary, generate_corpus
from .training import (
    MilConfig,
    Stage2Config,
    generate_pseudo_labels,
    load_corpus_features,
    run_rounds,
    score_corpus,
    train_stage_one,
)

TOP_KEYS = {"synth", "train", "pseudo", "eval"}
SYNTH_KEYS = {
    "out_dir",
    "n_normal",
    "n_abnormal",
    "d",
    "clip_len",
    "clips_range",
    "anomaly_frac_range",
    "separation",
    "noise_sigma",
    "temporal_corr",
    "seed",
}
MIL_KEYS = {
    "epsilon",
    "lambda_sparsity",
    "lambda_smooth",
    "n_segments",
    "pairs_per_batch",
    "epochs",
    "lr",
    "seed",
}
STAGE2_KEYS = {"transform", "epochs", "lr", "include_normals", "seed"}
TRAIN_KEYS = {"manifest", "out_dir", "rounds", "stage1_only", "init_from_a", "eval_manifest", "mil", "stage2"}
PSEUDO_KEYS = {"manifest", "model", "out", "transform"}
EVAL_KEYS = {"manifest", "model", "out_dir", "macro_average", "threshold"}


# ---------------------------------------------------------------------------
# Config reading helpers


def _fail(pointer: str, message: str):
    raise ConfigError(f"config {pointer}: {message}")


def _load_config(path: Path) -> tuple[dict, Path]:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = set(doc) - TOP_KEYS
    if unknown:
        _fail("/", f"unknown sections {sorted(unknown)} (expected subset of {sorted(TOP_KEYS)})")
    return doc, path.parent.resolve()


def _section(doc: dict, name: str) -> dict:
    if name not in doc:
        _fail(f"/{name}", "section missing")
    sec = doc[name]
    if not isinstance(sec, dict):
        _fail(f"/{name}", "must be an object")
    return sec


def _check_keys(sec: dict, allowed: set[str], pointer: str) -> None:
    unknown = set(sec) - allowed
    if unknown:
        _fail(pointer, f"unknown keys {sorted(unknown)}")


def _as_int(sec: dict, key: str, pointer: str):
    if key not in sec:
        return None
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(f"{pointer}/{key}", f"must be an integer, got {v!r}")
    return v


def _as_float(sec: dict, key: str, pointer: str):
    if key not in sec:
        return None
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{pointer}/{key}", f"must be a number, got {v!r}")
    return float(v)


def _as_bool(sec: dict, key: str, pointer: str):
    if key not in sec:
        return None
    v = sec[key]
    if not isinstance(v, bool):
        _fail(f"{pointer}/{key}", f"must be a boolean, got {v!r}")
    return v


def _as_str(sec: dict, key: str, pointer: str, required: bool = False):
    if key not in sec:
        if required:
            _fail(f"{pointer}/{key}", "required")
        return None
    v = sec[key]
    if not isinstance(v, str) or not v:
        _fail(f"{pointer}/{key}", f"must be a non-empty string, got {v!r}")
    return v


def _as_pair(sec: dict, key: str, pointer: str, integral: bool):
    if key not in sec:
        return None
    v = sec[key]
    ok = isinstance(v, list) and len(v) == 2
    if ok:
        for item in v:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                ok = False
            elif integral and not isinstance(item, int):
                ok = False
    if not ok:
        kind = "integers" if integral else "numbers"
        _fail(f"{pointer}/{key}", f"must be a two-element list of {kind}, got {v!r}")
    return (v[0], v[1]) if integral else (float(v[0]), float(v[1]))


def _check_writable_dir(path: Path) -> None:
    if path.exists() and not path.is_dir():
        raise ConfigError(f"not a directory: {path}")
    probe = path.resolve()
    while not probe.exists():
        parent = probe.parent
        if parent == probe:
            break
        probe = parent
    if not os.access(probe, os.W_OK):
        raise ConfigError(f"not writable: {path}")


def _guard_overwrite(targets: list[Path], force: bool) -> None:
    existing = [str(t) for t in targets if t.exists()]
    if existing and not force:
        raise ConfigError(
            f"refusing to overwrite existing outputs {existing} (pass --force to allow)"
        )


# ---------------------------------------------------------------------------
# Section builders


def _build_synth_spec(sec: dict, seed_override: int | None) -> SynthSpec:
    pointer = "/synth"
    _check_keys(sec, SYNTH_KEYS, pointer)
    _as_str(sec, "out_dir", pointer, required=True)
    kw: dict = {}
    for key in ("n_normal", "n_abnormal", "d", "clip_len", "seed"):
        v = _as_int(sec, key, pointer)
        if v is not None:
            kw[key] = v
    for key in ("separation", "noise_sigma", "temporal_corr"):
        v = _as_float(sec, key, pointer)
        if v is not None:
            kw[key] = v
    v = _as_pair(sec, "clips_range", pointer, integral=True)
    if v is not None:
        kw["clips_range"] = v
    v = _as_pair(sec, "anomaly_frac_range", pointer, integral=False)
    if v is not None:
        kw["anomaly_frac_range"] = v
    if "n_normal" not in kw or "n_abnormal" not in kw:
        _fail(pointer, "n_normal and n_abnormal are required")
    if seed_override is not None:
        kw["seed"] = seed_override
    return SynthSpec(**kw)


def _build_mil(sec: dict, seed_override: int | None) -> MilConfig:
    pointer = "/train/mil"
    _check_keys(sec, MIL_KEYS, pointer)
    kw: dict = {}
    for key in ("n_segments", "pairs_per_batch", "epochs", "seed"):
        v = _as_int(sec, key, pointer)
        if v is not None:
            kw[key] = v
    for key in ("epsilon", "lambda_sparsity", "lambda_smooth", "lr"):
        v = _as_float(sec, key, pointer)
        if v is not None:
            kw[key] = v
    if seed_override is not None:
        kw["seed"] = seed_override
    return MilConfig(**kw)


def _build_stage2(
    sec: dict, seed_override: int | None, transform_override: str | None
) -> Stage2Config:
    pointer = "/train/stage2"
    _check_keys(sec, STAGE2_KEYS, pointer)
    kw: dict = {}
    v = _as_str(sec, "transform", pointer)
    if v is not None:
        kw["transform"] = v
    for key in ("epochs", "seed"):
        iv = _as_int(sec, key, pointer)
        if iv is not None:
            kw[key] = iv
    fv = _as_float(sec, "lr", pointer)
    if fv is not None:
        kw["lr"] = fv
    bv = _as_bool(sec, "include_normals", pointer)
    if bv is not None:
        kw["include_normals"] = bv
    if seed_override is not None:
        kw["seed"] = seed_override
    if transform_override is not None:
        kw["transform"] = transform_override
    return Stage2Config(**kw)


# ---------------------------------------------------------------------------
# Plans: validated, side-effect-free descriptions of one command run


@dataclass(frozen=True)
class SynthPlan:
    spec: SynthSpec
    out_dir: Path


@dataclass(frozen=True)
class TrainSettings:
    """Structurally validated train section; manifests not yet loaded."""

    manifest_path: Path
    out_dir: Path
    rounds: int
    stage1_only: bool
    init_from_a: bool
    eval_manifest_path: Path | None
    mil: MilConfig
    stage2: Stage2Config


@dataclass(frozen=True)
class TrainPlan:
    settings: TrainSettings
    manifest: CorpusManifest
    eval_manifest: CorpusManifest | None


@dataclass(frozen=True)
class PseudoPlan:
    manifest: CorpusManifest
    model: GeneratorModel
    transform: str
    out_path: Path


@dataclass(frozen=True)
class EvalPlan:
    manifest: CorpusManifest
    params: MlpParams
    macro_average: bool
    threshold: float
    out_dir: Path


@dataclass(frozen=True)
class PipelinePlan:
    synth: SynthPlan
    doc: dict
    base: Path
    args: argparse.Namespace


def plan_synth(doc: dict, base: Path, args: argparse.Namespace) -> SynthPlan:
    sec = _section(doc, "synth")
    spec = _build_synth_spec(sec, args.seed)
    out_dir = base / sec["out_dir"]
    _check_writable_dir(out_dir)
    _guard_overwrite([out_dir / "manifest.json"], args.force)
    return SynthPlan(spec=spec, out_dir=out_dir)


def _train_settings(doc: dict, base: Path, args: argparse.Namespace) -> TrainSettings:
    sec = _section(doc, "train")
    pointer = "/train"
    _check_keys(sec, TRAIN_KEYS, pointer)
    manifest_rel = _as_str(sec, "manifest", pointer, required=True)
    out_rel = _as_str(sec, "out_dir", pointer, required=True)
    mil_sec = sec.get("mil", {})
    if not isinstance(mil_sec, dict):
        _fail(f"{pointer}/mil", "must be an object")
    stage2_sec = sec.get("stage2", {})
    if not isinstance(stage2_sec, dict):
        _fail(f"{pointer}/stage2", "must be an object")
    mil = _build_mil(mil_sec, args.seed)
    stage2 = _build_stage2(stage2_sec, args.seed, args.transform)
    rounds = args.rounds if args.rounds is not None else _as_int(sec, "rounds", pointer)
    if rounds is None:
        rounds = 1
    if rounds < 1:
        _fail(f"{pointer}/rounds", f"must be >= 1, got {rounds}")
    stage1_only = bool(_as_bool(sec, "stage1_only", pointer)) or args.stage1_only
    init_from_a = bool(_as_bool(sec, "init_from_a", pointer))
    eval_rel = _as_str(sec, "eval_manifest", pointer)
    out_dir = base / out_rel
    _check_writable_dir(out_dir)
    return TrainSettings(
        manifest_path=base / manifest_rel,
        out_dir=out_dir,
        rounds=rounds,
        stage1_only=stage1_only,
        init_from_a=init_from_a,
        eval_manifest_path=None if eval_rel is None else base / eval_rel,
        mil=mil,
        stage2=stage2,
    )


def _train_targets(settings: TrainSettings) -> list[Path]:
    targets = [settings.out_dir / "model_A.bin", settings.out_dir / "stage1_loss.csv"]
    if not settings.stage1_only:
        targets += [
            settings.out_dir / "model_B.bin",
            settings.out_dir / "stage2_loss.csv",
            settings.out_dir / "round_metrics.json",
        ]
    return targets


def plan_train(doc: dict, base: Path, args: argparse.Namespace) -> TrainPlan:
    settings = _train_settings(doc, base, args)
    # Training needs both classes; a single-class corpus is a config error.
    manifest = load_manifest(settings.manifest_path)
    eval_manifest = None
    if settings.eval_manifest_path is not None:
        eval_manifest = load_manifest(settings.eval_manifest_path, require_both_classes=False)
    _guard_overwrite(_train_targets(settings), args.force)
    return TrainPlan(settings=settings, manifest=manifest, eval_manifest=eval_manifest)


def plan_pseudo(doc: dict, base: Path, args: argparse.Namespace) -> PseudoPlan:
    sec = _section(doc, "pseudo")
    pointer = "/pseudo"
    _check_keys(sec, PSEUDO_KEYS, pointer)
    manifest_rel = _as_str(sec, "manifest", pointer, required=True)
    model_rel = _as_str(sec, "model", pointer, required=True)
    out_rel = _as_str(sec, "out", pointer, required=True)
    transform = args.transform or _as_str(sec, "transform", pointer) or "identity"
    manifest = load_manifest(base / manifest_rel, require_both_classes=False)
    model_path = base / model_rel
    if not model_path.is_file():
        _fail(f"{pointer}/model", f"model file not found: {model_path}")
    params, state = load_model(model_path)
    if params.d_in != manifest.feature_dim:
        _fail(
            f"{pointer}/model",
            f"model input dim {params.d_in} != corpus feature_dim {manifest.feature_dim}",
        )
    out_path = base / out_rel
    _check_writable_dir(out_path.parent)
    _guard_overwrite([out_path], args.force)
    # Stage2Config validates the transform name.
    Stage2Config(transform=transform)
    return PseudoPlan(
        manifest=manifest,
        model=GeneratorModel(params=params, state=state),
        transform=transform,
        out_path=out_path,
    )


def plan_eval(doc: dict, base: Path, args: argparse.Namespace) -> EvalPlan:
    sec = _section(doc, "eval")
    pointer = "/eval"
    _check_keys(sec, EVAL_KEYS, pointer)
    manifest_rel = _as_str(sec, "manifest", pointer, required=True)
    model_rel = _as_str(sec, "model", pointer, required=True)
    out_rel = _as_str(sec, "out_dir", pointer, required=True)
    macro = bool(_as_bool(sec, "macro_average", pointer)) or args.macro_average
    threshold = _as_float(sec, "threshold", pointer)
    threshold = 0.5 if threshold is None else threshold
    manifest = load_manifest(base / manifest_rel, require_both_classes=False)
    model_path = base / model_rel
    if not model_path.is_file():
        _fail(f"{pointer}/model", f"model file not found: {model_path}")
    params, _ = load_model(model_path)
    if params.d_in != manifest.feature_dim:
        _fail(
            f"{pointer}/model",
            f"model input dim {params.d_in} != corpus feature_dim {manifest.feature_dim}",
        )
    has_pos = False
    has_neg = False
    per_video_mixed = False
    for rec in manifest.videos:
        if rec.frame_truth is not None:
            truth = np.asarray(rec.frame_truth)
            pos = bool(truth.any())
            neg = bool((truth == 0).any())
            has_pos = has_pos or pos
            has_neg = has_neg or neg
            per_video_mixed = per_video_mixed or (pos and neg)
        elif rec.label == 0:
            has_neg = True
    if not has_pos:
        _fail(f"{pointer}/manifest", "no video carries positive frame truth; frame metrics are impossible")
    if not has_neg:
        _fail(f"{pointer}/manifest", "no negative frames anywhere; frame metrics are impossible")
    if macro and not per_video_mixed:
        _fail(f"{pointer}/manifest", "macro averaging needs >= 1 video whose truth has both classes")
    out_dir = base / out_rel
    _check_writable_dir(out_dir)
    _guard_overwrite([out_dir / "metrics.json", out_dir / "score_traces.jsonl"], args.force)
    return EvalPlan(
        manifest=manifest,
        params=params,
        macro_average=macro,
        threshold=threshold,
        out_dir=out_dir,
    )


def plan_pipeline(doc: dict, base: Path, args: argparse.Namespace) -> PipelinePlan:
    synth_plan = plan_synth(doc, base, args)
    settings = _train_settings(doc, base, args)
    synth_manifest = (synth_plan.out_dir / "manifest.json").resolve()
    if settings.manifest_path.resolve() != synth_manifest:
        _fail("/train/manifest", f"pipeline requires the synth output manifest {synth_manifest}")
    if settings.eval_manifest_path is not None:
        if settings.eval_manifest_path.resolve() != synth_manifest:
            _fail("/train/eval_manifest", "pipeline evaluates on the synth corpus")
    _guard_overwrite(_train_targets(settings), args.force)

    sec = _section(doc, "eval")
    pointer = "/eval"
    _check_keys(sec, EVAL_KEYS, pointer)
    manifest_rel = _as_str(sec, "manifest", pointer, required=True)
    model_rel = _as_str(sec, "model", pointer, required=True)
    out_rel = _as_str(sec, "out_dir", pointer, required=True)
    _as_bool(sec, "macro_average", pointer)
    _as_float(sec, "threshold", pointer)
    if (base / manifest_rel).resolve() != synth_manifest:
        _fail(f"{pointer}/manifest", f"pipeline requires the synth output manifest {synth_manifest}")
    model_path = (base / model_rel).resolve()
    allowed = [settings.out_dir.resolve() / "model_A.bin"]
    if not settings.stage1_only:
        allowed.append(settings.out_dir.resolve() / "model_B.bin")
    if model_path not in allowed:
        _fail(f"{pointer}/model", f"pipeline can only evaluate a model the train step writes: {allowed}")
    out_dir = base / out_rel
    _check_writable_dir(out_dir)
    _guard_overwrite([out_dir / "metrics.json", out_dir / "score_traces.jsonl"], args.force)
    return PipelinePlan(synth=synth_plan, doc=doc, base=base, args=args)


# ---------------------------------------------------------------------------
# Executors


def exec_synth(plan: SynthPlan) -> None:
    manifest = generate_corpus(plan.spec, plan.out_dir)
    print(f"wrote corpus manifest: {plan.out_dir / 'manifest.json'}")
    print(corpus_summary(manifest))


def exec_train(plan: TrainPlan) -> None:
    s = plan.settings
    s.out_dir.mkdir(parents=True, exist_ok=True)
    features = load_corpus_features(plan.manifest)
    if s.stage1_only:
        model_a, history = train_stage_one(plan.manifest, s.mil, features=features)
        save_model(model_a.params, model_a.state, s.out_dir / "model_A.bin")
        write_loss_csv(history, s.out_dir / "stage1_loss.csv")
        final = f"{history[-1]:.6f}" if history else "n/a"
        print(f"stage one done: {s.mil.epochs} epochs, final batch loss {final}")
        print(f"wrote {s.out_dir / 'model_A.bin'}")
        return
    result = run_rounds(
        plan.manifest,
        s.mil,
        s.stage2,
        rounds=s.rounds,
        init_from_a=s.init_from_a,
        eval_manifest=plan.eval_manifest,
        features=features,
    )
    save_model(result.model_a.params, result.model_a.state, s.out_dir / "model_A.bin")
    save_model(result.model_b.params, result.model_b.state, s.out_dir / "model_B.bin")
    write_loss_csv(result.stage1_history, s.out_dir / "stage1_loss.csv")
    for log in result.rounds:
        name = "stage2_loss.csv" if log.round_index == 1 else f"stage2_round{log.round_index}_loss.csv"
        write_loss_csv(log.stage2_history, s.out_dir / name)
    entries = [{"round": log.round_index, "metrics": log.metrics} for log in result.rounds]
    with open(s.out_dir / "round_metrics.json", "w", encoding="utf-8") as fh:
        json.dump(entries, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"stage one done: {s.mil.epochs} epochs")
    for log in result.rounds:
        if log.metrics is None:
            print(f"round {log.round_index}: no frame metrics available")
        else:
            print(
                f"round {log.round_index}: auroc {log.metrics['auroc']:.6f}, "
                f"eer {log.metrics['eer']:.6f}"
            )
    print(f"wrote {s.out_dir / 'model_A.bin'} and {s.out_dir / 'model_B.bin'}")


def exec_pseudo(plan: PseudoPlan) -> None:
    pseudo = generate_pseudo_labels(
        plan.model, plan.manifest, Stage2Config(transform=plan.transform)
    )
    plan.out_path.parent.mkdir(parents=True, exist_ok=True)
    write_pseudo_labels(pseudo.targets, plan.out_path)
    n_abnormal = len(plan.manifest.by_label(1))
    print(
        f"wrote {plan.out_path}: {n_abnormal} abnormal videos labeled, "
        f"{len(plan.manifest.videos)} videos total"
    )


def exec_eval(plan: EvalPlan) -> None:
    clip_scores = score_corpus(plan.params, plan.manifest)
    report, traces = corpus_report(
        plan.manifest,
        clip_scores,
        macro_average=plan.macro_average,
        threshold=plan.threshold,
    )
    plan.out_dir.mkdir(parents=True, exist_ok=True)
    with open(plan.out_dir / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_score_traces(traces, plan.out_dir / "score_traces.jsonl")
    print(
        f"auroc {report['auroc']:.6f}  eer {report['eer']:.6f}  "
        f"video_accuracy {report['video_accuracy']:.6f}  "
        f"({report['n_frames']} frames, {report['n_videos']} videos)"
    )
    print(f"wrote {plan.out_dir / 'metrics.json'} and {plan.out_dir / 'score_traces.jsonl'}")


def exec_pipeline(plan: PipelinePlan) -> None:
    exec_synth(plan.synth)
    # Re-plan each leg now that its inputs exist; structural checks at
    # pipeline planning time keep these from failing on config problems.
    train_plan = plan_train(plan.doc, plan.base, plan.args)
    exec_train(train_plan)
    eval_plan = plan_eval(plan.doc, plan.base, plan.args)
    exec_eval(eval_plan)


_PLANNERS = {
    "synth": plan_synth,
    "train": plan_train,
    "pseudo": plan_pseudo,
    "eval": plan_eval,
    "pipeline": plan_pipeline,
}
_EXECUTORS = {
    "synth": exec_synth,
    "train": exec_train,
    "pseudo": exec_pseudo,
    "eval": exec_eval,
    "pipeline": exec_pipeline,
}


# ---------------------------------------------------------------------------
# Argument parsing and entry points


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fightscore",
        description="Weakly supervised two-stage fight scoring over precomputed video features.",
    )
    parser.set_defaults(
        seed=None, rounds=None, stage1_only=False, transform=None, macro_average=False, force=False
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="JSON run config path")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        return sp

    sp = add_command("synth", "generate a seeded synthetic feature corpus")
    sp.add_argument("--seed", type=int, help="override synth.seed")

    sp = add_command("train", "run the two-stage training scheme")
    sp.add_argument("--seed", type=int, help="override mil.seed and stage2.seed")
    sp.add_argument("--rounds", type=int, help="override train.rounds")
    sp.add_argument("--stage1-only", action="store_true", help="train only generator A")
    sp.add_argument(
        "--transform", choices=("identity", "minmax"), help="override stage2.transform"
    )

    sp = add_command("pseudo", "write per-clip pseudo labels from a trained model")
    sp.add_argument(
        "--transform", choices=("identity", "minmax"), help="override pseudo.transform"
    )

    sp = add_command("eval", "evaluate a trained model against frame truth")
    sp.add_argument("--macro-average", action="store_true", help="average metrics per video")

    sp = add_command("pipeline", "synth, train, and eval in one deterministic run")
    sp.add_argument("--seed", type=int, help="override synth, mil, and stage2 seeds")
    sp.add_argument("--rounds", type=int, help="override train.rounds")
    sp.add_argument("--stage1-only", action="store_true", help="train only generator A")
    sp.add_argument(
        "--transform", choices=("identity", "minmax"), help="override stage2.transform"
    )
    sp.add_argument("--macro-average", action="store_true", help="average metrics per video")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        doc, base = _load_config(Path(args.config))
        plan = _PLANNERS[args.command](doc, base, args)
    except (FightScoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        _EXECUTORS[args.command](plan)
    except (FightScoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


def app() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    app()
