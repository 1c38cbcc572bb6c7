"""Command-line behavior: planning errors, outputs, determinism, exit codes."""

import filecmp
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from fightscore.cli import main as cli_main
from fightscore.core import CorpusManifest
from fightscore.store import load_manifest, read_pseudo_labels, save_manifest

SYNTH_SECTION = {
    "out_dir": "corpus",
    "n_normal": 5,
    "n_abnormal": 5,
    "d": 8,
    "clips_range": [4, 10],
    "seed": 31,
}
TRAIN_SECTION = {
    "manifest": "corpus/manifest.json",
    "out_dir": "run",
    "mil": {"epochs": 40, "pairs_per_batch": 5, "seed": 31},
    "stage2": {"epochs": 20, "seed": 31},
}
EVAL_SECTION = {
    "manifest": "corpus/manifest.json",
    "model": "run/model_B.bin",
    "out_dir": "report",
}


def write_config(tmp_path: Path, doc: dict, name: str = "config.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def make_corpus(tmp_path: Path, synth: dict | None = None) -> Path:
    cfg = write_config(tmp_path, {"synth": synth or SYNTH_SECTION}, "synth.json")
    assert cli_main(["synth", "--config", str(cfg)]) == 0
    return tmp_path / (synth or SYNTH_SECTION)["out_dir"] / "manifest.json"


class TestSynthCommand:
    def test_creates_corpus(self, tmp_path):
        manifest_path = make_corpus(tmp_path)
        manifest = load_manifest(manifest_path)
        assert len(manifest.videos) == 10
        for rec in manifest.videos:
            assert Path(rec.feature_path).exists()

    def test_refuses_overwrite_without_force(self, tmp_path):
        cfg = write_config(tmp_path, {"synth": SYNTH_SECTION})
        assert cli_main(["synth", "--config", str(cfg)]) == 0
        assert cli_main(["synth", "--config", str(cfg)]) == 2

    def test_force_rerun_reproduces_bytes(self, tmp_path):
        cfg = write_config(tmp_path, {"synth": SYNTH_SECTION})
        assert cli_main(["synth", "--config", str(cfg)]) == 0
        first = (tmp_path / "corpus" / "manifest.json").read_bytes()
        feature = next((tmp_path / "corpus" / "features").iterdir())
        feature_bytes = feature.read_bytes()
        assert cli_main(["synth", "--config", str(cfg), "--force"]) == 0
        assert (tmp_path / "corpus" / "manifest.json").read_bytes() == first
        assert feature.read_bytes() == feature_bytes

    def test_seed_override_changes_output(self, tmp_path):
        cfg = write_config(tmp_path, {"synth": SYNTH_SECTION})
        assert cli_main(["synth", "--config", str(cfg)]) == 0
        feature = next((tmp_path / "corpus" / "features").iterdir())
        first = feature.read_bytes()
        assert cli_main(["synth", "--config", str(cfg), "--force", "--seed", "99"]) == 0
        assert feature.read_bytes() != first


class TestTrainCommand:
    def test_writes_models_and_logs(self, tmp_path):
        make_corpus(tmp_path)
        cfg = write_config(tmp_path, {"train": TRAIN_SECTION}, "train.json")
        assert cli_main(["train", "--config", str(cfg)]) == 0
        run = tmp_path / "run"
        for name in (
            "model_A.bin",
            "model_B.bin",
            "stage1_loss.csv",
            "stage2_loss.csv",
            "round_metrics.json",
        ):
            assert (run / name).exists(), name
        rounds = json.loads((run / "round_metrics.json").read_text())
        assert [entry["round"] for entry in rounds] == [1]

    def test_stage1_only_writes_only_generator_a(self, tmp_path):
        make_corpus(tmp_path)
        cfg = write_config(tmp_path, {"train": TRAIN_SECTION}, "train.json")
        assert cli_main(["train", "--config", str(cfg), "--stage1-only"]) == 0
        run = tmp_path / "run"
        assert (run / "model_A.bin").exists()
        assert (run / "stage1_loss.csv").exists()
        assert not (run / "model_B.bin").exists()
        assert not (run / "stage2_loss.csv").exists()

    def test_two_rounds_write_per_round_logs(self, tmp_path):
        make_corpus(tmp_path)
        cfg = write_config(tmp_path, {"train": TRAIN_SECTION}, "train.json")
        assert cli_main(["train", "--config", str(cfg), "--rounds", "2"]) == 0
        run = tmp_path / "run"
        assert (run / "stage2_loss.csv").exists()
        assert (run / "stage2_round2_loss.csv").exists()
        rounds = json.loads((run / "round_metrics.json").read_text())
        assert [entry["round"] for entry in rounds] == [1, 2]

    def test_deterministic_across_runs(self, tmp_path):
        make_corpus(tmp_path)
        cfg = write_config(tmp_path, {"train": TRAIN_SECTION}, "train.json")
        assert cli_main(["train", "--config", str(cfg)]) == 0
        keep = tmp_path / "keep"
        keep.mkdir()
        for name in ("model_A.bin", "model_B.bin"):
            shutil.copyfile(tmp_path / "run" / name, keep / name)
        assert cli_main(["train", "--config", str(cfg), "--force"]) == 0
        for name in ("model_A.bin", "model_B.bin"):
            assert filecmp.cmp(keep / name, tmp_path / "run" / name, shallow=False)

    def test_single_class_corpus_rejected_in_planning(self, tmp_path):
        manifest_path = make_corpus(tmp_path)
        manifest = load_manifest(manifest_path)
        normals = CorpusManifest(
            videos=tuple(manifest.by_label(0)),
            feature_dim=manifest.feature_dim,
            clip_len=manifest.clip_len,
        )
        save_manifest(normals, tmp_path / "corpus" / "normals.json")
        section = dict(TRAIN_SECTION, manifest="corpus/normals.json")
        cfg = write_config(tmp_path, {"train": section}, "train.json")
        assert cli_main(["train", "--config", str(cfg)]) == 2
        assert not (tmp_path / "run").exists()


class TestPseudoCommand:
    @pytest.fixture()
    def trained(self, tmp_path):
        make_corpus(tmp_path)
        cfg = write_config(tmp_path, {"train": TRAIN_SECTION}, "train.json")
        assert cli_main(["train", "--config", str(cfg)]) == 0
        return tmp_path

    def test_normal_targets_all_zero(self, trained):
        doc = {
            "pseudo": {
                "manifest": "corpus/manifest.json",
                "model": "run/model_A.bin",
                "out": "labels.jsonl",
            }
        }
        cfg = write_config(trained, doc, "pseudo.json")
        assert cli_main(["pseudo", "--config", str(cfg)]) == 0
        targets = read_pseudo_labels(trained / "labels.jsonl")
        manifest = load_manifest(trained / "corpus" / "manifest.json")
        for rec in manifest.by_label(0):
            assert not targets[rec.video_id].any()

    def test_transforms_differ_only_on_abnormal_videos(self, trained):
        doc = {
            "pseudo": {
                "manifest": "corpus/manifest.json",
                "model": "run/model_A.bin",
                "out": "labels.jsonl",
            }
        }
        cfg = write_config(trained, doc, "pseudo.json")
        assert cli_main(["pseudo", "--config", str(cfg)]) == 0
        identity = read_pseudo_labels(trained / "labels.jsonl")
        assert (
            cli_main(["pseudo", "--config", str(cfg), "--force", "--transform", "minmax"])
            == 0
        )
        minmax = read_pseudo_labels(trained / "labels.jsonl")
        manifest = load_manifest(trained / "corpus" / "manifest.json")
        for rec in manifest.by_label(0):
            np.testing.assert_array_equal(identity[rec.video_id], minmax[rec.video_id])
        changed = sum(
            not np.array_equal(identity[r.video_id], minmax[r.video_id])
            for r in manifest.by_label(1)
        )
        assert changed > 0

    def test_missing_model_fails_planning(self, trained):
        doc = {
            "pseudo": {
                "manifest": "corpus/manifest.json",
                "model": "run/no_such_model.bin",
                "out": "labels.jsonl",
            }
        }
        cfg = write_config(trained, doc, "pseudo.json")
        assert cli_main(["pseudo", "--config", str(cfg)]) == 2
        assert not (trained / "labels.jsonl").exists()


class TestEvalCommand:
    @pytest.fixture()
    def trained(self, tmp_path):
        make_corpus(tmp_path)
        cfg = write_config(tmp_path, {"train": TRAIN_SECTION}, "train.json")
        assert cli_main(["train", "--config", str(cfg)]) == 0
        return tmp_path

    def test_writes_report_and_traces(self, trained):
        cfg = write_config(trained, {"eval": EVAL_SECTION}, "eval.json")
        assert cli_main(["eval", "--config", str(cfg)]) == 0
        report = json.loads((trained / "report" / "metrics.json").read_text())
        assert set(report) == {"auroc", "eer", "video_accuracy", "n_frames", "n_videos"}
        manifest = load_manifest(trained / "corpus" / "manifest.json")
        frames = {r.video_id: r.num_frames for r in manifest.videos}
        lines = (trained / "report" / "score_traces.jsonl").read_text().splitlines()
        assert len(lines) == len(manifest.videos)
        for line in lines:
            trace = json.loads(line)
            assert len(trace["frame_scores"]) == frames[trace["video_id"]]

    def test_macro_average_flag_runs(self, trained):
        cfg = write_config(trained, {"eval": EVAL_SECTION}, "eval.json")
        assert cli_main(["eval", "--config", str(cfg), "--macro-average"]) == 0
        report = json.loads((trained / "report" / "metrics.json").read_text())
        assert 0.0 <= report["auroc"] <= 1.0

    def test_truthless_corpus_rejected_in_planning(self, trained):
        manifest = load_manifest(trained / "corpus" / "manifest.json")
        from fightscore.core import VideoRecord

        stripped = CorpusManifest(
            videos=tuple(
                VideoRecord(
                    video_id=r.video_id,
                    label=r.label,
                    feature_path=r.feature_path,
                    num_frames=r.num_frames,
                )
                for r in manifest.videos
            ),
            feature_dim=manifest.feature_dim,
            clip_len=manifest.clip_len,
        )
        save_manifest(stripped, trained / "corpus" / "truthless.json")
        section = dict(EVAL_SECTION, manifest="corpus/truthless.json")
        cfg = write_config(trained, {"eval": section}, "eval.json")
        assert cli_main(["eval", "--config", str(cfg)]) == 2
        assert not (trained / "report").exists()


class TestPipelineCommand:
    def test_matches_separate_commands(self, tmp_path):
        pipe_dir = tmp_path / "pipe"
        step_dir = tmp_path / "step"
        pipe_dir.mkdir()
        step_dir.mkdir()
        doc = {"synth": SYNTH_SECTION, "train": TRAIN_SECTION, "eval": EVAL_SECTION}
        cfg = write_config(pipe_dir, doc, "pipeline.json")
        assert cli_main(["pipeline", "--config", str(cfg)]) == 0
        for name, section in (("synth", "synth"), ("train", "train"), ("eval", "eval")):
            step_cfg = write_config(step_dir, {section: doc[section]}, f"{name}.json")
            assert cli_main([name, "--config", str(step_cfg)]) == 0
        for rel in (
            "corpus/manifest.json",
            "run/model_A.bin",
            "run/model_B.bin",
            "run/round_metrics.json",
            "report/metrics.json",
            "report/score_traces.jsonl",
        ):
            assert filecmp.cmp(pipe_dir / rel, step_dir / rel, shallow=False), rel

    def test_mismatched_paths_rejected(self, tmp_path):
        doc = {
            "synth": SYNTH_SECTION,
            "train": dict(TRAIN_SECTION, manifest="elsewhere/manifest.json"),
            "eval": EVAL_SECTION,
        }
        cfg = write_config(tmp_path, doc, "pipeline.json")
        assert cli_main(["pipeline", "--config", str(cfg)]) == 2
        assert not (tmp_path / "corpus").exists()


class TestValidationBeforeSideEffects:
    def test_unknown_key_rejected(self, tmp_path):
        doc = {"synth": dict(SYNTH_SECTION, sigma=2.0)}
        cfg = write_config(tmp_path, doc)
        assert cli_main(["synth", "--config", str(cfg)]) == 2
        assert not (tmp_path / "corpus").exists()

    def test_unknown_section_rejected(self, tmp_path):
        cfg = write_config(tmp_path, {"synth": SYNTH_SECTION, "extra": {}})
        assert cli_main(["synth", "--config", str(cfg)]) == 2

    def test_bad_nested_value_stops_before_output(self, tmp_path):
        make_corpus(tmp_path)
        section = dict(TRAIN_SECTION, mil=dict(TRAIN_SECTION["mil"], epochs=0))
        cfg = write_config(tmp_path, {"train": section}, "train.json")
        assert cli_main(["train", "--config", str(cfg)]) == 2
        assert not (tmp_path / "run").exists()

    def test_malformed_json_rejected(self, tmp_path):
        cfg = tmp_path / "broken.json"
        cfg.write_text("{not json")
        assert cli_main(["synth", "--config", str(cfg)]) == 2

    def test_missing_config_rejected(self, tmp_path):
        assert cli_main(["synth", "--config", str(tmp_path / "absent.json")]) == 2

    def test_unknown_command_rejected(self):
        assert cli_main(["frobnicate", "--config", "x.json"]) == 2
