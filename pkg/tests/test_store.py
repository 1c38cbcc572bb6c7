"""On-disk formats: feature files, manifests, JSONL outputs, loss CSV."""

import json
import struct

import numpy as np
import pytest

from fightscore.core import CorpusManifest, FeatureSequence, VideoRecord
from fightscore.errors import CorruptionError, FormatError, ValidationError
from fightscore.store import (
    HEADER_SIZE,
    load_manifest,
    read_feature_header,
    read_features,
    read_pseudo_labels,
    save_manifest,
    write_features,
    write_loss_csv,
    write_pseudo_labels,
    write_score_traces,
)


def random_seq(rng, video_id="v"):
    m = int(rng.integers(1, 20))
    d = int(rng.integers(1, 16))
    clip_len = int(rng.integers(1, 64))
    extra = int(rng.integers(0, clip_len))
    feats = rng.standard_normal((m, d)).astype(np.float32)
    return FeatureSequence(
        video_id=video_id, features=feats, clip_len=clip_len, num_frames=m * clip_len + extra
    )


class TestFeatureFile:
    def test_round_trip_preserves_everything(self, tmp_path):
        rng = np.random.default_rng(10)
        for i in range(20):
            seq = random_seq(rng, video_id=f"v{i}")
            path = tmp_path / f"v{i}.fsq"
            write_features(seq, path)
            back = read_features(path, video_id=seq.video_id)
            assert back.features.tobytes() == seq.features.tobytes()
            assert back.clip_len == seq.clip_len
            assert back.num_frames == seq.num_frames
            assert back.video_id == seq.video_id

    def test_single_half_value_bytes(self, tmp_path):
        seq = FeatureSequence(
            video_id="v", features=np.array([[0.5]], dtype=np.float32), clip_len=32, num_frames=32
        )
        path = tmp_path / "v.fsq"
        write_features(seq, path)
        blob = path.read_bytes()
        assert len(blob) == HEADER_SIZE + 4
        assert blob[:HEADER_SIZE] == b"FSQ1" + struct.pack("<IIII", 1, 1, 32, 32)
        assert blob[HEADER_SIZE:] == b"\x00\x00\x00\x3f"

    def test_video_id_defaults_to_stem(self, tmp_path):
        rng = np.random.default_rng(11)
        seq = random_seq(rng)
        path = tmp_path / "clip_042.fsq"
        write_features(seq, path)
        assert read_features(path).video_id == "clip_042"

    def test_bad_magic_is_format_error(self, tmp_path):
        rng = np.random.default_rng(12)
        seq = random_seq(rng)
        path = tmp_path / "v.fsq"
        write_features(seq, path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            read_features(path)

    def test_truncated_payload_is_corruption_error(self, tmp_path):
        rng = np.random.default_rng(13)
        seq = random_seq(rng)
        path = tmp_path / "v.fsq"
        write_features(seq, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-4])
        with pytest.raises(CorruptionError) as info:
            read_features(path)
        expected = seq.n_clips * seq.feature_dim * 4
        assert str(expected) in str(info.value)
        assert str(expected - 4) in str(info.value)

    def test_trailing_bytes_are_corruption_error(self, tmp_path):
        rng = np.random.default_rng(14)
        seq = random_seq(rng)
        path = tmp_path / "v.fsq"
        write_features(seq, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(CorruptionError):
            read_features(path)

    def test_header_reader(self, tmp_path):
        rng = np.random.default_rng(15)
        seq = random_seq(rng)
        path = tmp_path / "v.fsq"
        write_features(seq, path)
        header = read_feature_header(path)
        assert (header.m, header.d) == (seq.n_clips, seq.feature_dim)
        assert (header.clip_len, header.num_frames) == (seq.clip_len, seq.num_frames)


class TestManifest:
    def build(self, tmp_path, rng, labels=(0, 1)):
        records = []
        for i, label in enumerate(labels):
            m = int(rng.integers(2, 6))
            feats = rng.standard_normal((m, 4)).astype(np.float32)
            seq = FeatureSequence(
                video_id=f"v{i}", features=feats, clip_len=8, num_frames=m * 8
            )
            path = tmp_path / "features" / f"v{i}.fsq"
            path.parent.mkdir(exist_ok=True)
            write_features(seq, path)
            truth = None
            if label == 1:
                truth = np.zeros(seq.num_frames, dtype=np.uint8)
                truth[:8] = 1
            records.append(
                VideoRecord(
                    video_id=f"v{i}",
                    label=label,
                    feature_path=str(path),
                    num_frames=seq.num_frames,
                    frame_truth=truth,
                )
            )
        return CorpusManifest(videos=tuple(records), feature_dim=4, clip_len=8)

    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(20)
        manifest = self.build(tmp_path, rng)
        path = tmp_path / "manifest.json"
        save_manifest(manifest, path)
        back = load_manifest(path)
        assert back.feature_dim == manifest.feature_dim
        assert back.clip_len == manifest.clip_len
        assert [v.video_id for v in back.videos] == [v.video_id for v in manifest.videos]
        for a, b in zip(back.videos, manifest.videos):
            assert a.label == b.label
            assert a.num_frames == b.num_frames
            if b.frame_truth is None:
                assert a.frame_truth is None
            else:
                np.testing.assert_array_equal(a.frame_truth, b.frame_truth)

    def test_paths_relativized(self, tmp_path):
        rng = np.random.default_rng(21)
        manifest = self.build(tmp_path, rng)
        path = tmp_path / "manifest.json"
        save_manifest(manifest, path)
        doc = json.loads(path.read_text())
        for entry in doc["videos"]:
            assert not entry["feature_path"].startswith("/")

    def test_label_schema_error_names_pointer(self, tmp_path):
        rng = np.random.default_rng(22)
        manifest = self.build(tmp_path, rng)
        path = tmp_path / "manifest.json"
        save_manifest(manifest, path)
        doc = json.loads(path.read_text())
        doc["videos"][0]["label"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError) as info:
            load_manifest(path)
        assert "/videos/0/label" in str(info.value)

    def test_missing_feature_file_is_validation_error(self, tmp_path):
        rng = np.random.default_rng(23)
        manifest = self.build(tmp_path, rng)
        path = tmp_path / "manifest.json"
        save_manifest(manifest, path)
        (tmp_path / "features" / "v0.fsq").unlink()
        with pytest.raises(ValidationError):
            load_manifest(path)

    def test_not_json_is_format_error(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{nope")
        with pytest.raises(FormatError):
            load_manifest(path)

    def test_single_class_guard_is_optional(self, tmp_path):
        rng = np.random.default_rng(24)
        manifest = self.build(tmp_path, rng, labels=(0, 0))
        path = tmp_path / "manifest.json"
        save_manifest(manifest, path)
        with pytest.raises(ValidationError):
            load_manifest(path)
        back = load_manifest(path, require_both_classes=False)
        assert len(back.videos) == 2


class TestJsonlOutputs:
    def test_pseudo_label_round_trip(self, tmp_path):
        rng = np.random.default_rng(30)
        targets = {
            "a": rng.uniform(0, 1, size=5),
            "b": np.zeros(3),
        }
        path = tmp_path / "pseudo_labels.jsonl"
        write_pseudo_labels(targets, path)
        back = read_pseudo_labels(path)
        assert set(back) == {"a", "b"}
        np.testing.assert_allclose(back["a"], targets["a"], atol=0)
        np.testing.assert_array_equal(back["b"], targets["b"])

    def test_score_traces_schema(self, tmp_path):
        traces = [
            {"video_id": "v0", "clip_scores": [0.25, 0.5], "frame_scores": [0.25] * 8 + [0.5] * 8}
        ]
        path = tmp_path / "score_traces.jsonl"
        write_score_traces(traces, path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 1
        obj = json.loads(lines[0])
        assert set(obj) == {"video_id", "clip_scores", "frame_scores"}
        assert obj["frame_scores"][0] == 0.25

    def test_loss_csv_format(self, tmp_path):
        path = tmp_path / "stage1_loss.csv"
        write_loss_csv([1.5, 0.25, 0.125], path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "epoch,loss"
        assert lines[1] == "1,1.5"
        assert lines[3] == "3,0.125"
