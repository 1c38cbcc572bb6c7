"""Drive the command line end to end from a generated config file.

Writes a pipeline config into a temp directory, runs it twice, and checks
that the second run reproduces the first byte for byte.
"""

import json
import tempfile
from pathlib import Path

from fightscore.cli import main as fightscore_main


def main():
    with tempfile.TemporaryDirectory() as work:
        base = Path(work)
        config = {
            "synth": {
                "out_dir": "corpus",
                "n_normal": 8,
                "n_abnormal": 8,
                "d": 16,
                "clips_range": [6, 24],
                "seed": 5,
            },
            "train": {
                "manifest": "corpus/manifest.json",
                "out_dir": "run",
                "mil": {"epochs": 300, "seed": 5},
                "stage2": {"epochs": 100, "transform": "minmax", "seed": 5},
            },
            "eval": {
                "manifest": "corpus/manifest.json",
                "model": "run/model_B.bin",
                "out_dir": "report",
            },
        }
        cfg = base / "pipeline.json"
        cfg.write_text(json.dumps(config, indent=1))

        code = fightscore_main(["pipeline", "--config", str(cfg)])
        print(f"first run exit code: {code}")
        report = json.loads((base / "report" / "metrics.json").read_text())
        print(json.dumps(report, indent=1))

        model_snapshot = (base / "run" / "model_B.bin").read_bytes()
        report_snapshot = (base / "report" / "metrics.json").read_bytes()
        code = fightscore_main(["pipeline", "--config", str(cfg), "--force"])
        print(f"second run exit code: {code}")
        same = (base / "run" / "model_B.bin").read_bytes() == model_snapshot
        same &= (base / "report" / "metrics.json").read_bytes() == report_snapshot
        print(f"reproducible: {same}")


if __name__ == "__main__":
    main()
