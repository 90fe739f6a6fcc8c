#!/usr/bin/env python3
"""End-to-end CLI walkthrough in a temporary directory.

Generates a small labeled CSV plus a mock score table, then drives the
installed command line through train -> predict -> evaluate -> compare and
echoes every command it runs. Nothing outside the temp directory is touched.
"""

from __future__ import annotations

import csv
import subprocess
import sys
import tempfile
from pathlib import Path

import yaml

import scorefusion as sf

TEXTS = [
    ("crimson sunset over the bay", 1, 0),
    ("azure waves hit the rocks", 0, 1),
    ("scarlet leaves in autumn", 1, 0),
    ("cobalt sky after the storm", 0, 1),
    ("vermilion paint on canvas", 1, 0),
    ("sapphire depths of the lake", 0, 1),
    ("crimson banner in the wind", 1, 0),
    ("azure glass catching light", 0, 1),
]


def run(cmd: list[str]) -> str:
    print("+", " ".join(cmd))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    sys.stdout.write(proc.stdout)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(proc.returncode)
    return proc.stdout


def main() -> None:
    with tempfile.TemporaryDirectory(prefix="scorefusion-demo-") as tmp:
        root = Path(tmp)
        train_csv = root / "train.csv"
        with open(train_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["text", "warm", "cool"])
            writer.writerows(TEXTS)

        table = {text: (0.5, 0.5) for text, _, _ in TEXTS}
        table_path = root / "table.tsv"
        sf.write_mock_table(table, str(table_path))

        config = {
            "label_columns": ["warm", "cool"],
            "llm_provider": "mock",
            "mock_table": str(table_path),
            "encoder": {"dim": 16, "buckets": 1024, "lr_small": 0.05},
            "fusion": {"hidden_sizes": [16], "epochs": 200, "lr_high": 0.5,
                       "train_batch_size": 8, "seed": 42},
            "validation_fraction": 0.0,
            "train_csv": str(train_csv),
            "model_out": str(root / "model.json"),
            "runs_dir": str(root / "runs"),
        }
        config_path = root / "config.yaml"
        config_path.write_text(yaml.safe_dump(config), encoding="utf-8")

        base = [sys.executable, "-m", "scorefusion.cli"]
        train_run = run(base + ["train", str(config_path)]).strip()

        run(base + ["predict", "--model", str(root / "model.json"),
                    "--text", "crimson dawn breaking",
                    "--text", "sapphire mist rolling in"])

        eval_out = run(base + ["evaluate",
                               "--model", str(root / "model.json"),
                               "--eval-csv", str(train_csv),
                               "--runs-dir", str(root / "runs")])
        eval_run = eval_out.splitlines()[0].strip()

        run(base + ["compare", "--runs-dir", str(root / "runs"),
                    train_run, eval_run])
    print("demo finished cleanly")


if __name__ == "__main__":
    main()
