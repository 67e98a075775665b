import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from affectfusion.cli import main

TINY = str(Path(__file__).resolve().parents[1] / "configs" / "tiny.yaml")
SHORT = [
    "--override", "data.window_length=16",
    "--override", "data.windows_per_video=2",
    "--override", "training.batch_size=4",
    "--override", "training.max_iterations=3",
    "--override", "training.finetune_epochs=1",
]


def invoke(*args):
    result = CliRunner().invoke(main, list(args), catch_exceptions=False)
    return result


def tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "corpus"
    res = invoke(
        "make-synth", "--config", TINY, "--seed", "4", "--out", str(out),
        "--num-videos", "4", "--duration", "1.5", "--fps", "15", "--fps", "25", "--fps", "30", "--fps", "24",
        "--drop-audio", "2",
    )
    assert res.exit_code == 0, res.output
    return out


@pytest.fixture(scope="module")
def trained(tmp_path_factory, cli_corpus):
    out = tmp_path_factory.mktemp("run")
    feats = out / "features"
    assert invoke("preprocess-audio", "--config", TINY, "--corpus", str(cli_corpus), "--out", str(feats)).exit_code == 0
    common = ["--config", TINY, "--out", str(out), *SHORT,
              "--override", f"data.corpus_dir={cli_corpus}", "--override", f"data.audio_features_dir={feats}"]
    for stage in ("visual", "audio", "fusion-init", "finetune"):
        res = invoke("train", "--stage", stage, *common)
        assert res.exit_code == 0, res.output
    return out, feats


def test_make_synth_deterministic(cli_corpus, tmp_path):
    res = invoke(
        "make-synth", "--config", TINY, "--seed", "4", "--out", str(tmp_path / "again"),
        "--num-videos", "4", "--duration", "1.5", "--fps", "15", "--fps", "25", "--fps", "30", "--fps", "24",
        "--drop-audio", "2",
    )
    assert res.exit_code == 0
    assert tree_bytes(cli_corpus) == tree_bytes(tmp_path / "again")
    assert (cli_corpus / "resolved_config.yaml").exists()


def test_preprocess_audio(cli_corpus, tmp_path):
    res = invoke("preprocess-audio", "--config", TINY, "--corpus", str(cli_corpus), "--out", str(tmp_path / "f"))
    assert res.exit_code == 0
    summary = json.loads(res.output)
    assert summary["processed"] == 4 and summary["skipped"] == 0
    assert summary["missing_audio"] == ["video002"]
    assert summary["per_fps"] == {"15.0": 1, "24.0": 1, "25.0": 1, "30.0": 1}
    bins = sorted(p.name for p in (tmp_path / "f").glob("*.bin"))
    assert bins == [f"video00{i}.bin" for i in range(4)]
    index = json.loads((tmp_path / "f" / "index.json").read_text())
    assert index["video002"]["missing_audio"] is True and index["video001"]["missing_audio"] is False
    assert index["video001"]["dim"] == 200 and index["video001"]["frame_count"] == 38

    invoke("preprocess-audio", "--config", TINY, "--corpus", str(cli_corpus), "--out", str(tmp_path / "g"))
    first, second = tree_bytes(tmp_path / "f"), tree_bytes(tmp_path / "g")
    assert first == second


def test_override_in_resolved_config(tmp_path, cli_corpus):
    out = tmp_path / "o"
    res = invoke(
        "preprocess-audio", "--config", TINY, "--corpus", str(cli_corpus), "--out", str(out),
        "--override", "training.max_lr=0.002", "--override", "fusion.mode=attention", "--seed", "11",
    )
    assert res.exit_code == 0
    resolved = yaml.safe_load((out / "resolved_config.yaml").read_text())
    assert resolved["training"]["max_lr"] == 0.002
    assert resolved["fusion"]["mode"] == "attention"
    assert resolved["seed"] == 11
    assert resolved["model"]["visual"]["channel_widths"] == [8, 16, 32, 32, 64]


def test_stage_order_exit_code(tmp_path, cli_corpus):
    res = CliRunner().invoke(
        main, ["train", "--stage", "fusion-init", "--config", TINY, "--out", str(tmp_path),
               "--override", f"data.corpus_dir={cli_corpus}"]
    )
    assert res.exit_code == 2
    assert "StageOrderViolation" in res.output


def test_train_writes_checkpoints(trained):
    out, _ = trained
    for stage in ("visual", "audio", "fusion-init", "finetune"):
        manifest = json.loads((out / "checkpoints" / stage / "manifest.json").read_text())
        assert manifest["stage"] == stage
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert {r["stage"] for r in rows} == {"visual", "audio", "fusion-init", "finetune"}


def test_evaluate(trained, cli_corpus, tmp_path):
    out, feats = trained
    ckpt = str(out / "checkpoints" / "finetune")
    args = ["evaluate", "--config", TINY, "--checkpoint", ckpt, "--corpus", str(cli_corpus),
            "--override", f"data.audio_features_dir={feats}"]
    res = invoke(*args, "--out", str(tmp_path / "e1"))
    assert res.exit_code == 0, res.output
    report = json.loads((tmp_path / "e1" / "report.json").read_text())
    assert report["flagged_missing_audio"] == ["video002"]
    assert report["skipped"] == 0
    assert -1.0 <= report["ccc_mean"] <= 1.0
    assert set(report["per_video"]) == {f"video00{i}" for i in range(4)}

    for vid in report["per_video"]:
        rows = list(csv.DictReader(open(tmp_path / "e1" / "predictions" / f"{vid}.csv")))
        values = np.array([[float(r["valence"]), float(r["arousal"])] for r in rows])
        assert np.all(np.abs(values) <= 1.0)
        assert [int(r["frame"]) for r in rows] == list(range(len(rows)))

    invoke(*args, "--out", str(tmp_path / "e2"))
    assert (tmp_path / "e1" / "report.json").read_bytes() == (tmp_path / "e2" / "report.json").read_bytes()


def test_predict(trained, cli_corpus, tmp_path):
    out, feats = trained
    res = invoke("predict", "--config", TINY, "--checkpoint", str(out / "checkpoints" / "visual"),
                 "--corpus", str(cli_corpus), "--out", str(tmp_path), "--override", f"data.audio_features_dir={feats}")
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["videos"] == 4
    assert len(list((tmp_path / "predictions").glob("*.csv"))) == 4


def test_evaluate_incompatible_corpus(trained, tmp_path):
    out, _ = trained
    big = tmp_path / "big"
    assert invoke("make-synth", "--out", str(big), "--num-videos", "1", "--duration", "0.5", "--frame-size", "24").exit_code == 0
    res = CliRunner().invoke(
        main, ["evaluate", "--checkpoint", str(out / "checkpoints" / "visual"), "--corpus", str(big), "--out", str(tmp_path / "e")]
    )
    assert res.exit_code == 2
    assert "IncompatibleCheckpoint" in res.output
