from __future__ import annotations

import json
from pathlib import Path

import pytest

from prpo.cli import main
from prpo.synth import (
    make_permutation_task,
    make_regression_task,
    make_separable_classification,
    write_dataset,
)


@pytest.fixture
def cls_task(tmp_path):
    examples, manifest, _ = make_separable_classification(10, 3, seed=2)
    csv_path = tmp_path / "data.csv"
    manifest_path = tmp_path / "manifest.json"
    write_dataset(examples, manifest, csv_path, manifest_path)
    return csv_path, manifest_path


@pytest.fixture
def reg_task(tmp_path):
    examples, manifest = make_regression_task(20, 3, seed=4)
    csv_path = tmp_path / "reg.csv"
    manifest_path = tmp_path / "reg_manifest.json"
    write_dataset(examples, manifest, csv_path, manifest_path)
    return csv_path, manifest_path


def lines(path: Path) -> list[str]:
    return path.read_text(encoding="utf-8").splitlines()


def test_prepare_writes_m_by_rows_records(cls_task, tmp_path):
    csv_path, manifest_path = cls_task
    out = tmp_path / "prep"
    code = main(
        ["prepare", "--dataset", str(csv_path), "--manifest", str(manifest_path),
         "--m", "4", "--seed", "1", "--out", str(out)]
    )
    assert code == 0
    records = [json.loads(l) for l in lines(out / "prompts.jsonl")]
    assert len(records) == 40
    assert {r["permutation_id"] for r in records} == {0, 1, 2, 3}
    assert all({"example_id", "permutation_id", "prompt", "label"} <= set(r) for r in records)


def test_prepare_idempotent_bytes(cls_task, tmp_path):
    csv_path, manifest_path = cls_task
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(
            ["prepare", "--dataset", str(csv_path), "--manifest", str(manifest_path),
             "--m", "3", "--seed", "5", "--out", str(out)]
        ) == 0
        outs.append((out / "prompts.jsonl").read_bytes())
    assert outs[0] == outs[1]


def test_prepare_missing_manifest_exits_2(cls_task, tmp_path):
    csv_path, _ = cls_task
    code = main(
        ["prepare", "--dataset", str(csv_path), "--manifest", str(tmp_path / "nope.json"),
         "--out", str(tmp_path / "x")]
    )
    assert code == 2


def _train(csv_path, manifest_path, out, extra=()):
    return main(
        ["train", "--dataset", str(csv_path), "--manifest", str(manifest_path),
         "--out", str(out), "--m", "2", "--G", "3", "--batch-size", "4",
         "--mini-batch", "4", "--epochs", "100", "--max-steps", "10",
         "--lr", "0.5", "--seed", "3", *extra]
    )


def test_train_emits_one_metric_line_per_step(cls_task, tmp_path):
    csv_path, manifest_path = cls_task
    out = tmp_path / "run"
    assert _train(csv_path, manifest_path, out) == 0
    rows = [json.loads(l) for l in lines(out / "metrics.jsonl")]
    assert len(rows) == 10
    assert [r["step"] for r in rows] == list(range(1, 11))
    assert {"mean_reward", "loss", "kl", "clip_fraction", "nonzero_advantage_fraction"} <= set(rows[0])
    assert (out / "params.json").exists()


def test_train_metrics_byte_identical_across_runs(cls_task, tmp_path):
    csv_path, manifest_path = cls_task
    blobs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert _train(csv_path, manifest_path, out) == 0
        blobs.append((out / "metrics.jsonl").read_bytes())
    assert blobs[0] == blobs[1]


def test_train_grpo_mode_coerces_m(cls_task, tmp_path, capsys):
    csv_path, manifest_path = cls_task
    out = tmp_path / "grpo"
    assert _train(csv_path, manifest_path, out, extra=("--mode", "grpo")) == 0
    config = json.loads((out / "config.json").read_text())
    assert config["mode"] == "grpo" and config["m"] == 1
    assert "coerced" in capsys.readouterr().err


def test_train_unreachable_endpoint_exits_4(cls_task, tmp_path, monkeypatch):
    import socket

    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    monkeypatch.setattr("prpo.cli.RemotePolicy", _fast_remote())
    csv_path, manifest_path = cls_task
    code = _train(
        csv_path, manifest_path, tmp_path / "remote",
        extra=("--endpoint", f"http://127.0.0.1:{port}"),
    )
    assert code == 4


def _fast_remote():
    from functools import partial

    from prpo.trainer import RemotePolicy

    return partial(RemotePolicy, retries=3, backoff=0.01, timeout=1.0)


def test_train_nonfinite_loss_exits_3(cls_task, tmp_path):
    csv_path, manifest_path = cls_task
    code = main(
        ["train", "--dataset", str(csv_path), "--manifest", str(manifest_path),
         "--out", str(tmp_path / "blow"), "--m", "2", "--G", "4",
         "--batch-size", "8", "--mini-batch", "2", "--epochs", "5",
         "--lr", "1e30", "--seed", "3"]
    )
    assert code == 3


def test_eval_classification_reports_accuracy(cls_task, tmp_path):
    csv_path, manifest_path = cls_task
    run = tmp_path / "run"
    assert _train(csv_path, manifest_path, run) == 0
    out = tmp_path / "eval"
    code = main(
        ["eval", "--dataset", str(csv_path), "--manifest", str(manifest_path),
         "--params", str(run / "params.json"), "--seed", "3", "--out", str(out)]
    )
    assert code == 0
    rows = [json.loads(l) for l in lines(out / "reports.jsonl")]
    assert rows[0]["metric_name"] == "accuracy"
    summary = lines(out / "summary.csv")
    assert summary[0].startswith("method,dataset,metric")
    assert ",accuracy," in summary[1]


def test_eval_regression_reports_nmae(reg_task, tmp_path):
    csv_path, manifest_path = reg_task
    run = tmp_path / "rrun"
    assert _train(csv_path, manifest_path, run) == 0
    out = tmp_path / "reval"
    code = main(
        ["eval", "--dataset", str(csv_path), "--manifest", str(manifest_path),
         "--params", str(run / "params.json"), "--seed", "3", "--out", str(out)]
    )
    assert code == 0
    rows = [json.loads(l) for l in lines(out / "reports.jsonl")]
    assert rows[0]["metric_name"] == "nmae"


def test_eval_two_methods_emits_win_tie_loss(cls_task, tmp_path):
    csv_path, manifest_path = cls_task
    run1, run2 = tmp_path / "m1", tmp_path / "m2"
    assert _train(csv_path, manifest_path, run1) == 0
    assert _train(csv_path, manifest_path, run2, extra=("--mode", "grpo")) == 0
    out = tmp_path / "pair"
    code = main(
        ["eval", "--dataset", str(csv_path), "--manifest", str(manifest_path),
         "--method", f"two_level={run1 / 'params.json'}",
         "--method", f"baseline={run2 / 'params.json'}",
         "--seed", "3", "--out", str(out)]
    )
    assert code == 0
    aggregate = json.loads((out / "aggregate.json").read_text())
    assert "win_tie_loss" in aggregate and "mean_rank" in aggregate
    assert len([json.loads(l) for l in lines(out / "reports.jsonl")]) == 2


def test_endpoint_env_var_fallback(cls_task, tmp_path, monkeypatch):
    monkeypatch.setattr("prpo.cli.RemotePolicy", _fast_remote())
    monkeypatch.setenv("PRPO_ENDPOINT", f"http://127.0.0.1:{_closed_port()}")
    csv_path, manifest_path = cls_task
    code = _train(csv_path, manifest_path, tmp_path / "envrun")
    assert code == 4


def _closed_port():
    import socket

    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return port


def test_config_file_precedence(cls_task, tmp_path):
    csv_path, manifest_path = cls_task
    config_path = tmp_path / "cfg.json"
    config_path.write_text(json.dumps({"m": 3, "G": 2, "learning_rate": 0.25}))
    out = tmp_path / "cfgrun"
    code = main(
        ["train", "--dataset", str(csv_path), "--manifest", str(manifest_path),
         "--config", str(config_path), "--m", "2", "--batch-size", "4",
         "--mini-batch", "4", "--epochs", "1", "--seed", "1", "--out", str(out)]
    )
    assert code == 0
    saved = json.loads((out / "config.json").read_text())
    assert saved["m"] == 2  # CLI flag beats the config file
    assert saved["G"] == 2 and saved["learning_rate"] == 0.25  # file beats defaults


def test_eval_requires_some_method(cls_task, tmp_path):
    csv_path, manifest_path = cls_task
    code = main(
        ["eval", "--dataset", str(csv_path), "--manifest", str(manifest_path),
         "--out", str(tmp_path / "none")]
    )
    assert code == 2


def test_ablate_outputs(tmp_path):
    examples, manifest = make_permutation_task(rows=12, classes=4, seed=1)
    csv_path, manifest_path = tmp_path / "p.csv", tmp_path / "p.json"
    write_dataset(examples, manifest, csv_path, manifest_path)
    out = tmp_path / "ablate"
    code = main(
        ["ablate", "--dataset", str(csv_path), "--manifest", str(manifest_path),
         "--seeds", "2", "--steps", "10", "--cadence", "5", "--m", "2", "--G", "2",
         "--batch-size", "4", "--lr", "1.0", "--seed", "0", "--out", str(out)]
    )
    assert code == 0
    curve_files = sorted(out.glob("curve_*_seed*.jsonl"))
    assert len(curve_files) == 4  # 2 modes x 2 seeds
    for path in curve_files:
        rows = [json.loads(l) for l in lines(path)]
        assert [r["step"] for r in rows] == [0, 5, 10]
    summary = lines(out / "ablate_summary.csv")
    assert summary[0] == "seed,auc_prpo,auc_grpo,delta"
    assert len(summary) == 3
    deltas = [json.loads(l)["delta"] for l in lines(out / "ablate_summary.jsonl")]
    assert len(deltas) == 2
