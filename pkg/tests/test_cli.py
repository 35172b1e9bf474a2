import json
import os
import subprocess
import sys

import numpy as np
import pytest

from motionflow.cli import main
from motionflow.clip import load_clip


def run_cli(*args):
    return main(list(args))


def _dir_bytes(root):
    out = {}
    for base, _, files in os.walk(root):
        for f in sorted(files):
            p = os.path.join(base, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert run_cli("synth", "--out", str(d), "--n", "14", "--seed", "3", "--pairs", "4") == 0
    return d


def test_synth_outputs(data_dir):
    rows = [json.loads(l) for l in (data_dir / "manifest.jsonl").read_text().splitlines()]
    assert len(rows) == 14
    clip = load_clip(data_dir / rows[0]["clip_path"])
    assert clip.n_frames >= 2
    pairs = [json.loads(l) for l in (data_dir / "pairs.jsonl").read_text().splitlines()]
    assert len(pairs) == 4
    assert (data_dir / pairs[0]["winner_path"]).exists()


def test_synth_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("synth", "--out", str(a), "--n", "6", "--seed", "9") == 0
    assert run_cli("synth", "--out", str(b), "--n", "6", "--seed", "9") == 0
    da, db = _dir_bytes(a), _dir_bytes(b)
    assert set(da) == set(db)
    for k in da:
        if k != "config.json":   # snapshot embeds the differing --out path
            assert da[k] == db[k], k


def test_curate_rejects_planted_defects(tmp_path):
    d = tmp_path / "dirty"
    assert run_cli("synth", "--out", str(d), "--n", "12", "--seed", "5",
                   "--defect-fraction", "0.25", "--classes", "walk,run,squat") == 0
    out = tmp_path / "curated"
    assert run_cli("curate", "--data", str(d), "--out", str(out)) == 0
    reports = [json.loads(l) for l in (out / "reports.jsonl").read_text().splitlines()]
    rejected = [r for r in reports if r["verdict"] == "rejected"]
    assert rejected
    kept_rows = [json.loads(l) for l in (out / "manifest.jsonl").read_text().splitlines()]
    assert len(kept_rows) == len(reports) - len(rejected)
    # kept manifest paths resolve
    for row in kept_rows:
        assert os.path.exists(os.path.normpath(os.path.join(out, row["clip_path"])))


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory, data_dir):
    run = tmp_path_factory.mktemp("run")
    assert main(["train", "--stage", "pretrain", "--data", str(data_dir),
                 "--out", str(run), "--model", "tiny", "--steps", "6",
                 "--batch-size", "2", "--seed", "1"]) == 0
    return run


def test_train_outputs(tiny_run):
    assert (tiny_run / "model.ckpt").exists()
    text = (tiny_run / "loss.csv").read_text()
    assert text.startswith("step,loss")
    assert (tiny_run / "config.json").exists()


def test_finetune_decays_lr(tmp_path, data_dir, tiny_run):
    out = tmp_path / "ft"
    assert main(["train", "--stage", "finetune", "--data", str(data_dir),
                 "--out", str(out), "--init", str(tiny_run / "model.ckpt"),
                 "--steps", "3", "--batch-size", "2", "--seed", "2"]) == 0
    from motionflow.engine import load_checkpoint
    _, meta = load_checkpoint(out / "model.ckpt")
    assert meta["lr"] == pytest.approx(0.1 * 1e-3)


def test_sample_deterministic(tmp_path, tiny_run):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert main(["sample", "--ckpt", str(tiny_run / "model.ckpt"),
                     "--prompt", "a person jumps once", "--out", str(path),
                     "--seed", "11", "--steps", "4"]) == 0
    assert a.read_bytes() == b.read_bytes()
    clip = load_clip(a)
    assert clip.n_frames == 45   # 1.5 s at 30 fps from the duration table


def test_export_round_trip(tmp_path, tiny_run):
    src = tmp_path / "s.json"
    main(["sample", "--ckpt", str(tiny_run / "model.ckpt"), "--prompt",
          "a person squats down and stands back up", "--out", str(src),
          "--seed", "2", "--steps", "2"])
    csv_path = tmp_path / "s.csv"
    assert main(["export", "--clip", str(src), "--format", "csv", "--out", str(csv_path)]) == 0
    back_json = tmp_path / "back.json"
    assert main(["export", "--clip", str(csv_path), "--format", "json", "--out", str(back_json)]) == 0
    a = load_clip(src)
    b = load_clip(back_json)
    assert np.abs(a.frames - b.frames).max() < 1e-9


def test_exit_codes(tmp_path, tiny_run):
    with pytest.raises(SystemExit) as e:
        main(["train", "--stage", "warmup", "--data", "x", "--out", "y"])
    assert e.value.code == 2
    # data error: missing manifest
    assert main(["curate", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 3
    # config error: finetune without --init
    assert main(["train", "--stage", "finetune", "--data", str(tmp_path),
                 "--out", str(tmp_path / "r")]) == 2
    # numerical failure: corrupted weights diverge the sampler
    from motionflow.engine import load_checkpoint, save_checkpoint
    tensors, meta = load_checkpoint(tiny_run / "model.ckpt")
    tensors["motion_out.w"] = tensors["motion_out.w"] * 0 + 1e30
    bad = tmp_path / "bad.ckpt"
    save_checkpoint(bad, tensors, meta)
    assert main(["sample", "--ckpt", str(bad), "--prompt", "a person jumps once",
                 "--out", str(tmp_path / "x.json"), "--steps", "4"]) == 4


def test_env_var_run_root(tmp_path, monkeypatch):
    monkeypatch.setenv("MOTIONFLOW_RUNS", str(tmp_path))
    assert run_cli("synth", "--out", "envrun", "--n", "2", "--seed", "0") == 0
    assert (tmp_path / "envrun" / "manifest.jsonl").exists()


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "motionflow.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "synth" in proc.stdout
