import csv
import json
import subprocess
import sys

import pytest

from scpgan.cli import main
from scpgan.config import MODES


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(root / "corpus"), "--clips", "8", "--seconds", "1"]) == 0
    cfg = {"manifest": "corpus/manifest.jsonl", "epochs": 1, "checkpoint_dir": str(root / "run")}
    (root / "cfg.json").write_text(json.dumps(cfg))
    return root


def test_gen_data_summary_and_hash(workspace, tmp_path, capsys):
    code, out, _ = _run(capsys, "gen-data", "--out", str(tmp_path / "c"), "--clips", "8", "--seconds", "1")
    assert code == 0
    assert "8 train + 2 test clips" in out
    digest = out.split("sha256 ")[1].split()[0]
    _run(capsys, "gen-data", "--out", str(tmp_path / "d"), "--clips", "8", "--seconds", "1")
    code, out2, _ = _run(capsys, "gen-data", "--out", str(tmp_path / "c"), "--clips", "8", "--seconds", "1")
    assert out2.split("sha256 ")[1].split()[0] == digest


def test_train_eval_roundtrip(workspace, capsys):
    code, out, _ = _run(capsys, "train", "--config", str(workspace / "cfg.json"), "--mode", "nd-sc3-cp", "--seed", "1")
    assert code == 0 and "mode nd-sc3-cp seed 1" in out
    saved = json.loads((workspace / "run" / "config.json").read_text())
    assert saved["mode"] == {"nd": True, "sc": "sc3", "cp": True} and saved["seed"] == 1
    for split, n in (("test", 2), ("train", 8)):
        out_csv = workspace / f"eval_{split}.csv"
        code, _, _ = _run(capsys, "eval", "--ckpt", str(workspace / "run" / "best.ckpt"),
                          "--manifest", str(workspace / "corpus" / "manifest.jsonl"),
                          "--split", split, "--out", str(out_csv))
        assert code == 0
        rows = list(csv.DictReader(out_csv.open()))
        assert list(rows[0]) == ["clip_id", "snr_db", "ssnr_noisy", "ssnr_enh", "q_noisy", "q_enh"]
        assert len(rows) == n + 1 and rows[-1]["clip_id"] == "mean"


@pytest.mark.parametrize("argv", [
    ["train", "--config", "cfg.json", "--mode", "nd-sc2"],
    ["train", "--config", "cfg.json", "--bogus"],
    ["eval", "--ckpt", "missing.ckpt", "--manifest", "corpus/manifest.jsonl", "--out", "x.csv"],
    ["train", "--config", "missing.json"],
    ["check", "--suite", "nope"],
    [],
])
def test_usage_errors_exit_2(workspace, capsys, monkeypatch, argv):
    monkeypatch.chdir(workspace)
    assert _run(capsys, *argv)[0] == 2


def test_config_error_reports_path(workspace, capsys):
    bad = workspace / "bad.json"
    bad.write_text(json.dumps({"mode": {"sc": "sc3"}, "manifest": "corpus/manifest.jsonl"}))
    code, _, err = _run(capsys, "train", "--config", str(bad))
    assert code == 2 and "mode.sc" in err


def test_check_suites(capsys):
    code, out, _ = _run(capsys, "check", "--suite", "dsp", "--seed", "5")
    assert code == 0 and out.startswith("seed 5") and "dsp: PASS" in out
    code, out, _ = _run(capsys, "check", "--suite", "autodiff")
    assert code == 0 and out.startswith("seed ")


def test_check_failure_exit_1(capsys, monkeypatch):
    from scpgan import checks
    monkeypatch.setitem(checks.SUITES, "dsp", lambda seed: checks.SuiteResult("dsp", seed, 1, 1))
    assert _run(capsys, "check", "--suite", "dsp", "--seed", "0")[0] == 1


def test_ablate_grid(workspace, capsys):
    out_dir = workspace / "abl"
    code, out, _ = _run(capsys, "ablate", "--config", str(workspace / "cfg.json"), "--seeds", "0,1",
                        "--out", str(out_dir))
    assert code == 0
    runs = [p for p in out_dir.iterdir() if p.is_dir()]
    assert len(runs) == 16
    rows = list(csv.DictReader((out_dir / "summary.csv").open()))
    assert [r["mode"] for r in rows] == list(MODES)
    assert all(r["n_ok"] == "2" for r in rows)
    first = (out_dir / "summary.csv").read_bytes()
    _run(capsys, "ablate", "--config", str(workspace / "cfg.json"), "--seeds", "0,1", "--out", str(out_dir))
    assert (out_dir / "summary.csv").read_bytes() == first


def test_ablate_records_failures(workspace, capsys, monkeypatch):
    from scpgan import trainer
    from scpgan.errors import NonFinite
    real = trainer.train

    def flaky(cfg, manifest, out_dir=None, grad_hook=None):
        if cfg.mode.name == "cp":
            raise NonFinite("boom")
        return real(cfg, manifest, out_dir=out_dir)
    monkeypatch.setattr(trainer, "train", flaky)
    out_dir = workspace / "abl_fail"
    assert _run(capsys, "ablate", "--config", str(workspace / "cfg.json"), "--seeds", "3", "--out", str(out_dir))[0] == 0
    rows = {r["mode"]: r for r in csv.DictReader((out_dir / "summary.csv").open())}
    assert rows["cp"]["n_failed"] == "1" and rows["baseline"]["n_ok"] == "1"
    runs = list(csv.DictReader((out_dir / "runs.csv").open()))
    assert any(r["status"] == "failed" and "NonFinite" in r["error"] for r in runs)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "scpgan", "check", "--suite", "dsp", "--seed", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "dsp: PASS" in res.stdout
