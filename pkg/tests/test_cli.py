import hashlib
import json
import os

import pytest

from cannings_lab.cli import ExperimentConfig, load_config, resolve_workers, run
from cannings_lab.errors import ParseError, ValidationError


def write_config(tmp_path, **fields):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(fields))
    return str(path)


def test_minimal_config_gets_defaults(monkeypatch):
    monkeypatch.delenv("CANNINGS_LAB_WORKERS", raising=False)
    cfg = load_config(json.dumps({"law": {"law": "wright_fisher"}}))
    assert cfg.reps == 1000
    assert resolve_workers(None, cfg) == (os.cpu_count() or 1)


def test_config_errors():
    with pytest.raises(ParseError):
        load_config("{not json")
    with pytest.raises(ValidationError) as err:
        load_config(json.dumps({"repz": 3}))
    assert err.value.field == "repz"
    with pytest.raises(ValidationError) as err:
        load_config(json.dumps({"seed": -1}))
    assert err.value.field == "seed"
    with pytest.raises(ValidationError) as err:
        load_config(json.dumps({"law": {"law": "counterexample", "alpha": 0.5},
                                "ell": [[0, 1], [0.5, 2], [1, 1]]}))
    assert (err.value.field, err.value.reason) == ("law", "requires constant profile")
    with pytest.raises(ValidationError):
        load_config(json.dumps({"ell": [[0, 1], [0, 1]]}))


def test_worker_resolution_order(monkeypatch):
    monkeypatch.setenv("CANNINGS_LAB_WORKERS", "3")
    assert resolve_workers(None, ExperimentConfig()) == 3
    assert resolve_workers(None, ExperimentConfig(workers=2)) == 2
    assert resolve_workers(5, ExperimentConfig(workers=2)) == 5


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert run(["trace", "--config", str(bad), "--out", str(tmp_path / "a")]) == 1
    assert run(["trace", "--config", str(tmp_path / "missing.json")]) == 1
    cfg = write_config(tmp_path, law={"law": "wright_fisher"}, n=16, k=20, reps=3)
    assert run(["trace", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "1"]) == 2
    cfg = write_config(tmp_path, n=64, k=2, reps=300, rate_distortion=4.0)
    out = str(tmp_path / "c")
    assert run(["appendix-a", "--config", cfg, "--out", out, "--workers", "1"]) == 3
    assert run(["appendix-a", "--config", cfg, "--out", out, "--workers", "1", "--no-check"]) == 0


def test_sample_limit_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, k=2, reps=10, seed=42)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["sample-limit", "--config", cfg, "--out", str(a), "--workers", "1"]) == 0
    assert run(["sample-limit", "--config", cfg, "--out", str(b), "--workers", "2"]) == 0
    assert (a / "samples.jsonl").read_bytes() == (b / "samples.jsonl").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    assert len((a / "samples.jsonl").read_text().splitlines()) == 10
    assert run(["sample-limit", "--config", cfg, "--out", str(b), "--seed", "43"]) == 0
    assert (a / "samples.jsonl").read_bytes() != (b / "samples.jsonl").read_bytes()


def test_manifest_lists_every_artifact(tmp_path):
    cfg = write_config(tmp_path, n=16, seed=5)
    out = tmp_path / "tree"
    assert run(["simulate-tree", "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["schema_version"] == 1 and manifest["seed"] == 5
    assert set(manifest["versions"]) >= {"cannings_lab", "numpy", "scipy", "python"}
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert set(manifest["artifacts"]) == on_disk
    for name, digest in manifest["artifacts"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert json.loads((out / "summary.json").read_text())["identity_holds"] is True


def test_resume_skips_matching_runs(tmp_path, capsys):
    cfg = write_config(tmp_path, n=16, k=3, reps=5)
    out = tmp_path / "t"
    assert run(["trace", "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    stamp = (out / "traces.csv").stat().st_mtime_ns
    capsys.readouterr()
    assert run(["trace", "--config", cfg, "--out", str(out), "--resume"]) == 0
    assert "up to date" in capsys.readouterr().err
    assert (out / "traces.csv").stat().st_mtime_ns == stamp
    (out / "traces.csv").write_text("tampered\n")
    assert run(["trace", "--config", cfg, "--out", str(out), "--resume", "--workers", "1"]) == 0
    assert (out / "traces.csv").read_text() != "tampered\n"


def test_counterexample_command_needs_its_law(tmp_path):
    cfg = write_config(tmp_path, n_grid=[64, 128], reps=10)
    assert run(["counterexample", "--config", cfg, "--out", str(tmp_path / "x")]) == 1


@pytest.mark.parametrize("command", ["moments", "transition-check", "cdfi", "discrepancy"])
def test_small_runs_write_reports(tmp_path, command):
    cfg = write_config(tmp_path, n_grid=[64, 128], reps=200, q=6, k=3, h_star=4)
    out = tmp_path / command
    code = run([command, "--config", cfg, "--out", str(out), "--workers", "1", "--no-check"])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == command and manifest["artifacts"]
