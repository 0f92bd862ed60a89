import json
import subprocess
import sys

import pytest

from aeroload.cli import main


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def processed(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.json"
    spec.write_text(json.dumps({"n_participants": 4, "seed": 2}))
    assert main(["synth", str(spec), "--out", str(root / "data")]) == 0
    assert main(["process", "--data", str(root / "data"), "--out", str(root / "proc")]) == 0
    return root


def test_help_exits_zero():
    r = subprocess.run([sys.executable, "-m", "aeroload.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "synth" in r.stdout


def test_unknown_flag_is_usage_error(capsys):
    assert main(["process", "--bogus"]) == 64
    assert main([]) == 64


def test_missing_out_is_validation_error(capsys):
    assert main(["synth"]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "InvalidConfig"


def test_process_outputs(processed):
    lines = (processed / "proc" / "features.csv").read_text().splitlines()
    assert len(lines) == 1 + 4 * 13
    assert (processed / "proc" / "features.csv.json").exists()
    diag = json.loads((processed / "proc" / "diagnostics.json").read_text())
    assert set(diag) == {"P001", "P002", "P003", "P004"}


def test_corrupt_csv_reports_file(processed, tmp_path, capsys):
    import shutil
    data = tmp_path / "data"
    shutil.copytree(processed / "data", data)
    victim = data / "P002" / "gsr.csv"
    victim.write_text(victim.read_text() + "oops\n")
    assert main(["process", "--data", str(data), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["file"].endswith("gsr.csv")


def test_synth_is_idempotent(tmp_path):
    args = ["synth", "--seed", "5", "--config", str(tmp_path / "c.json")]
    (tmp_path / "c.json").write_text(json.dumps({"synth": {"n_participants": 2}}))
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "3"]) == 0
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")


def test_experiment_and_report(processed, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": {"n_folds": 2, "model": {"kind": "GBT",
                                              "hyperparams": {"n_trees": 10}}}}))
    out = tmp_path / "rep"
    base = ["experiment", "--config", str(cfg), "--data", str(processed / "proc"), "--out", str(out)]
    assert main(base + ["--protocol", "generalized", "--protocol", "baseline"]) == 0
    assert main(base + ["--protocol", "individualized", "--target", "P001", "--sweep", "0,0.5"]) == 0
    doc = json.loads((out / "individualized.json").read_text())
    assert [p for p, _ in doc["upsampling_curve"]] == [0.0, 0.5]
    assert (out / "individualized_curve.svg").exists()
    md = (out / "generalized.md").read_text()
    (out / "generalized.md").unlink()
    assert main(["report", "--data", str(out)]) == 0
    assert (out / "generalized.md").read_text() == md


def test_bad_sweep(processed, tmp_path):
    assert main(["experiment", "--data", str(processed / "proc"), "--out", str(tmp_path),
                 "--sweep", "0,x"]) == 2
