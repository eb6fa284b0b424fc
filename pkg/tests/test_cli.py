import json
import subprocess
import sys
import warnings

import pytest

from robustnpe.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main

SMALL = {"n_sim": 320, "n_obs": 320, "eval": {"n_test": 10, "S": 20}}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_train_then_eval(tmp_path, capsys):
    cfg = write(tmp_path / "cfg.json", {"method": "npe", **SMALL})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "ck")]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["steps"] == 10
    scen = write(tmp_path / "scen.json", {"family": "gaussian2d", "variant": "prior_location",
                                          "params": {"mu0": [3, 3]}, "seed": 4, "n_datasets": 6})
    out = tmp_path / "rep.json"
    code = main(["eval", "--checkpoint", summary["checkpoint"], "--scenario", scen, "--samples", "30",
                 "--out", str(out)])
    assert code == EXIT_OK
    report = json.loads(out.read_text())
    assert report["variant_param"] == "mu0=3,3" and report["seed"] == 0
    assert report["meta"]["eval_seed"] == 4
    assert report["meta"]["n_test"] == 6 and report["meta"]["S"] == 30


def test_output_directory_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("RNPE_OUTPUT_DIR", str(tmp_path / "env"))
    cfg = write(tmp_path / "cfg.json", {"method": "nnpe", **SMALL})
    assert main(["train", "--config", cfg]) == EXIT_OK
    assert len(list((tmp_path / "env").glob("*.ckpt"))) == 1


def test_grid_and_report(tmp_path, capsys):
    manifest = write(tmp_path / "m.json", {
        "methods": ["npe"], "scenarios": [{"family": "gaussian2d", "variant": "well_specified"}],
        "seeds": [0], "train": {"n_sim": 320, "n_obs": 320}, "eval": {"n_test": 10, "S": 20}})
    out = tmp_path / "grid"
    assert main(["grid", "--manifest", manifest, "--out", str(out), "--workers", "1"]) == EXIT_OK
    capsys.readouterr()
    for fmt, first in (("csv", "method,scenario"), ("radar", "scenario,variant_param"), ("json", "{")):
        assert main(["report", "--in", str(out), "--format", fmt]) == EXIT_OK
        assert capsys.readouterr().out.startswith(first)


@pytest.mark.parametrize("argv_maker", [
    lambda p: ["train", "--config", write(p / "c.json", {"method": "nope"})],
    lambda p: ["train", "--config", str(p / "missing.json")],
    lambda p: ["eval", "--checkpoint", write(p / "x.ckpt", {}), "--scenario", str(p / "s.json")],
    lambda p: ["grid", "--manifest", write(p / "m.json", {"methods": []}), "--out", str(p / "g")],
    lambda p: ["report", "--in", str(p / "nothing")],
])
def test_configuration_errors_exit_1(tmp_path, argv_maker, capsys):
    assert main(argv_maker(tmp_path)) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_numerical_failure_exits_2(tmp_path, capsys):
    cfg = write(tmp_path / "cfg.json", {"method": "npe", "base_lr": 1e150, **SMALL})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert "step 1" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "robustnpe", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert all(cmd in proc.stdout for cmd in ("train", "eval", "grid", "report"))
