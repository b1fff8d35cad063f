"""Command-line interface: subcommands, overrides and exit codes."""

import numpy as np
import pytest

from kdvlab.cli import main
from kdvlab.ensemble_io import read_ensemble


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "E1" in out and "E10" in out


def test_sample_evolve_test(tmp_path, capsys):
    ens = tmp_path / "wn.bin"
    assert main(["sample", "--measure", "white_noise", "--n", "64", "--m", "500", "--modes", "8",
                 "--seed", "3", "--out", str(ens), "--csv", str(tmp_path / "wn.csv"), "--quiet"]) == 0
    e = read_ensemble(ens)
    assert e.values.shape == (500, 64) and e.master_seed == 3
    moved = tmp_path / "airy.bin"
    assert main(["evolve", "--input", str(ens), "--out", str(moved), "--flow", "airy", "--T", "0.01",
                 "--diagnostics", str(tmp_path / "d.csv"), "--quiet"]) == 0
    after = read_ensemble(moved)
    np.testing.assert_allclose(np.sum(after.values**2, axis=1), np.sum(e.values**2, axis=1), rtol=1e-12)
    assert main(["test", "--input", str(moved), "--k-max", "8", "--csv", str(tmp_path / "r.csv")]) == 0
    assert "verdict: PASS" in capsys.readouterr().out
    assert main(["test", "--input", str(ens), "--against", str(moved), "--quiet"]) == 0


def test_test_reports_failure(tmp_path):
    ens = tmp_path / "b.bin"
    main(["sample", "--measure", "bridge", "--n", "64", "--m", "500", "--out", str(ens), "--quiet"])
    assert main(["test", "--input", str(ens), "--quiet"]) == 1


def test_experiment_with_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("KDVLAB_OUTDIR", str(tmp_path))
    status = main(["experiment", "E5", "--m", "3", "--label", "cli", "--quiet"])
    assert status == 0
    assert (tmp_path / "E5" / "cli" / "report.txt").exists()


def test_experiment_set_and_config(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[E2]\nt_final = 0.01\nm = 2\n")
    status = main(["experiment", "E2", "--config", str(cfg), "--outdir", str(tmp_path),
                   "--set", "alphas=0.1", "--quiet"])
    assert status == 0
    snap = (tmp_path / "E2" / "seed20261016" / "config.snapshot").read_text()
    assert "t_final = 0.01" in snap and "alphas = 0.1" in snap


@pytest.mark.parametrize("argv", [
    ["experiment", "E99"],
    ["experiment", "E5", "--set", "nonsense"],
    ["experiment", "E5", "--set", "n=abc"],
    ["evolve", "--input", "/nonexistent.bin", "--out", "x.bin", "--flow", "kdv", "--T", "1"],
])
def test_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--outdir", str(tmp_path), "--quiet"]) == 2
