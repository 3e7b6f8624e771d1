import json

import numpy as np
import pytest
from click.testing import CliRunner

from biphoton_simulator import __version__
from biphoton_simulator.cli import GRID, cli
from biphoton_simulator.io_handler import IOHandler


@pytest.fixture
def runner(quiet_settings):
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)


def test_grid_syntax():
    np.testing.assert_allclose(GRID.convert("0.5", None, None), [0.5])
    assert GRID.convert("0:2", None, None).size == 51
    grid = GRID.convert("0:2:0.01", None, None)
    assert grid.size == 201
    assert grid[-1] == pytest.approx(2.0)


def test_version(runner):
    result = invoke(runner, "--version")
    assert __version__ in result.output


def test_eigen_writes_table_and_metadata(runner, tmp_path):
    result = invoke(runner, "eigen", "--out", tmp_path, "--omega3", 0.8, "--find-ep")
    assert result.exit_code == 0
    frame, _ = IOHandler.read_csv(str(tmp_path / "eigen.csv"))
    assert frame.loc[0, "coupling"] == "ep"
    assert IOHandler.read_report(str(tmp_path / "ep.txt"))["omega3_ep"] == pytest.approx(0.8)

    meta = json.loads((tmp_path / "run_meta.json").read_text())
    assert meta["subcommand"] == "eigen"
    assert meta["config"]["fields"]["omega3"] == 0.8
    assert "fields.omega3=0.8" in meta["overrides"]
    assert meta["outputs"] == ["eigen.csv", "ep.txt"]


def test_sweep_through_ep(runner, tmp_path):
    result = invoke(runner, "sweep", "--out", tmp_path, "--omega3", "0:2:0.01", "--gnuplot")
    assert result.exit_code == 0
    frame, _ = IOHandler.read_csv(str(tmp_path / "sweep.csv"))
    assert len(frame) == 201
    assert (tmp_path / "sweep.gp").exists()


def test_double_dressing_sweep(runner, tmp_path):
    result = invoke(runner, "sweep", "--out", tmp_path, "--omega3", "1:3:1", "--omega2", "0:10:5")
    assert result.exit_code == 0
    frame, _ = IOHandler.read_csv(str(tmp_path / "double_dressing.csv"))
    assert len(frame) == 9


def test_spectra_on_both_axes(runner, tmp_path):
    invoke(runner, "spectra", "--out", tmp_path, "--omega3", 2.0, "--delta", "-5:5:0.1")
    frame, meta = IOHandler.read_csv(str(tmp_path / "chi3_real.csv"))
    assert len(frame) == 101
    assert meta["kind"] == "chi3"
    assert {"delta", "re", "im", "abs"} <= set(frame.columns)

    invoke(runner, "spectra", "--out", tmp_path, "--chi", 1, "--axis", "imaginary", "--delta", "0.013:2.013:0.01")
    frame, _ = IOHandler.read_csv(str(tmp_path / "chi1_imaginary.csv"))
    assert "delta_im" in frame.columns


def test_waveform_with_channels(runner, tmp_path):
    result = invoke(runner, "waveform", "--out", tmp_path, "--omega3", 2.0, "--channels",
                    "--set", "numerics.n_tau=201")
    assert result.exit_code == 0
    frame, meta = IOHandler.read_csv(str(tmp_path / "waveform.csv"))
    assert meta["method"] == "eq3"
    assert list(frame.columns) == ["tau_ns", "g2"]
    channels, _ = IOHandler.read_csv(str(tmp_path / "channels.csv"))
    assert list(channels.columns) == ["tau_ns", "plus", "minus", "interference"]


def test_counts_are_reproducible_across_runs(runner, tmp_path):
    for name in ("a", "b"):
        invoke(runner, "counts", "--out", tmp_path / name, "--omega3", 2.0, "--seed", 42)
    assert (tmp_path / "a" / "counts.csv").read_bytes() == (tmp_path / "b" / "counts.csv").read_bytes()
    _, meta = IOHandler.read_csv(str(tmp_path / "a" / "counts.csv"))
    assert meta["seed"] == 42
    assert meta["bin_width_ns"] == 0.2


def test_counts_require_seed(runner, tmp_path):
    result = runner.invoke(cli, ["counts", "--out", str(tmp_path)])
    assert result.exit_code == 2


def test_fit_and_csr_from_counts(runner, tmp_path):
    invoke(runner, "counts", "--out", tmp_path, "--omega3", 2.0, "--seed", 7)
    counts = str(tmp_path / "counts.csv")

    result = invoke(runner, "fit", "--out", tmp_path / "fit", "--in", counts)
    assert result.exit_code == 0
    report = IOHandler.read_report(str(tmp_path / "fit" / "fit_report.txt"))
    assert report["model"] == "eq3"
    assert report["gamma_eff"] == pytest.approx(0.6, rel=0.05)
    candidates, _ = IOHandler.read_csv(str(tmp_path / "fit" / "fit_candidates.csv"))
    assert len(candidates) == 4

    result = invoke(runner, "csr", "--out", tmp_path / "csr", "--in", counts)
    assert result.exit_code == 0
    assert IOHandler.read_report(str(tmp_path / "csr" / "csr.txt"))["violated"] is True


def test_config_errors_exit_with_2(runner, tmp_path):
    result = runner.invoke(cli, ["eigen", "--out", str(tmp_path), "--set", "fields.omega9=1"])
    assert result.exit_code == 2
    result = runner.invoke(cli, ["eigen", "--out", str(tmp_path), "--preset", "Z"])
    assert result.exit_code == 2


def test_wrong_regime_exits_with_2(runner, tmp_path):
    result = runner.invoke(cli, ["waveform", "--out", str(tmp_path), "--omega3", "2.0", "--method", "eq4"])
    assert result.exit_code == 2


def test_missing_input_exits_with_4(runner, tmp_path):
    result = runner.invoke(cli, ["csr", "--out", str(tmp_path), "--in", str(tmp_path / "absent.csv")])
    assert result.exit_code == 4
