import json

import numpy as np
import pandas as pd
import pytest

from biphoton_simulator.io_handler import IOHandler


def test_csv_keeps_metadata(tmp_path):
    frame = pd.DataFrame({"tau_ns": [0.1, 0.3, 0.5], "counts": [10, 20, 30]})
    path = tmp_path / "nested" / "counts.csv"
    IOHandler.write_csv(frame, str(path), meta={"bin_width_ns": 0.2, "seed": 7, "method": "eq3"})
    assert path.read_text().splitlines()[0] == "# bin_width_ns=0.2, seed=7, method=eq3"

    loaded, meta = IOHandler.read_csv(str(path))
    assert meta == {"bin_width_ns": 0.2, "seed": 7, "method": "eq3"}
    pd.testing.assert_frame_equal(loaded, frame)


def test_csv_float_precision(tmp_path):
    path = tmp_path / "values.csv"
    IOHandler.write_csv(pd.DataFrame({"x": [1 / 3]}), str(path))
    assert path.read_text().splitlines()[1] == "0.333333333333"


def test_read_histogram(tmp_path):
    path = tmp_path / "lab.csv"
    IOHandler.write_csv(
        pd.DataFrame({"tau_ns": [0.1, 0.3, 0.5, 0.7], "counts": [1, 5, 3, 2]}),
        str(path), meta={"duration_s": 600, "seed": 3},
    )
    hist = IOHandler.read_histogram(str(path))
    assert hist.bin_width_ns == pytest.approx(0.2)
    assert hist.duration_s == 600
    assert hist.seed == 3
    np.testing.assert_array_equal(hist.counts, [1, 5, 3, 2])


def test_histogram_needs_columns(tmp_path):
    path = tmp_path / "bad.csv"
    IOHandler.write_csv(pd.DataFrame({"tau": [0.0], "n": [1]}), str(path))
    with pytest.raises(ValueError, match="lacks columns"):
        IOHandler.read_histogram(str(path))


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        IOHandler.read_csv(str(tmp_path / "absent.csv"))
    with pytest.raises(FileNotFoundError):
        IOHandler.load_yaml(str(tmp_path / "absent.yaml"))


def test_report_round_trip(tmp_path):
    path = tmp_path / "fit_report.txt"
    IOHandler.write_report({"model": "eq3", "gamma_eff": 0.6, "ambiguous": False, "n": 4}, str(path))
    assert "ambiguous=false" in path.read_text()
    assert IOHandler.read_report(str(path)) == {"model": "eq3", "gamma_eff": 0.6, "ambiguous": False, "n": 4}


def test_json_is_sorted(tmp_path):
    path = tmp_path / "run_meta.json"
    IOHandler.save_json({"b": 1, "a": complex(1, 2)}, str(path))
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text)["a"] == "(1+2j)"


def test_yaml_must_be_mapping(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ValueError, match="mapping"):
        IOHandler.load_yaml(str(path))
    path.write_text("")
    assert IOHandler.load_yaml(str(path)) == {}


def test_gnuplot_companion(tmp_path):
    csv = tmp_path / "waveform.csv"
    script = IOHandler.write_gnuplot(str(csv), ["tau_ns", "g2", "fit"], title="eq3")
    assert script == tmp_path / "waveform.gp"
    text = script.read_text()
    assert "set title 'eq3'" in text
    assert "'waveform.csv' using 1:2 with lines" in text
    assert "using 1:3" in text
