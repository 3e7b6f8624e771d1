# --- io_handler.py ---
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd
import yaml

from .models import CoincidenceHistogram

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    if isinstance(value, complex):
        return str(value)
    return str(value)


def _parse_value(text: str) -> Any:
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


class IOHandler:
    """Handle all file I/O operations."""

    @staticmethod
    def _prepare(output_path: str) -> Path:
        path = Path(output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def write_csv(frame: pd.DataFrame, output_path: str, meta: Optional[Dict[str, Any]] = None) -> Path:
        """Write a table with 12 significant digits and an optional '# key=value' header line."""
        path = IOHandler._prepare(output_path)
        with open(path, "w", encoding="utf-8", newline="") as f:
            if meta:
                f.write("# " + ", ".join(f"{k}={_format_value(v)}" for k, v in meta.items()) + "\n")
            frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info(f"Saved {len(frame)} rows to {output_path}")
        return path

    @staticmethod
    def read_csv(input_path: str) -> Tuple[pd.DataFrame, Dict[str, Any]]:
        """Read a table written by write_csv; returns the frame and the header metadata."""
        path = Path(input_path)
        if not path.exists():
            raise FileNotFoundError(f"CSV file not found: {input_path}")
        meta: Dict[str, Any] = {}
        with open(path, "r", encoding="utf-8") as f:
            first = f.readline()
        if first.startswith("#"):
            for item in first[1:].split(","):
                if "=" in item:
                    key, value = item.split("=", 1)
                    meta[key.strip()] = _parse_value(value)
        frame = pd.read_csv(path, comment="#")
        logger.info(f"Loaded {len(frame)} rows from {input_path}")
        return frame, meta

    @staticmethod
    def read_histogram(input_path: str) -> CoincidenceHistogram:
        """Load a tau_ns,counts table as produced by the counts command or a lab export."""
        frame, meta = IOHandler.read_csv(input_path)
        missing = {"tau_ns", "counts"} - set(frame.columns)
        if missing:
            raise ValueError(f"Histogram file {input_path} lacks columns {sorted(missing)}")
        tau_ns = frame["tau_ns"].to_numpy(dtype=float)
        bin_width = float(meta.get("bin_width_ns", np.median(np.diff(tau_ns)) if len(tau_ns) > 1 else 0.0))
        return CoincidenceHistogram(
            tau_ns=tau_ns,
            counts=frame["counts"].to_numpy(dtype=np.int64),
            bin_width_ns=bin_width,
            duration_s=float(meta.get("duration_s", 0.0)),
            background_rate=float(meta.get("background_rate", 0.0)),
            seed=meta.get("seed") if isinstance(meta.get("seed"), int) else None,
        )

    @staticmethod
    def write_report(report: Dict[str, Any], output_path: str) -> Path:
        """One key=value pair per line."""
        path = IOHandler._prepare(output_path)
        with open(path, "w", encoding="utf-8", newline="") as f:
            for key, value in report.items():
                f.write(f"{key}={_format_value(value)}\n")
        logger.info(f"Saved report to {output_path}")
        return path

    @staticmethod
    def read_report(input_path: str) -> Dict[str, Any]:
        path = Path(input_path)
        if not path.exists():
            raise FileNotFoundError(f"Report file not found: {input_path}")
        report = {}
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line and "=" in line:
                    key, value = line.split("=", 1)
                    report[key] = _parse_value(value)
        return report

    @staticmethod
    def save_json(data: Any, output_path: str, indent: int = 2) -> Path:
        """Save data to JSON file."""
        path = IOHandler._prepare(output_path)
        with open(path, "w", encoding="utf-8", newline="") as f:
            json.dump(data, f, indent=indent, ensure_ascii=False, sort_keys=True, default=_format_value)
            f.write("\n")
        logger.info(f"Saved output to {output_path}")
        return path

    @staticmethod
    def load_yaml(config_path: str) -> Dict[str, Any]:
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {config_path}")
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ValueError(f"Config file {config_path} must hold a mapping of sections")
        logger.info(f"Loaded config from {config_path}")
        return data

    @staticmethod
    def write_gnuplot(csv_path: str, columns: Iterable[str], title: str = "") -> Path:
        """Companion script plotting every column against the first."""
        csv = Path(csv_path)
        columns = list(columns)
        script = csv.with_suffix(".gp")
        lines = [
            "set datafile separator ','",
            "set key autotitle columnhead",
            f"set title '{title}'" if title else "unset title",
            f"set xlabel '{columns[0]}'",
        ]
        plots = [f"'{csv.name}' using 1:{i + 1} with lines" for i in range(1, len(columns))]
        lines.append("plot " + ", \\\n     ".join(plots))
        IOHandler._prepare(str(script))
        script.write_text("\n".join(lines) + "\n", encoding="utf-8")
        logger.info(f"Saved gnuplot companion to {script}")
        return script
