# --- cli.py ---
"""Command-line entry point: every subcommand writes plot-ready CSV plus run_meta.json."""
import dataclasses
import functools
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click
import numpy as np
import pandas as pd

from . import __version__
from .config import RunConfig, Settings, SimulationConfig, get_settings, load_config
from .eigensystem import eigenvalues
from .errors import BiphotonError, exit_code_for
from .io_handler import IOHandler
from .pipeline import WAVEFORM_METHODS, SimulationPipeline
from .waveform import single_channel_waveforms

logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 51


class GridParamType(click.ParamType):
    """'a' (single value), 'a:b' (51 points) or 'a:b:step' (inclusive)."""
    name = "grid"

    def convert(self, value, param, ctx):
        if isinstance(value, np.ndarray):
            return value
        try:
            numbers = [float(p) for p in str(value).split(":")]
        except ValueError:
            self.fail(f"{value!r} is not a grid of the form a, a:b or a:b:step", param, ctx)
        if len(numbers) == 1:
            return np.array(numbers)
        if len(numbers) == 2:
            return np.linspace(numbers[0], numbers[1], DEFAULT_GRID_POINTS)
        if len(numbers) == 3:
            start, stop, step = numbers
            if not step > 0 or stop < start:
                self.fail(f"{value!r} needs step > 0 and stop >= start", param, ctx)
            n = int(round((stop - start) / step)) + 1
            return np.linspace(start, start + step * (n - 1), n)
        self.fail(f"{value!r} has too many ':' separated parts", param, ctx)


GRID = GridParamType()


def setup_logging(level: str, verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%H:%M:%S'
    )


def common_options(func):
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="YAML file with atom/fields/doppler/chi/numerics/counting/fitting sections"),
        click.option("--out", "output_dir", default=None, help="Output directory (default: BIPHOTON_OUTPUT_DIR)"),
        click.option("--set", "overrides", multiple=True, help="Override as key=value or section.key=value"),
        click.option("--preset", default=None, help="Named parameter point, e.g. A..F or exceptional_point"),
        click.option("--gnuplot", is_flag=True, help="Write a .gp companion per CSV"),
        click.option("--verbose", "-v", is_flag=True),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def field_options(func):
    options = [
        click.option("--omega3", type=float, default=None, help="Coupling Rabi frequency in Gamma41"),
        click.option("--delta3", type=float, default=None, help="Coupling detuning in Gamma41"),
        click.option("--omega2", type=float, default=None, help="Dressing Rabi frequency in Gamma41"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def handle_errors(func):
    """Map package exceptions to exit codes 2 (config), 3 (numerical) and 4 (I/O)."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (BiphotonError, OSError) as e:
            logger.error(f"{type(e).__name__}: {e}")
            raise SystemExit(exit_code_for(e))
    return wrapper


class Run:
    """Resolved configuration plus the files written so far."""

    def __init__(self, run_config: RunConfig, config: SimulationConfig, settings: Settings, gnuplot: bool):
        self.run_config = run_config
        self.config = config
        self.settings = settings
        self.gnuplot = gnuplot
        self.outputs: List[str] = []
        self.pipeline = SimulationPipeline(config, settings)

    @property
    def output_dir(self) -> Path:
        return Path(self.run_config.output_dir)

    def write_csv(self, frame: pd.DataFrame, name: str, meta: Optional[Dict[str, Any]] = None, title: str = ""):
        path = self.output_dir / name
        IOHandler.write_csv(frame, str(path), meta)
        self.outputs.append(name)
        if self.gnuplot:
            script = IOHandler.write_gnuplot(str(path), frame.columns, title or name)
            self.outputs.append(script.name)

    def write_report(self, report: Dict[str, Any], name: str):
        IOHandler.write_report(report, str(self.output_dir / name))
        self.outputs.append(name)

    def finish(self):
        meta = {
            "subcommand": self.run_config.subcommand,
            "version": __version__,
            "config": self.config.model_dump(mode="json"),
            "preset": self.run_config.preset,
            "overrides": self.run_config.overrides,
            "seed": self.run_config.seed,
            "outputs": self.outputs,
        }
        IOHandler.save_json(meta, str(self.output_dir / "run_meta.json"))


def start_run(
    subcommand: str,
    config_path: Optional[str],
    output_dir: Optional[str],
    overrides: Sequence[str],
    preset: Optional[str],
    gnuplot: bool,
    verbose: bool,
    seed: Optional[int] = None,
    fields: Optional[Dict[str, Optional[float]]] = None,
) -> Run:
    settings = get_settings()
    setup_logging(settings.LOG_LEVEL, verbose)
    flags = [f"fields.{k}={v!r}" for k, v in (fields or {}).items() if v is not None]
    run_config = RunConfig(
        config_path=config_path,
        subcommand=subcommand,
        output_dir=output_dir or settings.OUTPUT_DIR,
        overrides=list(overrides) + flags,
        seed=seed,
        preset=preset,
    )
    config = load_config(run_config.config_path, run_config.preset, run_config.overrides)
    logger.info(f"Running {subcommand} into {run_config.output_dir}")
    return Run(run_config, config, settings, gnuplot)


def _spectrum_frame(spectrum) -> pd.DataFrame:
    frame = spectrum.to_frame()
    frame["abs"] = np.abs(spectrum.values)
    return frame


@click.group()
@click.version_option(__version__)
def cli():
    """Biphoton exceptional-point simulator."""


@cli.command()
@common_options
@field_options
@click.option("--find-ep", is_flag=True, help="Also locate the coalescence coupling at the configured delta3")
@handle_errors
def eigen(config_path, output_dir, overrides, preset, gnuplot, verbose, omega3, delta3, omega2, find_ep):
    """Eigenenergies and regime at one parameter point."""
    run = start_run("eigen", config_path, output_dir, overrides, preset, gnuplot, verbose,
                    fields={"omega3": omega3, "delta3": delta3, "omega2": omega2})
    run.write_csv(run.pipeline.run_eigen(), "eigen.csv")
    if find_ep:
        omega_ep = run.pipeline.run_find_ep()
        run.write_report({"delta3": run.config.fields.delta3, "omega3_ep": omega_ep}, "ep.txt")
    run.finish()


@cli.command()
@common_options
@click.option("--omega3", "omega3_grid", type=GRID, required=True, help="Omega3 grid a:b[:step]")
@click.option("--delta3", "delta3_grid", type=GRID, default=None, help="Delta3 grid a:b[:step]")
@click.option("--omega2", "omega2_grid", type=GRID, default=None, help="Omega2 grid; gives the three-channel surface")
@handle_errors
def sweep(config_path, output_dir, overrides, preset, gnuplot, verbose, omega3_grid, delta3_grid, omega2_grid):
    """Eigenvalue sweep over Omega3 (and Delta3), or the (Omega2, Omega3) double-dressing surface."""
    run = start_run("sweep", config_path, output_dir, overrides, preset, gnuplot, verbose)
    if omega2_grid is not None:
        frame = run.pipeline.run_double_dressing_surface(omega2_grid, omega3_grid)
        run.write_csv(frame, "double_dressing.csv", title="three-channel energies")
    else:
        if delta3_grid is None:
            delta3_grid = np.array([run.config.fields.delta3])
        result = run.pipeline.run_sync(run.pipeline.run_sweep(omega3_grid, delta3_grid))
        run.write_csv(result.to_frame(), "sweep.csv", title="eigenenergies")
    run.finish()


@cli.command()
@common_options
@field_options
@click.option("--chi", "order", type=click.Choice(["1", "3"]), default="3", show_default=True)
@click.option("--axis", type=click.Choice(["real", "imaginary"]), default="real", show_default=True)
@click.option("--delta", "delta_grid", type=GRID, default=None, help="Offset grid a:b[:step]")
@handle_errors
def spectra(config_path, output_dir, overrides, preset, gnuplot, verbose, omega3, delta3, omega2,
            order, axis, delta_grid):
    """Linear or nonlinear susceptibility spectrum."""
    run = start_run("spectra", config_path, output_dir, overrides, preset, gnuplot, verbose,
                    fields={"omega3": omega3, "delta3": delta3, "omega2": omega2})
    spectrum = run.pipeline.run_spectra(f"chi{order}", f"{axis}_delta", delta_grid)
    run.write_csv(_spectrum_frame(spectrum), f"chi{order}_{axis}.csv", meta={"kind": spectrum.kind})
    run.finish()


@cli.command()
@common_options
@field_options
@click.option("--method", type=click.Choice(list(WAVEFORM_METHODS)), default="auto", show_default=True)
@click.option("--channels", is_flag=True, help="Also write the per-channel decomposition")
@handle_errors
def waveform(config_path, output_dir, overrides, preset, gnuplot, verbose, omega3, delta3, omega2,
             method, channels):
    """Two-photon correlation G2(tau)."""
    run = start_run("waveform", config_path, output_dir, overrides, preset, gnuplot, verbose,
                    fields={"omega3": omega3, "delta3": delta3, "omega2": omega2})
    wave = run.pipeline.run_waveform(method)
    fields = run.config.fields
    run.write_csv(wave.to_frame(run.pipeline.tau_unit_ns), "waveform.csv",
                  meta={"method": wave.method, "omega3": fields.omega3, "delta3": fields.delta3})
    if channels:
        parts = single_channel_waveforms(wave.tau, eigenvalues(run.config.atom, fields),
                                         run.config.numerics.w1, run.config.numerics.w_d)
        parts["tau"] = parts["tau"] * run.pipeline.tau_unit_ns
        run.write_csv(pd.DataFrame(parts).rename(columns={"tau": "tau_ns"}), "channels.csv")
    run.finish()


@cli.command()
@common_options
@field_options
@click.option("--seed", type=int, required=True, help="PRNG seed; identical seeds give identical counts")
@click.option("--duration", type=float, default=None, help="Acquisition time in s")
@click.option("--bin", "bin_width", type=float, default=None, help="Bin width in ns")
@click.option("--method", type=click.Choice(list(WAVEFORM_METHODS)), default="auto", show_default=True)
@handle_errors
def counts(config_path, output_dir, overrides, preset, gnuplot, verbose, omega3, delta3, omega2,
           seed, duration, bin_width, method):
    """Simulated coincidence histogram."""
    extra = list(overrides)
    if duration is not None:
        extra.append(f"counting.duration_s={duration!r}")
    if bin_width is not None:
        extra.append(f"counting.bin_width_ns={bin_width!r}")
    run = start_run("counts", config_path, output_dir, extra, preset, gnuplot, verbose, seed=seed,
                    fields={"omega3": omega3, "delta3": delta3, "omega2": omega2})
    hist = run.pipeline.run_counts(run.pipeline.run_waveform(method), seed)
    meta = {
        "bin_width_ns": hist.bin_width_ns,
        "duration_s": hist.duration_s,
        "background_rate": hist.background_rate,
        "seed": seed,
        "omega3": run.config.fields.omega3,
    }
    run.write_csv(hist.to_frame(), "counts.csv", meta=meta, title="coincidences")
    run.finish()


@cli.command()
@common_options
@click.option("--in", "input_path", type=click.Path(dir_okay=False), required=True, help="Histogram CSV")
@handle_errors
def fit(config_path, output_dir, overrides, preset, gnuplot, verbose, input_path):
    """Extract the eigenvalue pair from a coincidence histogram."""
    run = start_run("fit", config_path, output_dir, overrides, preset, gnuplot, verbose)
    hist = IOHandler.read_histogram(input_path)
    result = run.pipeline.run_fit(hist)
    run.write_report(result.to_dict(), "fit_report.txt")
    overlay = pd.DataFrame({"tau_ns": result.tau, "counts": hist.counts, "best_fit": result.best_fit})
    run.write_csv(overlay, "fit_curve.csv", title=f"fit: {result.model}")
    run.write_csv(pd.DataFrame([dataclasses.asdict(c) for c in result.candidates]), "fit_candidates.csv")
    run.finish()


@cli.command()
@common_options
@click.option("--in", "input_path", type=click.Path(dir_okay=False), required=True, help="Histogram CSV")
@handle_errors
def csr(config_path, output_dir, overrides, preset, gnuplot, verbose, input_path):
    """Cauchy-Schwarz factor from the cross-correlation peak."""
    run = start_run("csr", config_path, output_dir, overrides, preset, gnuplot, verbose)
    report = run.pipeline.run_csr(IOHandler.read_histogram(input_path))
    run.write_report(report.to_dict(), "csr.txt")
    run.finish()


@cli.command()
@common_options
@click.option("--seed", type=int, default=0, show_default=True)
@handle_errors
def trace(config_path, output_dir, overrides, preset, gnuplot, verbose, seed):
    """Simulate and fit the A-D-B-E-C-F power series."""
    run = start_run("trace", config_path, output_dir, overrides, preset, gnuplot, verbose, seed=seed)
    frame = run.pipeline.run_sync(run.pipeline.run_trace(seed))
    run.write_csv(frame, "trace.csv", title="fitted eigenvalues")
    run.finish()


if __name__ == "__main__":
    cli()
