# --- pipeline.py ---
import asyncio
import logging
import sys
from typing import Awaitable, List, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd
from tqdm import tqdm

from .chunker import GridChunk, GridChunker
from .config import PresetRegistry, Settings, SimulationConfig, get_settings
from .counting import cauchy_schwarz, normalize_to_g2, peak_with_error, scale_for_contrast, simulate_histogram
from .eigensystem import classify_regime, eigenvalues, find_ep, sweep_double_dressing, sweep_eigenvalues
from .errors import InvalidParameterError, WrongRegimeError
from .fitting import assemble_trace, fit_point, fit_waveform
from .merger import SweepMerger
from .models import CoincidenceHistogram, ComplexSpectrum, CorrelationWaveform, CsrReport, EigenSweep, FitResult
from .propagation import bandwidth, phase_matching, phi
from .susceptibility import SpectrumRequest, chi3
from .waveform import (
    classify_shape,
    closed_form,
    ep_limit,
    g2_eq3,
    g2_eq4,
    g2_group_delay,
    g2_imaginary_basis,
    g2_two_pole,
    kappa_spectrum,
    synthesize_numeric,
    tau_grid,
    transform_grid,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

WAVEFORM_METHODS = (
    "auto", "numeric_transform", "eq3", "eq4", "s34_group_delay", "ep_limit", "two_pole", "imaginary_basis",
)


class SimulationPipeline:
    """Runs one subcommand's computation against a resolved configuration."""

    def __init__(
        self,
        config: SimulationConfig,
        settings: Optional[Settings] = None,
        chunker: Optional[GridChunker] = None,
        merger: Optional[SweepMerger] = None,
    ):
        self.config = config
        self.settings = settings or get_settings()
        self.chunker = chunker or GridChunker()
        self.merger = merger or SweepMerger()

    @property
    def tau_unit_ns(self) -> float:
        return self.config.atom.tau_unit_ns

    def _progress(self, total: int, desc: str) -> tqdm:
        return tqdm(total=total, desc=desc, file=sys.stderr, disable=not self.settings.SHOW_PROGRESS)

    async def _gather(self, jobs: Sequence, desc: str) -> List:
        """Run blocking callables in worker threads, at most MAX_CONCURRENT at a time, keeping order."""
        semaphore = asyncio.Semaphore(max(1, self.settings.MAX_CONCURRENT))
        bar = self._progress(len(jobs), desc)

        async def run(job):
            async with semaphore:
                return await asyncio.to_thread(job)

        try:
            tasks = []
            for i, job in enumerate(jobs):
                task = asyncio.create_task(run(job), name=f"{desc}-{i}")
                task.add_done_callback(lambda _: bar.update())
                tasks.append(task)
            results = await asyncio.gather(*tasks, return_exceptions=True)
        finally:
            bar.close()

        for i, result in enumerate(results):
            if isinstance(result, Exception):
                logger.error(f"[{desc} {i}] failed: {result}")
                raise result
        return list(results)

    # ============== Eigenvalues ==============

    def run_eigen(self) -> pd.DataFrame:
        """One row: the eigen pair, its splitting and the regime label at the configured fields."""
        atom, fields = self.config.atom, self.config.fields
        pair = eigenvalues(atom, fields)
        report = bandwidth(atom, fields, self.config.chi.g2_factor)
        width = report.approx
        if self.config.numerics.regime_bandwidth == "exact":
            if report.exact is None:
                logger.warning("Exact bandwidth unavailable; labelling the regime with the approximation")
            else:
                width = report.exact
        label = classify_regime(atom, fields, width, self.config.numerics.ep_tolerance)
        row = {"omega3": fields.omega3, "delta3": fields.delta3, **pair.to_dict(),
               "re_omega_e": pair.omega_e.real, "im_omega_e": pair.omega_e.imag,
               "coupling": pair.coupling(self.config.numerics.ep_tolerance), **label.to_dict()}
        logger.info(f"Omega3={fields.omega3:.6g}: {row['coupling']} coupling, regime {row['regime']}")
        return pd.DataFrame([row])

    def run_find_ep(self) -> float:
        return find_ep(self.config.atom, self.config.fields.delta3)

    async def run_sweep(self, omega3_grid, delta3_grid) -> EigenSweep:
        """Eigenvalue surface over (delta3, omega3), chunked along omega3."""
        chunks: List[GridChunk] = self.chunker.chunk(omega3_grid)
        if not chunks:
            raise InvalidParameterError("Empty omega3 grid")
        atom = self.config.atom
        delta3_grid = np.atleast_1d(np.asarray(delta3_grid, dtype=float))
        jobs = [lambda c=c: sweep_eigenvalues(atom, c.values, delta3_grid) for c in chunks]
        sweeps = await self._gather(jobs, "sweep")

        merged = self.merger.merge(sweeps)
        if not self.merger.validate_continuity(merged, self.config.numerics.ep_tolerance):
            logger.warning("Eigenvalue branch continuity issues detected")
        return merged

    def run_double_dressing_surface(self, omega2_grid, omega3_grid) -> pd.DataFrame:
        surface = sweep_double_dressing(
            self.config.atom, self.config.fields, omega2_grid, omega3_grid, self.config.chi.g2_factor
        )
        o2, o3 = np.meshgrid(omega2_grid, omega3_grid, indexing="ij")
        columns = {"omega2": o2.ravel(), "omega3": o3.ravel()}
        for k in range(3):
            columns[f"re_u{k + 1}"] = surface[..., k].real.ravel()
            columns[f"im_u{k + 1}"] = surface[..., k].imag.ravel()
        logger.info(f"Computed double-dressing surface on {o2.size} points")
        return pd.DataFrame(columns)

    # ============== Spectra ==============

    def spectrum_request(self, kind: str, grid=None) -> SpectrumRequest:
        num = self.config.numerics
        if grid is None:
            grid = np.linspace(num.delta_min, num.delta_max, num.n_delta)
        return SpectrumRequest(
            kind=kind, grid=np.asarray(grid, dtype=float), sys=self.config.atom, fields=self.config.fields,
            doppler=self.config.doppler, chi=self.config.chi, max_delta=num.max_delta,
        )

    def run_spectra(self, kind: str, axis: str = "real_delta", grid=None) -> ComplexSpectrum:
        spectrum = self.spectrum_request(kind, grid).evaluate(axis)
        logger.info(f"Evaluated {kind} on {spectrum.delta_grid.size} points ({axis})")
        return spectrum

    # ============== Waveforms ==============

    def run_waveform(self, method: str = "auto") -> CorrelationWaveform:
        atom, fields, num = self.config.atom, self.config.fields, self.config.numerics
        if method not in WAVEFORM_METHODS:
            raise InvalidParameterError(f"Unknown waveform method: {method}. Choose from {list(WAVEFORM_METHODS)}")
        tau = tau_grid(num.tau_max, num.n_tau)
        pair = eigenvalues(atom, fields)
        logger.info(f"Computing {method} waveform at Omega3={fields.omega3:.6g}, delta3={fields.delta3:.6g}")

        if method == "auto":
            return closed_form(pair, tau, num.w1, num.w_d, num.ep_tolerance)
        if method == "eq3":
            return g2_eq3(tau, num.w1, pair.gamma_eff, pair.omega_e, num.w_d)
        if method == "eq4":
            if pair.coupling(num.ep_tolerance) not in ("weak", "ep"):
                raise WrongRegimeError(f"Weak-coupling form needs an imaginary splitting, got {pair.omega_e}")
            return g2_eq4(tau, num.w1, pair.gamma_eff, abs(pair.omega_e), num.w_d)
        if method == "ep_limit":
            return ep_limit(tau, num.w1, pair.gamma_eff, num.w_d)
        if method == "two_pole":
            return g2_two_pole(tau, pair, num.w1, num.w_d)
        if method == "imaginary_basis":
            return g2_imaginary_basis(tau, pair, num.w1, num.w_d)

        g2_factor = self.config.chi.g2_factor
        if method == "s34_group_delay":
            pm = phase_matching(atom, fields, num.w_d, g2_factor)
            centre = chi3(np.array([0.0]), atom, fields, self.config.doppler, self.config.chi)
            kappa0 = kappa_spectrum(centre, atom, fields.e1_amp, fields.e2_amp).kappa0
            return g2_group_delay(tau, kappa0, pm.v_g, pm.alpha, num.w_d, num.w1, atom.unit_rad_s)

        grid = transform_grid(num.transform_span, num.transform_points)
        spectrum = chi3(grid, atom, fields, self.config.doppler, self.config.chi, max_delta=num.max_delta)
        kappa = kappa_spectrum(spectrum, atom, fields.e1_amp, fields.e2_amp)
        pm = None if num.bypass_phi else phase_matching(atom, fields, num.w_d, g2_factor)
        detuning = phi(grid, pm, bypass=num.bypass_phi, causal=num.causal_phi)
        return synthesize_numeric(kappa, detuning, tau, atom.cell_length, num.taper, num.leakage_threshold)

    # ============== Counting ==============

    def run_counts(self, waveform: CorrelationWaveform, seed: Optional[int]) -> CoincidenceHistogram:
        counting = self.config.counting
        background = counting.rate_s * counting.rate_as
        pair_scale = scale_for_contrast(waveform, background, counting.peak_to_background)
        return simulate_histogram(
            waveform,
            self.tau_unit_ns,
            counting.rate_s,
            counting.rate_as,
            counting.duration_s,
            bin_width_ns=counting.bin_width_ns,
            seed=seed,
            pair_scale=pair_scale,
            efficiency=counting.efficiency,
            subsamples=counting.subsamples,
        )

    def run_fit(self, data) -> FitResult:
        return fit_waveform(data, self.tau_unit_ns, self.config.fitting)

    def run_csr(self, hist: CoincidenceHistogram) -> CsrReport:
        counting = self.config.counting
        curve = normalize_to_g2(hist, counting.window_fraction)
        peak, error = peak_with_error(curve)
        report = cauchy_schwarz(
            peak, counting.g_ss0, counting.g_asas0, error, counting.g_ss0_err, counting.g_asas0_err
        )
        logger.info(f"Cauchy-Schwarz factor R2 = {report.r2:.4g} +/- {report.uncertainty:.2g}")
        return report

    # ============== Transition trace ==============

    async def run_trace(self, seed: Optional[int] = None) -> pd.DataFrame:
        """Simulate and fit the strong-to-weak power series, one histogram per point."""
        points = PresetRegistry.pathway(self.config.counting.calibration)
        num = self.config.numerics
        tau = tau_grid(num.tau_max, num.n_tau)

        simulated = []
        for i, (label, omega3) in enumerate(points):
            fields = self.config.fields.model_copy(update={"omega3": omega3})
            pair = eigenvalues(self.config.atom, fields)
            waveform = closed_form(pair, tau, num.w1, num.w_d, num.ep_tolerance)
            point_seed = None if seed is None else seed + i
            simulated.append((label, omega3, waveform, self.run_counts(waveform, point_seed)))

        jobs = [
            lambda o=omega3, h=hist: fit_point(o, h, self.tau_unit_ns, self.config.fitting)
            for _, omega3, _, hist in simulated
        ]
        rows = await self._gather(jobs, "trace")

        frame = assemble_trace(rows)
        labels = {omega3: (label, classify_shape(waveform).value) for label, omega3, waveform, _ in simulated}
        frame.insert(0, "label", [labels[o][0] for o in frame["omega3"]])
        frame["shape"] = [labels[o][1] for o in frame["omega3"]]
        logger.info(f"Traced {len(frame)} points along {'-'.join(PresetRegistry.PATHWAY)}")
        return frame

    def run_sync(self, coroutine: Awaitable[T]) -> T:
        """Sync wrapper."""
        return asyncio.run(coroutine)
