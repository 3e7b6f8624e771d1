# --- counting.py ---
"""Coincidence histogram simulation, g2 normalization and the Cauchy-Schwarz factor."""
import logging
import math
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidParameterError, NormalizationError
from .models import CoincidenceHistogram, CorrelationWaveform, CsrReport, NormalizedCurve

logger = logging.getLogger(__name__)

FIBER_EFFICIENCY = 0.7
DETECTOR_EFFICIENCY = 0.4
MAX_MEAN_COUNT = 1e15


def bin_edges(tau_range_ns: Tuple[float, float], bin_width_ns: float) -> np.ndarray:
    start, stop = tau_range_ns
    if not bin_width_ns > 0:
        raise InvalidParameterError(f"bin_width must be positive, got {bin_width_ns}")
    if not stop > start:
        raise InvalidParameterError(f"Empty tau range [{start}, {stop}]")
    n_bins = int(round((stop - start) / bin_width_ns))
    return start + bin_width_ns * np.arange(n_bins + 1)


def bin_average(waveform: CorrelationWaveform, tau_unit_ns: float, edges_ns: np.ndarray, subsamples: int = 8) -> np.ndarray:
    """Mean of G2 over every bin, sampled at evenly spaced points inside the bin."""
    offsets = (np.arange(subsamples) + 0.5) / subsamples
    width = np.diff(edges_ns)
    points_ns = edges_ns[:-1, None] + width[:, None] * offsets[None, :]
    tau_ns = waveform.tau * tau_unit_ns
    samples = np.interp(points_ns, tau_ns, waveform.g2, left=0.0, right=0.0)
    return samples.mean(axis=1)


def simulate_histogram(
    waveform: CorrelationWaveform,
    tau_unit_ns: float,
    rate_s: float,
    rate_as: float,
    duration_s: float,
    bin_width_ns: float = 0.2,
    seed: Optional[int] = None,
    pair_scale: float = 1.0,
    efficiency: float = FIBER_EFFICIENCY * DETECTOR_EFFICIENCY,
    tau_range_ns: Optional[Tuple[float, float]] = None,
    subsamples: int = 8,
) -> CoincidenceHistogram:
    """
    Poisson coincidence counts per bin.

    Mean per bin = (pair_scale * <G2>_bin + R_S R_AS) * duration * bin_width * efficiency,
    with bin_width in seconds. A fixed seed gives the same counts bit for bit.
    """
    if not duration_s > 0:
        raise InvalidParameterError(f"duration must be positive, got {duration_s}")
    if rate_s < 0 or rate_as < 0 or pair_scale < 0:
        raise InvalidParameterError("rates and pair_scale must be non-negative")
    if not 0 < efficiency <= 1:
        raise InvalidParameterError(f"efficiency must lie in (0, 1], got {efficiency}")
    if tau_range_ns is None:
        tau_range_ns = (0.0, float(waveform.tau[-1] * tau_unit_ns))
    edges = bin_edges(tau_range_ns, bin_width_ns)
    centres = 0.5 * (edges[:-1] + edges[1:])
    background = rate_s * rate_as

    g2_bins = bin_average(waveform, tau_unit_ns, edges, subsamples)
    mean = (pair_scale * g2_bins + background) * duration_s * bin_width_ns * 1e-9 * efficiency
    if not np.all(np.isfinite(mean)) or float(np.max(mean, initial=0.0)) > MAX_MEAN_COUNT:
        raise InvalidParameterError(f"Expected counts overflow (max mean {float(np.max(mean)):.3g})")

    rng = np.random.Generator(np.random.Philox(seed))
    counts = rng.poisson(mean).astype(np.int64)
    logger.info(f"Simulated {len(counts)} bins, {int(counts.sum())} coincidences (seed={seed})")
    return CoincidenceHistogram(
        tau_ns=centres,
        counts=counts,
        bin_width_ns=bin_width_ns,
        duration_s=duration_s,
        background_rate=background,
        seed=seed,
        expected=mean,
    )


def scale_for_contrast(waveform: CorrelationWaveform, background_rate: float, target_ratio: float) -> float:
    """pair_scale that puts the waveform peak at target_ratio times the flat background."""
    if not background_rate > 0 or not target_ratio > 1:
        raise InvalidParameterError(
            f"Contrast calibration needs background > 0 and target ratio > 1, got {background_rate}, {target_ratio}"
        )
    peak = float(np.max(waveform.g2))
    if not peak > 0:
        raise InvalidParameterError("Waveform has no positive peak to calibrate against")
    return (target_ratio - 1) * background_rate / peak


def background_window(n_bins: int, window_fraction: float = 0.2) -> slice:
    if not 0 < window_fraction <= 1:
        raise InvalidParameterError(f"window_fraction must lie in (0, 1], got {window_fraction}")
    width = int(math.floor(n_bins * window_fraction))
    return slice(n_bins - width, n_bins)


def normalize_to_g2(hist: CoincidenceHistogram, window_fraction: float = 0.2) -> NormalizedCurve:
    """Divide counts by the mean of the trailing flat-background window."""
    window = hist.counts[background_window(len(hist.counts), window_fraction)]
    if window.size == 0:
        raise NormalizationError("Background window is empty; widen the window or the tau range")
    scale = float(np.mean(window))
    if not scale > 0:
        raise NormalizationError("Background window holds no counts")
    counts = hist.counts.astype(float)
    return NormalizedCurve(
        tau_ns=hist.tau_ns,
        g2=counts / scale,
        errors=np.sqrt(np.maximum(counts, 1.0)) / scale,
        scale=scale,
    )


def cauchy_schwarz(
    cross_peak: float,
    g_ss0: float = 1.6,
    g_asas0: float = 2.0,
    cross_err: float = 0.0,
    g_ss0_err: float = 0.2,
    g_asas0_err: float = 0.0,
) -> CsrReport:
    """R2 = g_SAS(0)^2 / (g_SS(0) g_ASAS(0)); R2 > 1 violates the classical bound."""
    for name, value in (("cross_peak", cross_peak), ("g_ss0", g_ss0), ("g_asas0", g_asas0)):
        if not value > 0:
            raise InvalidParameterError(f"{name} must be positive, got {value}")
    r2 = cross_peak ** 2 / (g_ss0 * g_asas0)
    relative = math.sqrt(
        (2 * cross_err / cross_peak) ** 2 + (g_ss0_err / g_ss0) ** 2 + (g_asas0_err / g_asas0) ** 2
    )
    return CsrReport(
        g2_cross_peak=cross_peak, g2_ss0=g_ss0, g2_asas0=g_asas0, r2=r2, uncertainty=r2 * relative
    )


def peak_with_error(curve: NormalizedCurve) -> Tuple[float, float]:
    idx = int(np.argmax(curve.g2))
    return float(curve.g2[idx]), float(curve.errors[idx])
