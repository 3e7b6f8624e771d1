# --- waveform.py ---
"""
Biphoton wavefunction and Glauber correlation G2(tau).

Two routes: a discrete spectral transform of kappa*Phi, and closed forms in
the strong, weak, exceptional-point and group-delay regimes. tau is in 1/Gamma41.
The transform kernel is exp(+i delta tau); with eigenenergies in the upper
half-plane this is the causal direction.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import constants, interpolate, optimize, signal
from scipy.signal import windows

from .errors import InvalidParameterError, ResolutionError, WrongRegimeError
from .models import (
    Channel,
    ChannelState,
    ComplexSpectrum,
    CorrelationWaveform,
    EigenPair,
    KappaSpectrum,
    RateCurve,
    ShapeClass,
)
from .params import SystemParams

logger = logging.getLogger(__name__)

EP_TOLERANCE = 1e-6
ZERO_DEPTH = 0.02
ONSET_LEVEL = 0.5
EP_RESIDUAL = 5e-3


def _heaviside(tau: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.where(tau >= 0, values, 0.0)


def _as_tau(tau) -> np.ndarray:
    return np.atleast_1d(np.asarray(tau, dtype=float))


def tau_grid(tau_max: float, n_tau: int) -> np.ndarray:
    if tau_max <= 0 or n_tau < 2:
        raise InvalidParameterError(f"tau grid needs tau_max > 0 and at least 2 points, got {tau_max}, {n_tau}")
    return np.linspace(0.0, tau_max, n_tau)


# ============== Closed forms ==============

def eq3_profile(tau, w1: float, gamma_eff: float, omega_e: float, w_d: float = 1.0) -> np.ndarray:
    tau = _as_tau(tau)
    values = 2 * w1 * np.exp(-2 * gamma_eff * tau / w_d) * np.sin(omega_e * tau / (2 * w_d)) ** 2
    return _heaviside(tau, values)


def g2_eq3(tau, w1: float, gamma_eff: float, omega_e, w_d: float = 1.0) -> CorrelationWaveform:
    """Strong-coupling Rabi oscillation W1 exp(-2 Gamma tau/W)[1 - cos(Omega_e tau/W)]."""
    omega_e = complex(omega_e)
    if abs(omega_e.imag) > 1e-12 * max(1.0, abs(omega_e)):
        raise WrongRegimeError(f"Strong-coupling form needs a real splitting, got Omega_e = {omega_e}")
    tau = _as_tau(tau)
    return CorrelationWaveform(
        tau=tau,
        g2=eq3_profile(tau, w1, gamma_eff, omega_e.real, w_d),
        method="eq3",
        meta={"w1": w1, "gamma_eff": gamma_eff, "omega_e": omega_e.real, "w_d": w_d},
    )


def eq4_profile(
    tau, w1: float, gamma_eff: float, splitting: float, w_d: float = 1.0, verbatim: bool = False
) -> np.ndarray:
    tau = _as_tau(tau)
    t = np.maximum(tau, 0.0) / w_d
    if splitting == 0:
        return _heaviside(tau, w1 * t ** 2 * np.exp(-2 * gamma_eff * t))
    # exponents carry the full splitting in the verbatim form
    shift = splitting if verbatim else splitting / 2
    slow = np.exp(-(gamma_eff - shift) * t)
    values = w1 / splitting ** 2 * (slow * np.expm1(-2 * shift * t)) ** 2
    return _heaviside(tau, values)


def g2_eq4(
    tau, w1: float, gamma_eff: float, splitting: float, w_d: float = 1.0, verbatim: bool = False
) -> CorrelationWaveform:
    """Weak-coupling two-linewidth form (W1/s^2)[exp(-Gamma_e- tau/W) - exp(-Gamma_e+ tau/W)]^2."""
    splitting = abs(float(splitting))
    gamma_minus = gamma_eff - splitting / 2
    if verbatim:
        if gamma_eff - splitting <= 0:
            logger.warning(f"Verbatim weak-coupling form grows without bound (Gamma_eff={gamma_eff}, s={splitting})")
    elif gamma_minus <= 0:
        raise InvalidParameterError(
            f"Gamma_e- = {gamma_minus:.6g} is not positive; the waveform would grow without bound"
        )
    tau = _as_tau(tau)
    return CorrelationWaveform(
        tau=tau,
        g2=eq4_profile(tau, w1, gamma_eff, splitting, w_d, verbatim),
        method="eq4",
        meta={"w1": w1, "gamma_eff": gamma_eff, "splitting": splitting, "w_d": w_d, "verbatim": verbatim},
    )


def g2_group_delay(
    tau, kappa0, v_g: float, alpha: float, w_d: float = 1.0, w1: float = 1.0, rate_unit: float = 1.0
) -> CorrelationWaveform:
    """
    Slow-light single exponential W1 |kappa0|^2 v_g^2 exp(-2 alpha v_g tau / W).

    rate_unit converts v_g into units of length per 1/Gamma41 (pass unit_rad_s).
    """
    if not alpha > 0 or not v_g > 0:
        raise InvalidParameterError(f"Group-delay form needs alpha > 0 and v_g > 0, got {alpha}, {v_g}")
    tau = _as_tau(tau)
    speed = v_g / rate_unit
    values = w1 * abs(kappa0) ** 2 * speed ** 2 * np.exp(-2 * alpha * speed * tau / w_d)
    return CorrelationWaveform(
        tau=tau,
        g2=_heaviside(tau, values),
        method="s34_group_delay",
        meta={"kappa0": abs(kappa0), "v_g": v_g, "alpha": alpha, "w_d": w_d, "w1": w1},
    )


def ep_limit(tau, w1: float, gamma_eff: float, w_d: float = 1.0) -> CorrelationWaveform:
    """Coalesced-eigenstate shape tau^2 exp(-2 Gamma_eff tau / W)."""
    tau = _as_tau(tau)
    values = w1 * tau ** 2 * np.exp(-2 * gamma_eff * tau / w_d)
    return CorrelationWaveform(
        tau=tau, g2=_heaviside(tau, values), method="ep_limit",
        meta={"w1": w1, "gamma_eff": gamma_eff, "w_d": w_d},
    )


def g2_two_pole(tau, eigen: EigenPair, w1: float = 1.0, w_d: float = 1.0) -> CorrelationWaveform:
    """General two-pole waveform; covers detuned pairs where the splitting is neither real nor imaginary."""
    tau = _as_tau(tau)
    magnitude = abs(eigen.omega_e)
    if magnitude == 0:
        wave = ep_limit(tau, w1, eigen.gamma_eff, w_d)
        return CorrelationWaveform(tau=tau, g2=wave.g2, method="two_pole", meta=dict(wave.meta))
    t = tau / w_d
    amplitude = np.exp(1j * eigen.delta_plus * t) - np.exp(1j * eigen.delta_minus * t)
    values = w1 * np.abs(amplitude) ** 2 / magnitude ** 2
    return CorrelationWaveform(
        tau=tau, g2=_heaviside(tau, values), method="two_pole",
        meta={"w1": w1, "w_d": w_d, **eigen.to_dict()},
    )


def g2_imaginary_basis(tau, eigen: EigenPair, w1: float = 1.0, w_d: float = 1.0) -> CorrelationWaveform:
    """Correlation after delta -> i delta: the linewidth splitting turns into a beat at |Omega_e|."""
    tau = _as_tau(tau)
    magnitude = abs(eigen.omega_e)
    if magnitude == 0:
        values = w1 * (tau / w_d) ** 2
    else:
        values = 4 * w1 * np.sin(magnitude * tau / (2 * w_d)) ** 2 / magnitude ** 2
    return CorrelationWaveform(
        tau=tau, g2=_heaviside(tau, values), method="imaginary_basis",
        meta={"w1": w1, "w_d": w_d, "omega_e_abs": magnitude},
    )


def single_channel_waveforms(tau, eigen: EigenPair, w1: float = 1.0, w_d: float = 1.0) -> Dict[str, np.ndarray]:
    """Per-channel terms and their interference; they sum to the two-pole waveform."""
    tau = _as_tau(tau)
    magnitude = abs(eigen.omega_e)
    if magnitude == 0:
        raise InvalidParameterError("Channel decomposition is undefined at the exceptional point")
    t = tau / w_d
    a = np.exp(1j * eigen.delta_plus * t)
    b = np.exp(1j * eigen.delta_minus * t)
    scale = w1 / magnitude ** 2
    return {
        "tau": tau,
        "plus": _heaviside(tau, scale * np.abs(a) ** 2),
        "minus": _heaviside(tau, scale * np.abs(b) ** 2),
        "interference": _heaviside(tau, -2 * scale * np.real(a * np.conj(b))),
    }


def closed_form(
    eigen: EigenPair, tau, w1: float = 1.0, w_d: float = 1.0, ep_tolerance: float = EP_TOLERANCE
) -> CorrelationWaveform:
    coupling = eigen.coupling(ep_tolerance)
    if coupling == "ep":
        return ep_limit(tau, w1, eigen.gamma_eff, w_d)
    if coupling == "strong":
        return g2_eq3(tau, w1, eigen.gamma_eff, eigen.omega_e.real, w_d)
    if coupling == "weak":
        return g2_eq4(tau, w1, eigen.gamma_eff, abs(eigen.omega_e), w_d)
    return g2_two_pole(tau, eigen, w1, w_d)


# ============== Spectral synthesis ==============

def kappa_spectrum(
    chi3: ComplexSpectrum, sys: SystemParams, e1_amp: float = 1.0, e2_amp: float = 1.0
) -> KappaSpectrum:
    """Nonlinear coupling -i sqrt(omega_S omega_AS)/(2c) chi3 E1 E2."""
    scale = -1j * math.sqrt(sys.omega_signal * sys.omega14) / (2 * constants.c)
    values = scale * chi3.values * e1_amp * e2_amp
    centre = int(np.argmin(np.abs(chi3.delta_grid)))
    return KappaSpectrum(delta_grid=chi3.delta_grid, values=values, kappa0=complex(values[centre]))


def constant_kappa(grid, kappa0: complex = 1.0) -> KappaSpectrum:
    grid = np.asarray(grid, dtype=float)
    return KappaSpectrum(delta_grid=grid, values=np.full(grid.shape, kappa0, dtype=complex), kappa0=complex(kappa0))


def two_pole_kappa(grid, eigen: EigenPair, scale: complex = 1.0) -> KappaSpectrum:
    """kappa with simple poles at both eigenenergies."""
    grid = np.asarray(grid, dtype=float)
    values = scale / ((grid - eigen.delta_plus) * (grid - eigen.delta_minus))
    centre = int(np.argmin(np.abs(grid)))
    return KappaSpectrum(delta_grid=grid, values=values, kappa0=complex(values[centre]))


def transform_grid(span: float, n_points: int) -> np.ndarray:
    """Uniform offset grid on [-span, span) suited to the FFT."""
    if span <= 0 or n_points < 16:
        raise InvalidParameterError(f"Transform grid needs span > 0 and >= 16 points, got {span}, {n_points}")
    return -span + np.arange(n_points) * (2 * span / n_points)


def synthesize_numeric(
    kappa: KappaSpectrum,
    phi: ComplexSpectrum,
    tau,
    length: float = 1.0,
    taper: float = 0.1,
    leakage_threshold: float = 0.01,
) -> CorrelationWaveform:
    """|psi(tau)|^2 with psi = (L/2pi) sum kappa Phi exp(i delta tau) d delta."""
    grid = np.asarray(kappa.delta_grid, dtype=float)
    if phi.delta_grid.shape != grid.shape or not np.allclose(phi.delta_grid, grid, rtol=0, atol=1e-12):
        raise InvalidParameterError("kappa and Phi must be sampled on the same grid")
    if grid.size < 16:
        raise InvalidParameterError(f"Transform grid too short: {grid.size} points")
    steps = np.diff(grid)
    step = float(steps[0])
    if step <= 0 or not np.allclose(steps, step, rtol=1e-9, atol=0):
        raise InvalidParameterError("Spectral synthesis needs a uniform, increasing offset grid")
    tau = _as_tau(tau)
    tau_max = float(np.max(np.abs(tau)))
    if step > math.pi / tau_max:
        raise ResolutionError(
            f"Grid spacing {step:.6g} exceeds pi/tau_max = {math.pi / tau_max:.6g}; refine the offset grid"
        )

    n = grid.size
    t = (np.arange(n) - n // 2) * (2 * math.pi / (n * step))
    if tau_max > t[-1]:
        raise InvalidParameterError(
            f"tau up to {tau_max:.6g} lies beyond the synthesized axis, which ends at {t[-1]:.6g}"
        )
    spectrum = kappa.values * phi.values * windows.tukey(n, taper)
    psi = length / (2 * math.pi) * step * np.fft.fftshift(n * np.fft.ifft(spectrum))
    power = np.abs(psi) ** 2

    total = float(power.sum())
    leakage = float(power[t < 0].sum() / total) if total > 0 else 0.0
    if leakage > leakage_threshold:
        logger.warning(f"Acausal leakage {leakage:.3%} exceeds {leakage_threshold:.1%} of the waveform energy")

    g2 = np.clip(interpolate.CubicSpline(t, power)(tau), 0.0, None)
    return CorrelationWaveform(
        tau=tau,
        g2=np.where(tau < 0, 0.0, g2),
        method="numeric_transform",
        meta={"n_points": n, "step": step, "taper": taper, "leakage": leakage},
    )


def coincidence_rate(waveform: CorrelationWaveform, rate_s: float, rate_as: float) -> RateCurve:
    """Coincidence rate G2 + R_S R_AS."""
    if rate_s < 0 or rate_as < 0:
        raise InvalidParameterError(f"Singles rates must be non-negative, got {rate_s}, {rate_as}")
    background = rate_s * rate_as
    return RateCurve(tau=waveform.tau, rate=waveform.g2 + background, background=background)


# ============== Entangled channels ==============

def channel_state(
    eigen: Optional[EigenPair] = None,
    channels: Optional[Sequence[complex]] = None,
    n3: Optional[float] = None,
    ep_tolerance: float = EP_TOLERANCE,
) -> ChannelState:
    """Frequency-entangled state built from two eigenenergies or three dressed channels."""
    if channels is not None:
        return _triple_state(list(channels), n3)
    if eigen is None:
        raise InvalidParameterError("channel_state needs an eigen pair or a list of channel energies")

    coupling = eigen.coupling(ep_tolerance)
    if coupling == "ep":
        return ChannelState(channels=[Channel(0.0, 0.0, eigen.gamma_eff, 1.0)])
    n = 1 / math.sqrt(2)
    half = eigen.omega_e.real / 2
    if coupling == "weak":
        return ChannelState(channels=[
            Channel(0.0, 0.0, eigen.gamma_e_plus, n),
            Channel(0.0, 0.0, eigen.gamma_e_minus, -n),
        ])
    widths = (eigen.gamma_eff, eigen.gamma_eff) if coupling == "strong" else (
        eigen.delta_plus.imag, eigen.delta_minus.imag
    )
    return ChannelState(channels=[
        Channel(half, -half, widths[0], n),
        Channel(-half, half, widths[1], -n),
    ])


def _triple_state(energies: List[complex], n3: Optional[float]) -> ChannelState:
    if len(energies) != 3:
        raise InvalidParameterError(f"A triple-channel state needs 3 channel energies, got {len(energies)}")
    n3 = 1 / math.sqrt(3) if n3 is None else n3
    if not 0 <= n3 <= 1:
        raise InvalidParameterError(f"N3 must lie in [0, 1], got {n3}")
    n_side = math.sqrt((1 - n3 ** 2) / 2)
    coefficients = (n_side, -n_side, -n3)
    ordered = sorted(energies, key=lambda z: (z.real, z.imag))
    return ChannelState(channels=[
        Channel(z.real, -z.real, z.imag, c) for z, c in zip(ordered, coefficients)
    ])


# ============== Shape predicates ==============

def interior_minima(waveform: CorrelationWaveform) -> np.ndarray:
    """Peak-normalized values of the interior local minima for tau >= 0."""
    mask = waveform.tau >= 0
    g2 = waveform.g2[mask]
    peak = float(np.max(g2)) if g2.size else 0.0
    if peak <= 0:
        return np.array([])
    normalized = g2 / peak
    idx, _ = signal.find_peaks(-normalized, prominence=1e-6)
    return normalized[idx]


def zero_count(waveform: CorrelationWaveform, depth: float = ZERO_DEPTH) -> int:
    return int(np.sum(interior_minima(waveform) < depth))


def onset_value(waveform: CorrelationWaveform) -> float:
    """G2 at the first tau >= 0 sample, relative to the peak."""
    mask = waveform.tau >= 0
    g2 = waveform.g2[mask]
    peak = float(np.max(g2)) if g2.size else 0.0
    return float(g2[0] / peak) if peak > 0 else 0.0


def ep_residual(waveform: CorrelationWaveform) -> float:
    """Normalized RMS residual of the best tau^2 exp(-2 b tau) fit."""
    mask = waveform.tau >= 0
    tau, g2 = waveform.tau[mask], waveform.g2[mask]
    peak = float(np.max(g2))
    y = g2 / peak
    t_peak = max(float(tau[int(np.argmax(y))]), 1e-9)
    guess = (math.e ** 2 / t_peak ** 2, 1 / t_peak)
    try:
        popt, _ = optimize.curve_fit(
            lambda t, a, b: a * t ** 2 * np.exp(-2 * b * t), tau, y, p0=guess, maxfev=5000
        )
    except RuntimeError:
        return float("inf")
    fitted = popt[0] * tau ** 2 * np.exp(-2 * popt[1] * tau)
    return float(np.sqrt(np.mean((fitted - y) ** 2)))


def classify_shape(waveform: CorrelationWaveform) -> ShapeClass:
    minima = interior_minima(waveform)
    if minima.size:
        if minima[0] < ZERO_DEPTH:
            return ShapeClass.OSCILLATORY
        return ShapeClass.OSCILLATORY_OFFSET
    if onset_value(waveform) > ONSET_LEVEL:
        return ShapeClass.SINGLE_EXPONENTIAL
    if ep_residual(waveform) < EP_RESIDUAL:
        return ShapeClass.EP
    return ShapeClass.ANTIBUNCHING
