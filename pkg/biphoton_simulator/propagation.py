# --- propagation.py ---
"""
Slow-light group velocity, EIT loss and the longitudinal phase-matching function.

v_g and alpha are SI (m/s, 1/m); offsets delta stay in Gamma41 units and are
converted with SystemParams.unit_rad_s where they meet a wavenumber.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import constants

from .errors import InvalidParameterError, NumericalError, SingularParameterError
from .models import BandwidthReport, ComplexSpectrum
from .params import DopplerModel, FieldParams, SystemParams
from .susceptibility import ChiParams, chi1

logger = logging.getLogger(__name__)

SINC_SERIES_RADIUS = 1e-2


def group_velocity(sys: SystemParams, fields: FieldParams, w_d: float = 1.0, g2_factor: float = 0.25) -> float:
    coupling = g2_factor * fields.omega3 ** 2
    numerator = (coupling - sys.gamma41 * sys.gamma21) ** 2
    bracket = coupling + fields.c2_const.real - sys.gamma21 ** 2
    if abs(bracket) <= 1e-12 * max(coupling, sys.gamma21 ** 2):
        raise SingularParameterError(
            f"Group velocity undefined: g|Omega3|^2 + c2 - Gamma21^2 vanishes (Omega3 = {fields.omega3})"
        )
    if bracket < 0:
        raise SingularParameterError(
            f"Group velocity rejected: g|Omega3|^2 + c2 - Gamma21^2 = {bracket:.6g} is negative, "
            f"which would give v_g < 0 (Omega3 = {fields.omega3})"
        )
    rate = 2 * sys.k_as0 * sys.cell_length * constants.c * numerator / (
        sys.omega14 * sys.od * sys.gamma41 * w_d * bracket
    )
    return rate * sys.unit_rad_s


def absorption_alpha(sys: SystemParams, fields: FieldParams, g2_factor: float = 0.25) -> float:
    n_sigma = sys.atomic_density * sys.sigma14
    loss = sys.gamma41 * sys.gamma21
    return 2 * n_sigma * loss / (g2_factor * fields.omega3 ** 2 + 4 * loss)


def bandwidth(sys: SystemParams, fields: FieldParams, g2_factor: float = 0.25) -> BandwidthReport:
    """Phase-matching bandwidth in Gamma41 units, exact and approximate."""
    approx = math.pi * fields.omega3 ** 2 / (sys.od * sys.gamma41)
    try:
        v_g = group_velocity(sys, fields, g2_factor=g2_factor)
        exact: Optional[float] = 2 * math.pi * v_g / sys.cell_length / sys.unit_rad_s
    except SingularParameterError as e:
        logger.warning(f"Exact bandwidth unavailable: {e}")
        exact = None
    return BandwidthReport(exact=exact, approx=approx)


@dataclass(frozen=True)
class PhaseMatching:
    v_g: float
    alpha: float
    k_as0: float
    length: float
    w_d: float = 1.0
    unit_rad_s: float = 1.0

    def dk(self, delta, causal: bool = False):
        """Complex wavevector mismatch in 1/m."""
        delta = np.asarray(delta)
        loss = -1j * self.alpha if causal else 1j * self.alpha
        return delta * self.unit_rad_s / self.v_g + loss

    def phi(self, delta, length: Optional[float] = None, causal: bool = False):
        length = self.length if length is None else length
        z = self.dk(delta, causal) * length / 2
        return complex_sinc(z) * np.exp(-1j * z)

    @property
    def delay(self) -> float:
        """Transit time L/v_g in units of 1/Gamma41."""
        return self.length * self.unit_rad_s / self.v_g


def phase_matching(
    sys: SystemParams, fields: FieldParams, w_d: float = 1.0, g2_factor: float = 0.25
) -> PhaseMatching:
    return PhaseMatching(
        v_g=group_velocity(sys, fields, w_d, g2_factor),
        alpha=absorption_alpha(sys, fields, g2_factor),
        k_as0=sys.k_as0,
        length=sys.cell_length,
        w_d=w_d,
        unit_rad_s=sys.unit_rad_s,
    )


def complex_sinc(z):
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < SINC_SERIES_RADIUS
    z2 = z * z
    series = 1 - z2 / 6 + z2 * z2 / 120
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        direct = np.sin(z) / np.where(small, 1.0, z)
    out = np.where(small, series, direct)
    if not np.all(np.isfinite(out)):
        worst = float(np.max(np.abs(z.imag)))
        raise NumericalError(f"Complex sinc overflow (|Im z| up to {worst:.6g}); alpha*L too large")
    return out


def phi(
    grid, pm: Optional[PhaseMatching], length: Optional[float] = None, bypass: bool = False, causal: bool = False
) -> ComplexSpectrum:
    """Longitudinal detuning function on the offset grid; bypass gives Phi = 1."""
    grid = np.asarray(grid, dtype=float)
    if bypass:
        return ComplexSpectrum(delta_grid=grid, values=np.ones(grid.shape, dtype=complex), kind="phi")
    if pm is None or not pm.v_g > 0:
        raise InvalidParameterError("Phi requires a positive group velocity unless bypass is set")
    return ComplexSpectrum(delta_grid=grid, values=pm.phi(grid, length, causal), kind="phi")


def dispersion_group_velocity(sys: SystemParams, fields: FieldParams, h: float = 1e-4) -> float:
    """
    Group velocity from the chi1 dispersion, v_g = c / (n + omega dn/domega).

    Uses the physical chi1 scale -OD/(k14 L) with Doppler averaging off. Agrees
    with group_velocity only when g|Omega3|^2 dominates Gamma41*Gamma21.
    """
    chi = ChiParams(chi1_prefactor=complex(-sys.od / (sys.k_as0 * sys.cell_length)))
    spec = chi1(np.array([-h, 0.0, h]), sys, fields, DopplerModel(enabled=False), chi)
    n = np.sqrt(1 + spec.values.real)
    dn = (n[2] - n[0]) / (2 * h)
    n_group = n[1] + sys.omega14 * dn / sys.unit_rad_s
    if not n_group > 0:
        raise NumericalError(f"Group index {n_group:.6g} is not positive")
    return float(constants.c / n_group)
