# --- params.py ---
"""
Physical constants, unit conventions and the thermal velocity model.

Every angular frequency inside the package is a multiple of Gamma41 and every
time a multiple of 1/Gamma41. Conversion to MHz and ns happens only at I/O,
through the helpers on SystemParams.
"""
import logging
import math
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import constants

from .errors import InvalidParameterError
from .models import ComplexValue

logger = logging.getLogger(__name__)

RB85_MASS = 84.911789732 * constants.m_u


class SystemParams(BaseModel):
    """Atomic decay rates, medium geometry and thermal constants."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma41: float = Field(default=1.0, gt=0, description="Gamma41, the internal rate unit")
    gamma21_ratio: float = Field(default=0.2, gt=0, le=1, description="Gamma21 / Gamma41")
    gamma31_ratio: float = Field(default=1.0, gt=0, description="Gamma31 / Gamma41")
    gamma11_ratio: float = Field(default=0.4, gt=0, description="Gamma11 / Gamma41, stored only")
    gamma41_mhz: float = Field(default=6.0, gt=0, description="Gamma41 / 2pi in MHz")
    od: float = Field(default=6.8, gt=0, description="Optical depth N sigma14 L")
    cell_length: float = Field(default=0.07, gt=0, description="Medium length L in m")
    temperature: float = Field(default=333.15, gt=0, description="Cell temperature in K")
    atomic_mass: float = Field(default=RB85_MASS, gt=0, description="Atomic mass in kg")
    atomic_density: float = Field(default=2.5e17, gt=0, description="Atomic density N in m^-3")
    wavelength14: float = Field(default=780e-9, gt=0, description="Anti-Stokes transition wavelength in m")
    wavelength_signal: float = Field(default=795e-9, gt=0, description="Stokes photon wavelength in m")
    dipole14: Optional[float] = Field(default=None, gt=0, description="Dipole moment mu14 in C m")

    @model_validator(mode="after")
    def _check_dipole_consistency(self) -> "SystemParams":
        if self.dipole14 is not None:
            od_from_dipole = self.atomic_density * self.sigma14 * self.cell_length
            if abs(od_from_dipole - self.od) > 1e-6 * self.od:
                raise ValueError(
                    f"dipole14 gives N*sigma14*L = {od_from_dipole:.6g}, inconsistent with od = {self.od}"
                )
        return self

    @property
    def gamma21(self) -> float:
        return self.gamma21_ratio * self.gamma41

    @property
    def gamma31(self) -> float:
        return self.gamma31_ratio * self.gamma41

    @property
    def gamma11(self) -> float:
        return self.gamma11_ratio * self.gamma41

    @property
    def gamma_eff(self) -> float:
        return (self.gamma41 + self.gamma21) / 2

    @property
    def gamma_diff(self) -> float:
        return (self.gamma41 - self.gamma21) / 2

    @property
    def unit_rad_s(self) -> float:
        """Angular frequency in rad/s of one internal rate unit."""
        return 2 * math.pi * self.gamma41_mhz * 1e6 / self.gamma41

    @property
    def tau_unit_ns(self) -> float:
        return 1e9 / self.unit_rad_s

    @property
    def k_as0(self) -> float:
        return 2 * math.pi / self.wavelength14

    @property
    def omega14(self) -> float:
        return 2 * math.pi * constants.c / self.wavelength14

    @property
    def omega_signal(self) -> float:
        return 2 * math.pi * constants.c / self.wavelength_signal

    @property
    def sigma14(self) -> float:
        """On-resonance absorption cross section in m^2."""
        if self.dipole14 is None:
            return self.od / (self.atomic_density * self.cell_length)
        gamma41_phys = 2 * math.pi * self.gamma41_mhz * 1e6
        return (2 * math.pi * self.dipole14 ** 2
                / (constants.epsilon_0 * constants.hbar * self.wavelength14 * gamma41_phys))

    @property
    def most_probable_speed(self) -> float:
        return math.sqrt(2 * constants.k * self.temperature / self.atomic_mass)

    def to_mhz(self, rate):
        return rate * self.unit_rad_s / (2 * math.pi * 1e6)

    def from_mhz(self, mhz):
        return mhz * 2 * math.pi * 1e6 / self.unit_rad_s

    def tau_to_ns(self, tau):
        return tau * self.tau_unit_ns

    def ns_to_tau(self, tau_ns):
        return tau_ns / self.tau_unit_ns

    def optical_rate(self, wavelength: float) -> float:
        """Optical angular frequency of a field, in internal units."""
        return 2 * math.pi * constants.c / wavelength / self.unit_rad_s


class FieldParams(BaseModel):
    """Rabi frequencies and detunings of the three driving fields, in Gamma41 units."""
    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True)

    omega3: float = Field(default=0.8, ge=0)
    delta3: float = 0.0
    omega2: float = Field(default=0.0, ge=0)
    delta2: float = 0.0
    delta1: float = 52.0
    d2_const: ComplexValue = Field(default=0j, description="Dressing constant of E2 in chi3")
    c2_const: ComplexValue = Field(default=0j, description="Dressing constant of E2 in chi1")
    e1_amp: float = 1.0
    e2_amp: float = 1.0
    wavelength1: float = Field(default=795e-9, gt=0)
    wavelength2: float = Field(default=780e-9, gt=0)
    wavelength3: float = Field(default=780e-9, gt=0)
    direction1: Literal[-1, 1] = 1
    direction2: Literal[-1, 1] = 1
    direction3: Literal[-1, 1] = -1


class RabiCalibration(BaseModel):
    """Square-root power law anchored at one reference point."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    p_ref_mw: float = Field(default=1.0, gt=0)
    omega_ref: float = Field(default=0.8, ge=0)


class DopplerModel(BaseModel):
    """Gauss-Hermite quadrature over the 1D thermal velocity distribution."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_nodes: int = Field(default=64, ge=1)
    enabled: bool = True
    shift_e1: bool = False
    shift_e2: bool = False
    shift_e3: bool = False

    def nodes(self, sys: SystemParams) -> Tuple[np.ndarray, np.ndarray]:
        """Velocities in m/s and normalized weights."""
        if not self.enabled:
            return np.array([0.0]), np.array([1.0])
        x, w = np.polynomial.hermite.hermgauss(self.n_nodes)
        return sys.most_probable_speed * x, w / math.sqrt(math.pi)

    @staticmethod
    def doppler_factor(velocities: np.ndarray) -> np.ndarray:
        return 1.0 + velocities / constants.c

    def shifted_detunings(
        self, sys: SystemParams, fields: FieldParams, velocities: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-node detunings of E1, E2 and E3; a field moves only when its shift is switched on."""
        beta = velocities / constants.c
        out = []
        for delta, wavelength, direction, enabled in (
            (fields.delta1, fields.wavelength1, fields.direction1, self.shift_e1),
            (fields.delta2, fields.wavelength2, fields.direction2, self.shift_e2),
            (fields.delta3, fields.wavelength3, fields.direction3, self.shift_e3),
        ):
            if enabled and self.enabled:
                out.append(delta - direction * beta * sys.optical_rate(wavelength))
            else:
                out.append(np.full_like(velocities, delta, dtype=float))
        return out[0], out[1], out[2]

def maxwell_boltzmann_pdf(
    v, params: SystemParams, form: Literal["standard", "printed"] = "standard"
) -> np.ndarray:
    """
    1D thermal velocity density in s/m.

    "printed" keeps the v^2 under the radical; it is not normalized and vanishes at v=0.
    """
    _require_positive("temperature", params.temperature)
    _require_positive("atomic_mass", params.atomic_mass)
    v = np.asarray(v, dtype=float)
    kt = constants.k * params.temperature
    m = params.atomic_mass
    gaussian = np.exp(-m * v ** 2 / (2 * kt))
    if form == "standard":
        return np.sqrt(m / (2 * math.pi * kt)) * gaussian
    if form == "printed":
        return np.sqrt(m * v ** 2 / (2 * math.pi * kt)) * gaussian
    raise InvalidParameterError(f"Unknown velocity distribution form: {form}. Choose from ['standard', 'printed']")


def doppler_width_fwhm(params: SystemParams, wavelength: Optional[float] = None) -> float:
    """Doppler FWHM in Hz."""
    wavelength = params.wavelength14 if wavelength is None else wavelength
    _require_positive("wavelength", wavelength)
    return math.sqrt(8 * math.log(2) * constants.k * params.temperature / params.atomic_mass) / wavelength


def power_to_rabi(power_mw: float, calib: Optional[RabiCalibration] = None) -> float:
    calib = calib or RabiCalibration()
    if power_mw < 0:
        raise InvalidParameterError(f"Laser power must be non-negative, got {power_mw} mW")
    return calib.omega_ref * math.sqrt(power_mw / calib.p_ref_mw)


def _require_positive(name: str, value: float) -> None:
    if not value > 0:
        raise InvalidParameterError(f"{name} must be positive, got {value}")
