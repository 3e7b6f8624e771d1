# --- susceptibility.py ---
"""
Doppler-averaged linear and third-order susceptibilities over an offset grid.

The EIT term d_EIT is carried in its cleared form num/den so that its own pole
never reaches chi3: 1/d_EIT = den/num, and num has the eigenenergies as roots.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .eigensystem import eigenvalues_array
from .errors import InvalidParameterError, NumericalError
from .models import ComplexSpectrum, ComplexValue, SpectrumAxis
from .params import DopplerModel, FieldParams, SystemParams

logger = logging.getLogger(__name__)

POLE_TOLERANCE = 1e-12
MAX_DELTA = 1e3
QUADRATURE_TOLERANCE = 1e-8


class ChiParams(BaseModel):
    """Overall scale constants and the Rabi coupling convention."""
    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True)

    chi3_prefactor: ComplexValue = Field(default=1 + 0j, description="Scale of chi3, arbitrary units")
    chi1_prefactor: ComplexValue = Field(default=-1 + 0j, description="Scale of chi1, arbitrary units")
    g2_factor: float = Field(
        default=0.25, gt=0, description="Multiplier of |Omega|^2; 1/4 matches the eigenvalues, 1 is the bare form"
    )
    double_dressing: bool = Field(default=False, description="Dress d_EIT with E2 inside chi3")

    @field_validator("chi3_prefactor", "chi1_prefactor")
    @classmethod
    def _nonzero(cls, v: complex) -> complex:
        if v == 0:
            raise ValueError("prefactor must be nonzero")
        return v


def d_eit_cleared(
    delta, sys: SystemParams, fields: FieldParams, w_d=1.0, g2_factor: float = 0.25, delta3_d=None
) -> Tuple[np.ndarray, np.ndarray]:
    """Numerator and denominator of d_EIT; num vanishes at the eigenenergies."""
    delta3_d = fields.delta3 if delta3_d is None else delta3_d
    u = np.asarray(w_d) * np.asarray(delta)
    den = sys.gamma41 + 1j * u + 1j * np.asarray(delta3_d)
    num = (sys.gamma21 + 1j * u) * den + g2_factor * fields.omega3 ** 2
    return num, den


def d_eit(delta, sys: SystemParams, fields: FieldParams, w_d=1.0, g2_factor: float = 0.25, delta3_d=None):
    """
    EIT non-Hermitian term num/den.

    Within POLE_TOLERANCE of the embedded pole the cleared product
    d_EIT * den = num is returned instead, so the output stays finite.
    """
    num, den = d_eit_cleared(delta, sys, fields, w_d, g2_factor, delta3_d)
    num = np.asarray(num, dtype=complex)
    den = np.asarray(den, dtype=complex)
    num, den = np.broadcast_arrays(num, den)
    at_pole = np.abs(den) < POLE_TOLERANCE
    if at_pole.any():
        logger.debug(f"d_EIT evaluated in cleared form at {int(at_pole.sum())} pole points")
    out = np.divide(num, den, out=num.copy(), where=~at_pole)
    return out[()] if out.ndim == 0 else out



def d_eit_polynomial(sys: SystemParams, fields: FieldParams, g2_factor: float = 0.25) -> np.ndarray:
    """Coefficients in delta (W_D = 1) of the cleared d_EIT numerator, highest power first."""
    gamma_sum = sys.gamma21 + sys.gamma41
    return np.array([
        -1.0 + 0j,
        1j * gamma_sum - fields.delta3,
        sys.gamma21 * (sys.gamma41 + 1j * fields.delta3) + g2_factor * fields.omega3 ** 2,
    ])


def _check_grid(grid, max_delta: float) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise InvalidParameterError("Empty delta grid")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise InvalidParameterError("delta grid must be strictly increasing")
    if np.max(np.abs(grid)) > max_delta:
        raise InvalidParameterError(f"delta grid exceeds the resolved window |delta| <= {max_delta}")
    return grid


def _node_sum(integrand: np.ndarray, weights: np.ndarray, velocities: np.ndarray, kind: str) -> np.ndarray:
    bad = ~np.isfinite(integrand)
    if bad.any():
        node = int(np.argwhere(bad)[0][0])
        raise NumericalError(
            f"{kind} integrand is not finite at quadrature node {node} (v = {velocities[node]:.6g} m/s)"
        )
    return (weights[:, None] * integrand).sum(axis=0)


def _chi3_integrand(u, sys, fields, chi, d1, d2, d3):
    num, den = d_eit_cleared(u, sys, fields, 1.0, chi.g2_factor, d3)
    dressing = sys.gamma41 + 1j * d2 + 1j * u + fields.d2_const
    # den and dressing are the same factor when E2 and E3 share detuning and d2 = 0
    ratio = np.divide(den, dressing, out=np.ones_like(den), where=den != dressing)
    probe = sys.gamma31 + 1j * d1
    if not chi.double_dressing:
        return chi.chi3_prefactor * ratio / (probe * num)

    omega_eff = 2 * np.sqrt(chi.g2_factor) * fields.omega3
    p_plus, p_minus = eigenvalues_array(sys, omega_eff, d3)
    c0 = 1j * sys.gamma41 - d3 / 2 + fields.delta2
    cubic = ((u - p_plus) * (u - c0) - chi.g2_factor * fields.omega2 ** 2) * (u - p_minus)
    return chi.chi3_prefactor * ratio * (u - c0) / (probe * -cubic)


def _quadrature_change(coarse: np.ndarray, fine: np.ndarray) -> float:
    scale = np.maximum(np.abs(fine), np.finfo(float).tiny)
    return float(np.max(np.abs(fine - coarse) / scale))


def _averaged(evaluate, sys: SystemParams, doppler: DopplerModel, kind: str) -> np.ndarray:
    """Node sum at the configured order, cross-checked at twice the nodes when a field is shifted."""
    values = evaluate(doppler)
    if doppler.enabled and (doppler.shift_e1 or doppler.shift_e2 or doppler.shift_e3):
        doubled = doppler.model_copy(update={"n_nodes": 2 * doppler.n_nodes})
        change = _quadrature_change(values, evaluate(doubled))
        if change > QUADRATURE_TOLERANCE:
            logger.warning(
                f"{kind} quadrature not converged: {doppler.n_nodes} -> {doubled.n_nodes} nodes "
                f"changes values by {change:.3g} relative (ku/Gamma41 = {doppler_ratio(sys):.3g})"
            )
    return values


def doppler_ratio(sys: SystemParams) -> float:
    """Doppler width k u of the anti-Stokes field in Gamma41 units."""
    return sys.k_as0 * sys.most_probable_speed / sys.unit_rad_s


def chi3(
    grid, sys: SystemParams, fields: FieldParams, doppler: DopplerModel, chi: Optional[ChiParams] = None,
    imaginary: bool = False, max_delta: float = MAX_DELTA,
) -> ComplexSpectrum:
    chi = chi or ChiParams()
    grid = _check_grid(grid, max_delta)
    delta = 1j * grid if imaginary else grid

    def evaluate(model: DopplerModel) -> np.ndarray:
        velocities, weights = model.nodes(sys)
        w_d = model.doppler_factor(velocities)
        d1, d2, d3 = model.shifted_detunings(sys, fields, velocities)
        u = w_d[:, None] * delta[None, :]
        integrand = _chi3_integrand(u, sys, fields, chi, d1[:, None], d2[:, None], d3[:, None])
        return _node_sum(integrand, weights, velocities, "chi3")

    return ComplexSpectrum(
        delta_grid=grid, values=_averaged(evaluate, sys, doppler, "chi3"),
        axis="imaginary_delta" if imaginary else "real_delta", kind="chi3",
    )


def chi1(
    grid, sys: SystemParams, fields: FieldParams, doppler: DopplerModel, chi: Optional[ChiParams] = None,
    imaginary: bool = False, max_delta: float = MAX_DELTA,
) -> ComplexSpectrum:
    chi = chi or ChiParams()
    grid = _check_grid(grid, max_delta)
    delta = 1j * grid if imaginary else grid

    def evaluate(model: DopplerModel) -> np.ndarray:
        velocities, weights = model.nodes(sys)
        w_d = model.doppler_factor(velocities)
        _, _, d3 = model.shifted_detunings(sys, fields, velocities)
        u = w_d[:, None] * delta[None, :]
        d3 = d3[:, None]
        ground = u - 1j * sys.gamma21 - 1j * d3
        denominator = (u - 1j * sys.gamma41) * ground - chi.g2_factor * fields.omega3 ** 2 - fields.c2_const
        return _node_sum(chi.chi1_prefactor * ground / denominator, weights, velocities, "chi1")

    return ComplexSpectrum(
        delta_grid=grid, values=_averaged(evaluate, sys, doppler, "chi1"),
        axis="imaginary_delta" if imaginary else "real_delta", kind="chi1",
    )



EVALUATORS = {"chi1": chi1, "chi3": chi3}


@dataclass
class SpectrumRequest:
    """Everything needed to re-evaluate a spectrum on either axis."""
    kind: str
    grid: np.ndarray
    sys: SystemParams
    fields: FieldParams
    doppler: DopplerModel = field(default_factory=DopplerModel)
    chi: ChiParams = field(default_factory=ChiParams)
    max_delta: float = MAX_DELTA

    def evaluate(self, axis: SpectrumAxis = "real_delta") -> ComplexSpectrum:
        if self.kind not in EVALUATORS:
            raise InvalidParameterError(f"Unknown spectrum: {self.kind}. Choose from {list(EVALUATORS.keys())}")
        if axis not in ("real_delta", "imaginary_delta"):
            raise InvalidParameterError(f"Unknown axis: {axis}")
        evaluator = EVALUATORS[self.kind]
        return evaluator(
            self.grid, self.sys, self.fields, self.doppler, self.chi,
            imaginary=axis == "imaginary_delta", max_delta=self.max_delta,
        )


def to_imaginary_basis(request: SpectrumRequest) -> ComplexSpectrum:
    """Re-evaluate the underlying susceptibility at delta_Im = i delta."""
    logger.debug(f"Evaluating {request.kind} on the imaginary axis ({len(request.grid)} points)")
    return request.evaluate("imaginary_delta")
