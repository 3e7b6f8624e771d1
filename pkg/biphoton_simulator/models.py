# --- models.py ---
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BeforeValidator, PlainSerializer


def _coerce_complex(value: Any) -> complex:
    if isinstance(value, complex):
        return value
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ValueError(f"Cannot interpret {value!r} as a complex number")


# pydantic 2.5 has no native complex schema; models using this set arbitrary_types_allowed
ComplexValue = Annotated[
    complex,
    BeforeValidator(_coerce_complex),
    PlainSerializer(lambda z: str(z), return_type=str, when_used="json"),
]

SpectrumAxis = Literal["real_delta", "imaginary_delta"]
WaveformMethod = Literal[
    "numeric_transform", "eq3", "eq4", "s34_group_delay", "ep_limit", "two_pole", "imaginary_basis"
]


class Regime(str, Enum):
    R1 = "R1_rabi_oscillation"
    R2 = "R2_group_delay"
    R3 = "R3_antibunching_decay"
    EP = "EP"


class ShapeClass(str, Enum):
    OSCILLATORY = "oscillatory"
    OSCILLATORY_OFFSET = "oscillatory_offset"
    SINGLE_EXPONENTIAL = "single_exponential"
    EP = "ep"
    ANTIBUNCHING = "antibunching"


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """2x2 non-Hermitian coupling matrix in units of Gamma41."""
    h11: complex
    h12: complex
    h21: complex
    h22: complex

    def matrix(self) -> np.ndarray:
        return np.array([[self.h11, self.h12], [self.h21, self.h22]], dtype=complex)


@dataclass(frozen=True)
class EigenPair:
    delta_plus: complex
    delta_minus: complex
    omega_e: complex
    gamma_eff: float
    gamma_e_plus: Optional[float] = None
    gamma_e_minus: Optional[float] = None

    def coupling(self, ep_tolerance: float = 1e-6) -> Literal["ep", "strong", "weak", "mixed"]:
        """Coupling character of the pair: real splitting is strong, imaginary is weak."""
        magnitude = abs(self.omega_e)
        if magnitude < ep_tolerance:
            return "ep"
        scale = 1e-12 * max(1.0, magnitude)
        if abs(self.omega_e.imag) <= scale:
            return "strong"
        if abs(self.omega_e.real) <= scale:
            return "weak"
        return "mixed"

    def to_dict(self) -> Dict[str, float]:
        return {
            "re_dplus": self.delta_plus.real,
            "im_dplus": self.delta_plus.imag,
            "re_dminus": self.delta_minus.real,
            "im_dminus": self.delta_minus.imag,
        }


@dataclass(frozen=True)
class RegimeLabel:
    regime: Regime
    omega_e_abs: float
    gamma_eff: float
    bandwidth: float
    two_gamma_diff: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "regime": self.regime.value,
            "omega_e_abs": self.omega_e_abs,
            "gamma_eff": self.gamma_eff,
            "bandwidth": self.bandwidth,
            "two_gamma_diff": self.two_gamma_diff,
        }


@dataclass(frozen=True)
class EigenSweep:
    """Eigenvalue surfaces; rows follow delta3, columns follow omega3."""
    omega3: np.ndarray
    delta3: np.ndarray
    delta_plus: np.ndarray
    delta_minus: np.ndarray
    # coupling of the delta3 = 0 coalescence; branches are cut along delta3 = 0 beyond it
    omega3_ep: Optional[float] = None

    def to_frame(self) -> pd.DataFrame:
        o3, d3 = np.meshgrid(self.omega3, self.delta3)
        return pd.DataFrame({
            "omega3": o3.ravel(),
            "delta3": d3.ravel(),
            "re_dplus": self.delta_plus.real.ravel(),
            "im_dplus": self.delta_plus.imag.ravel(),
            "re_dminus": self.delta_minus.real.ravel(),
            "im_dminus": self.delta_minus.imag.ravel(),
        })


@dataclass(frozen=True)
class ComplexSpectrum:
    delta_grid: np.ndarray
    values: np.ndarray
    axis: SpectrumAxis = "real_delta"
    kind: str = ""

    def to_frame(self) -> pd.DataFrame:
        first = "delta" if self.axis == "real_delta" else "delta_im"
        return pd.DataFrame({first: self.delta_grid, "re": self.values.real, "im": self.values.imag})


@dataclass(frozen=True)
class BandwidthReport:
    exact: Optional[float]
    approx: float

    @property
    def ratio(self) -> Optional[float]:
        if self.exact is None:
            return None
        return self.approx / self.exact


@dataclass(frozen=True)
class CorrelationWaveform:
    """G2 samples on a tau grid in units of 1/Gamma41."""
    tau: np.ndarray
    g2: np.ndarray
    method: WaveformMethod
    meta: Dict[str, Any] = field(default_factory=dict)

    def to_frame(self, tau_unit_ns: float) -> pd.DataFrame:
        return pd.DataFrame({"tau_ns": self.tau * tau_unit_ns, "g2": self.g2})


@dataclass(frozen=True)
class RateCurve:
    tau: np.ndarray
    rate: np.ndarray
    background: float


@dataclass(frozen=True)
class KappaSpectrum:
    delta_grid: np.ndarray
    values: np.ndarray
    kappa0: complex


@dataclass(frozen=True)
class Channel:
    signal_offset: float
    anti_stokes_offset: float
    linewidth: float
    coefficient: float


@dataclass(frozen=True)
class ChannelState:
    channels: List[Channel]

    @property
    def dimension(self) -> int:
        return len(self.channels)

    @property
    def norm(self) -> float:
        return float(sum(abs(c.coefficient) ** 2 for c in self.channels))


@dataclass(frozen=True)
class CoincidenceHistogram:
    tau_ns: np.ndarray
    counts: np.ndarray
    bin_width_ns: float
    duration_s: float
    background_rate: float
    seed: Optional[int] = None
    expected: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"tau_ns": self.tau_ns, "counts": self.counts})


@dataclass(frozen=True)
class NormalizedCurve:
    """Histogram divided by its flat-background mean; scale keeps the count weights."""
    tau_ns: np.ndarray
    g2: np.ndarray
    errors: np.ndarray
    scale: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"tau_ns": self.tau_ns, "g2": self.g2, "err": self.errors})


@dataclass(frozen=True)
class CsrReport:
    g2_cross_peak: float
    g2_ss0: float
    g2_asas0: float
    r2: float
    uncertainty: float

    @property
    def violated(self) -> bool:
        return self.r2 > 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "g2_cross_peak": self.g2_cross_peak,
            "g2_ss0": self.g2_ss0,
            "g2_asas0": self.g2_asas0,
            "r2": self.r2,
            "r2_err": self.uncertainty,
            "violated": self.violated,
        }


@dataclass(frozen=True)
class FitParameter:
    value: float
    stderr: Optional[float]


@dataclass(frozen=True)
class CandidateScore:
    model: str
    chisqr: float
    aicc: float
    n_params: int
    delta_aicc: float = 0.0


@dataclass(frozen=True)
class FitResult:
    model: str
    parameters: Dict[str, FitParameter]
    chisqr: float
    redchi: float
    aicc: float
    eigen: EigenPair
    candidates: List[CandidateScore]
    ambiguous: bool
    tau: np.ndarray
    best_fit: np.ndarray

    @property
    def gamma_eff(self) -> float:
        return self.parameters["gamma_eff"].value

    @property
    def splitting(self) -> float:
        param = self.parameters.get("splitting")
        return param.value if param is not None else 0.0

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"model": self.model, "ambiguous": self.ambiguous}
        for name, param in self.parameters.items():
            out[name] = param.value
            out[f"{name}_err"] = param.stderr if param.stderr is not None else float("nan")
        out.update({"chisqr": self.chisqr, "redchi": self.redchi, "aicc": self.aicc})
        out.update(self.eigen.to_dict())
        return out
