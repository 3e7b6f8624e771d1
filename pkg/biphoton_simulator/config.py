# --- config.py ---
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings

from .counting import DETECTOR_EFFICIENCY, FIBER_EFFICIENCY
from .errors import ConfigError
from .fitting import FitSettings
from .io_handler import IOHandler
from .params import DopplerModel, FieldParams, RabiCalibration, SystemParams, power_to_rabi
from .susceptibility import MAX_DELTA, ChiParams

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    # Output
    OUTPUT_DIR: str = "output"

    # Logging and progress
    LOG_LEVEL: str = "INFO"
    SHOW_PROGRESS: bool = True

    # Concurrency
    MAX_CONCURRENT: int = 4

    class Config:
        env_file = ".env"
        env_prefix = "BIPHOTON_"
        extra = "ignore"


@lru_cache()
def get_settings():
    return Settings()


# ============== Config sections ==============

class NumericsSection(BaseModel):
    """Grids, tolerances and waveform options shared by the subcommands."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    delta_min: float = -20.0
    delta_max: float = 20.0
    n_delta: int = Field(default=4001, ge=2)
    transform_span: float = Field(default=40.0, gt=0, description="Half width of the FFT offset grid")
    transform_points: int = Field(default=16384, ge=16)
    tau_max: float = Field(default=20.0, gt=0, description="Longest delay in 1/Gamma41")
    n_tau: int = Field(default=4001, ge=2)
    ep_tolerance: float = Field(default=1e-6, gt=0)
    taper: float = Field(default=0.1, ge=0, le=1)
    leakage_threshold: float = Field(default=0.01, gt=0)
    bypass_phi: bool = Field(default=True, description="Treat the longitudinal detuning function as 1")
    causal_phi: bool = True
    max_delta: float = Field(default=MAX_DELTA, gt=0)
    w1: float = Field(default=1.0, gt=0)
    w_d: float = Field(default=1.0, gt=0)
    regime_bandwidth: Literal["approx", "exact"] = Field(
        default="approx", description="Phase-matching bandwidth compared against the eigenvalues by the regime label"
    )


class CountingSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    bin_width_ns: float = Field(default=0.2, gt=0)
    duration_s: float = Field(default=600.0, gt=0)
    rate_s: float = Field(default=2e5, ge=0, description="Stokes singles rate in 1/s")
    rate_as: float = Field(default=2e5, ge=0, description="Anti-Stokes singles rate in 1/s")
    fiber_efficiency: float = Field(default=FIBER_EFFICIENCY, gt=0, le=1)
    detector_efficiency: float = Field(default=DETECTOR_EFFICIENCY, gt=0, le=1)
    peak_to_background: float = Field(default=20.0, gt=1)
    g_ss0: float = Field(default=1.6, gt=0)
    g_ss0_err: float = Field(default=0.2, ge=0)
    g_asas0: float = Field(default=2.0, gt=0)
    g_asas0_err: float = Field(default=0.0, ge=0)
    window_fraction: float = Field(default=0.2, gt=0, le=1)
    subsamples: int = Field(default=8, ge=1)
    calibration: RabiCalibration = Field(default_factory=RabiCalibration)

    @property
    def efficiency(self) -> float:
        return self.fiber_efficiency * self.detector_efficiency


class SimulationConfig(BaseModel):
    """Fully resolved configuration: file, then preset, then overrides."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    atom: SystemParams = Field(default_factory=SystemParams)
    fields: FieldParams = Field(default_factory=FieldParams)
    doppler: DopplerModel = Field(default_factory=DopplerModel)
    chi: ChiParams = Field(default_factory=ChiParams)
    numerics: NumericsSection = Field(default_factory=NumericsSection)
    counting: CountingSection = Field(default_factory=CountingSection)
    fitting: FitSettings = Field(default_factory=FitSettings)


SECTIONS: Tuple[str, ...] = tuple(SimulationConfig.model_fields.keys())


@dataclass
class RunConfig:
    """One CLI invocation."""
    config_path: Optional[str]
    subcommand: str
    output_dir: str
    overrides: List[str] = field(default_factory=list)
    seed: Optional[int] = None
    preset: Optional[str] = None


# ============== Presets ==============

class PresetRegistry:
    """Named parameter points, returned as section.key overrides."""

    POWERS_MW: Dict[str, float] = {"A": 15.0, "B": 1.0, "C": 0.25, "D": 3.0, "E": 0.6, "F": 0.4}
    PATHWAY: Tuple[str, ...] = ("A", "D", "B", "E", "C", "F")

    @classmethod
    def get_config(cls, name: str, calibration: Optional[RabiCalibration] = None) -> Dict[str, Any]:
        """Get overrides by preset name."""
        configs: Dict[str, Dict[str, Any]] = {
            letter: {"fields.omega3": power_to_rabi(power, calibration), "fields.delta3": 0.0}
            for letter, power in cls.POWERS_MW.items()
        }
        configs.update({
            "double_resonance": {"fields.omega3": 10.0, "fields.delta3": 0.0},
            "exceptional_point": {"fields.omega3": 0.8, "fields.delta3": 0.0},
            "double_absorptive": {"fields.omega3": 0.4, "fields.delta3": 0.0},
            "detuning_scan": {"fields.omega3": 0.7},
            "triple_channel": {
                "fields.omega3": 10.0,
                "fields.omega2": 30.0,
                "fields.delta3": 0.0,
                "chi.double_dressing": True,
            },
        })
        if name not in configs:
            raise ConfigError(f"Unknown preset: {name}. Choose from {list(configs.keys())}")
        return configs[name]

    @classmethod
    def pathway(cls, calibration: Optional[RabiCalibration] = None) -> List[Tuple[str, float]]:
        """(label, Omega3) along the strong-to-weak series."""
        return [(label, power_to_rabi(cls.POWERS_MW[label], calibration)) for label in cls.PATHWAY]


# ============== Loading ==============

def _section_fields(section: str) -> Dict[str, Any]:
    return SimulationConfig.model_fields[section].annotation.model_fields


def _resolve_key(key: str) -> Tuple[str, List[str]]:
    """Split an override key into its section and the nested path inside it."""
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError("Empty config key")
    if parts[0] in SECTIONS and len(parts) > 1:
        section, path = parts[0], parts[1:]
    else:
        owners = [s for s in SECTIONS if parts[0] in _section_fields(s)]
        if not owners:
            raise ConfigError(f"Unknown config key: {key}")
        if len(owners) > 1:
            raise ConfigError(f"Ambiguous config key: {key} is declared by {owners}; use section.key")
        section, path = owners[0], parts
    if path[0] not in _section_fields(section):
        raise ConfigError(f"Unknown config key: {section}.{path[0]}")
    return section, path


def _assign(merged: Dict[str, Dict[str, Any]], key: str, value: Any) -> None:
    section, path = _resolve_key(key)
    target = merged[section]
    for part in path[:-1]:
        nested = target.get(part)
        if not isinstance(nested, dict):
            nested = {}
            target[part] = nested
        target = nested
    target[path[-1]] = value


def parse_override(item: str) -> Tuple[str, Any]:
    """'key=value' with the value read by YAML scalar rules."""
    if "=" not in item:
        raise ConfigError(f"Override '{item}' is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse value of {key}: {e}") from e
    return key.strip(), value


def load_config(
    config_path: Optional[str] = None,
    preset: Optional[str] = None,
    overrides: Sequence[str] = (),
) -> SimulationConfig:
    try:
        data = IOHandler.load_yaml(config_path) if config_path else {}
    except (yaml.YAMLError, ValueError) as e:
        raise ConfigError(f"Cannot read config file {config_path}: {e}") from e

    unknown = [s for s in data if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"Unknown config section: {unknown[0]}. Choose from {list(SECTIONS)}")
    merged: Dict[str, Dict[str, Any]] = {}
    for section in SECTIONS:
        content = data.get(section) or {}
        if not isinstance(content, dict):
            raise ConfigError(f"Config section {section} must be a mapping")
        merged[section] = dict(content)

    if preset:
        try:
            calibration = RabiCalibration(**(merged["counting"].get("calibration") or {}))
        except (TypeError, ValidationError) as e:
            raise ConfigError(f"Invalid counting.calibration: {e}") from e
        for key, value in PresetRegistry.get_config(preset, calibration).items():
            _assign(merged, key, value)
        logger.info(f"Applied preset {preset}")
    for item in overrides:
        key, value = parse_override(item)
        _assign(merged, key, value)

    try:
        return SimulationConfig(**merged)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"Invalid config value at {location}: {first['msg']}") from e
