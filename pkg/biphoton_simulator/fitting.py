# --- fitting.py ---
"""
Eigenvalue extraction from coincidence histograms.

Each closed-form model is fitted in three stages: a grid screen over the
nonlinear parameters with the amplitude and background solved linearly, a
Nelder-Mead refinement of the best starts, and a Levenberg-Marquardt polish
over every parameter for the uncertainties. Models are ranked by AICc.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from lmfit import Minimizer, Parameters
from pydantic import BaseModel, ConfigDict, Field

from .eigensystem import make_pair
from .errors import BiphotonError, FitFailureError, InvalidParameterError, NoSignalError
from .models import CandidateScore, CoincidenceHistogram, EigenPair, FitParameter, FitResult, NormalizedCurve
from .waveform import eq3_profile, eq4_profile

logger = logging.getLogger(__name__)

ModelName = Literal["eq3", "eq4_canonical", "s34_single_exp", "ep_limit"]
MODEL_ORDER: Tuple[str, ...] = ("eq3", "eq4_canonical", "s34_single_exp", "ep_limit")

GAMMA_GRID = np.logspace(math.log10(0.05), math.log10(5.0), 12)
SPLITTING_GRID = np.logspace(math.log10(0.05), math.log10(20.0), 24)
FRAC_GRID = np.linspace(0.0, 0.95, 12)
GAMMA_BOUNDS = (1e-3, 50.0)


class FitSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    models: List[ModelName] = Field(default_factory=lambda: list(MODEL_ORDER))
    aicc_threshold: float = Field(default=2.0, ge=0, description="AICc margin below which selection is ambiguous")
    n_starts: int = Field(default=3, ge=1)
    max_restarts: int = Field(default=3, ge=0)
    mask_onset_bins: int = Field(default=0, ge=0, description="Bins after the onset excluded from the fit")
    min_bins: int = Field(default=50, ge=10)
    simplex_tolerance: float = Field(default=1e-8, gt=0)
    tolerance: float = Field(default=1e-10, gt=0, description="xtol and ftol of the least-squares polish")
    max_nfev: int = Field(default=20000, ge=100)


# ============== Model shapes ==============

def _eq3_basis(tau, p):
    return eq3_profile(tau - p["t0"], 1.0, p["gamma_eff"], p["splitting"])


def _eq4_basis(tau, p):
    return eq4_profile(tau - p["t0"], 1.0, p["gamma_eff"], 2 * p["gamma_eff"] * p["frac"])


def _single_exp_basis(tau, p):
    dt = tau - p["t0"]
    return np.where(dt >= 0, np.exp(-2 * p["gamma_eff"] * np.maximum(dt, 0.0)), 0.0)


def _ep_basis(tau, p):
    dt = np.maximum(tau - p["t0"], 0.0)
    return np.where(tau >= p["t0"], dt ** 2 * np.exp(-2 * p["gamma_eff"] * dt), 0.0)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    basis: Callable[[np.ndarray, Dict[str, float]], np.ndarray]
    shape_grid: Dict[str, np.ndarray]
    smooth_onset: bool

    @property
    def n_params(self) -> int:
        # shape parameters + t0 + amplitude + background
        return len(self.shape_grid) + 3


MODELS: Dict[str, ModelSpec] = {
    "eq3": ModelSpec("eq3", _eq3_basis, {"gamma_eff": GAMMA_GRID, "splitting": SPLITTING_GRID}, True),
    "eq4_canonical": ModelSpec("eq4_canonical", _eq4_basis, {"gamma_eff": GAMMA_GRID, "frac": FRAC_GRID}, True),
    "s34_single_exp": ModelSpec("s34_single_exp", _single_exp_basis, {"gamma_eff": GAMMA_GRID}, False),
    "ep_limit": ModelSpec("ep_limit", _ep_basis, {"gamma_eff": GAMMA_GRID}, True),
}


def aicc(chisqr: float, n: int, k: int) -> float:
    """Small-sample corrected Akaike information criterion."""
    if n - k - 1 <= 0:
        return float("inf")
    return n * math.log(max(chisqr, 1e-300) / n) + 2 * k + 2 * k * (k + 1) / (n - k - 1)


# ============== Data preparation ==============

@dataclass
class _FitData:
    tau_ns: np.ndarray
    tau: np.ndarray
    counts: np.ndarray
    weights: np.ndarray
    scale: float
    bin_width: float
    t0_candidates: np.ndarray
    t_peak: float


def _as_counts(data: Union[CoincidenceHistogram, NormalizedCurve]) -> Tuple[np.ndarray, np.ndarray, float]:
    if isinstance(data, CoincidenceHistogram):
        return np.asarray(data.tau_ns, dtype=float), np.asarray(data.counts, dtype=float), 1.0
    counts = np.asarray(data.g2, dtype=float) * data.scale
    rounded = np.round(counts)
    if np.allclose(counts, rounded, rtol=0, atol=1e-6):
        counts = rounded
    return np.asarray(data.tau_ns, dtype=float), counts, float(data.scale)


def _smooth(counts: np.ndarray, width: int = 5) -> np.ndarray:
    return np.convolve(counts, np.ones(width) / width, mode="same")


def prepare(data, tau_unit_ns: float, settings: FitSettings) -> _FitData:
    tau_ns, counts, scale = _as_counts(data)
    if counts.size < settings.min_bins:
        raise InvalidParameterError(f"Fitting needs at least {settings.min_bins} bins, got {counts.size}")

    tail = counts[counts.size - max(1, counts.size // 5):]
    background = float(np.mean(tail))
    smoothed = _smooth(counts)
    peak_idx = int(np.argmax(smoothed))
    signal = float(smoothed[peak_idx]) - background
    if signal < 5 * math.sqrt(max(background, 1.0) / 5):
        raise NoSignalError(f"No correlation peak above the background ({signal:.3g} counts over {background:.3g})")

    tau = tau_ns / tau_unit_ns
    bin_width = float(np.median(np.diff(tau)))
    first_edge = float(tau[0] - bin_width / 2)
    crossing = int(np.argmax(smoothed > background + 0.1 * signal))
    t_cross = max(float(tau[crossing]), first_edge + bin_width)
    t0_candidates = np.unique(first_edge + np.arange(4) * (t_cross - first_edge) / 4)

    weights = 1.0 / np.sqrt(np.maximum(counts, 1.0))
    if settings.mask_onset_bins:
        weights = weights.copy()
        weights[crossing:crossing + settings.mask_onset_bins] = 0.0
    return _FitData(
        tau_ns=tau_ns, tau=tau, counts=counts, weights=weights, scale=scale, bin_width=bin_width,
        t0_candidates=t0_candidates, t_peak=float(tau[peak_idx]),
    )


# ============== Objective ==============

def _project(basis: np.ndarray, data: _FitData) -> Tuple[np.ndarray, np.ndarray]:
    """Weighted linear solve for (amplitude, background); returns coefficients and residual."""
    design = np.column_stack([basis, np.ones_like(basis)]) * data.weights[:, None]
    target = data.counts * data.weights
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return coef, target - design @ coef


def _shape_values(params: Parameters) -> Dict[str, float]:
    return {name: float(par.value) for name, par in params.items()}


def _projected_residual(params: Parameters, spec: ModelSpec, data: _FitData) -> np.ndarray:
    basis = spec.basis(data.tau, _shape_values(params))
    if not np.all(np.isfinite(basis)):
        return np.full_like(data.counts, 1e100)
    _, residual = _project(basis, data)
    return residual


def _full_residual(params: Parameters, spec: ModelSpec, data: _FitData) -> np.ndarray:
    values = _shape_values(params)
    model = values["w1"] * spec.basis(data.tau, values) + values["background"]
    return (data.counts - model) * data.weights


def _screen(spec: ModelSpec, data: _FitData) -> List[Tuple[float, Dict[str, float]]]:
    names = list(spec.shape_grid)
    scored = []
    for combo in itertools.product(*(spec.shape_grid[n] for n in names), data.t0_candidates):
        point = dict(zip(names + ["t0"], (float(v) for v in combo)))
        basis = spec.basis(data.tau, point)
        if not np.all(np.isfinite(basis)) or not np.any(basis):
            continue
        _, residual = _project(basis, data)
        scored.append((float(residual @ residual), point))
    scored.sort(key=lambda item: item[0])
    return scored


def _shape_params(spec: ModelSpec, start: Dict[str, float], data: _FitData) -> Parameters:
    params = Parameters()
    params.add("gamma_eff", value=start["gamma_eff"], min=GAMMA_BOUNDS[0], max=GAMMA_BOUNDS[1])
    if "splitting" in spec.shape_grid:
        params.add("splitting", value=start["splitting"], min=0.0, max=100.0)
    if "frac" in spec.shape_grid:
        params.add("frac", value=min(start["frac"], 0.99), min=0.0, max=0.999)
    low = data.tau[0] - 5 * data.bin_width
    high = max(data.t_peak, low + data.bin_width)
    params.add("t0", value=float(np.clip(start["t0"], low, high)), min=low, max=high)
    return params


# ============== Single model ==============

@dataclass
class _Candidate:
    model: str
    parameters: Dict[str, FitParameter]
    chisqr: float
    n_used: int
    n_params: int
    best_fit: np.ndarray

    @property
    def aicc(self) -> float:
        return aicc(self.chisqr, self.n_used, self.n_params)


def _refine(spec: ModelSpec, data: _FitData, starts, settings: FitSettings):
    best = None
    for _, start in starts:
        minner = Minimizer(
            _projected_residual, _shape_params(spec, start, data), fcn_args=(spec, data),
            max_nfev=settings.max_nfev,
        )
        try:
            result = minner.minimize(method="nelder", tol=settings.simplex_tolerance)
        except (ValueError, FloatingPointError) as e:
            logger.debug(f"{spec.name}: simplex start {start} failed: {e}")
            continue
        if np.isfinite(result.chisqr) and (best is None or result.chisqr < best.chisqr):
            best = result
    return best


def _polish(spec: ModelSpec, data: _FitData, shape: Parameters, settings: FitSettings):
    basis = spec.basis(data.tau, _shape_values(shape))
    coef, residual = _project(basis, data)
    params = Parameters()
    for name, par in shape.items():
        params.add(name, value=par.value, min=par.min, max=par.max)
    params["t0"].vary = spec.smooth_onset
    params.add("w1", value=float(coef[0]))
    params.add("background", value=float(coef[1]))
    if "frac" in params:
        params.add("splitting", expr="2*gamma_eff*frac")
    simplex_chisqr = float(residual @ residual)

    try:
        result = Minimizer(_full_residual, params, fcn_args=(spec, data)).minimize(
            method="leastsq", xtol=settings.tolerance, ftol=settings.tolerance
        )
    except (ValueError, FloatingPointError) as e:
        logger.warning(f"{spec.name}: least-squares polish failed ({e}); keeping simplex estimate")
        return params, simplex_chisqr, False
    if not np.isfinite(result.chisqr) or result.chisqr > simplex_chisqr * (1 + 1e-9):
        logger.warning(f"{spec.name}: polish did not improve the simplex fit; uncertainties unavailable")
        return params, simplex_chisqr, False
    return result.params, float(result.chisqr), True


def fit_model(spec: ModelSpec, data: _FitData, settings: FitSettings) -> _Candidate:
    scored = _screen(spec, data)
    if not scored:
        raise FitFailureError(f"{spec.name}: no finite starting point on the screening grid")

    refined = None
    for attempt in range(settings.max_restarts + 1):
        lo = attempt * settings.n_starts
        batch = scored[lo:lo + settings.n_starts]
        if not batch:
            break
        refined = _refine(spec, data, batch, settings)
        if refined is not None:
            break
    if refined is None:
        raise FitFailureError(f"{spec.name}: simplex refinement did not converge", best_so_far=scored[0][1])

    params, chisqr, polished = _polish(spec, data, refined.params, settings)
    parameters: Dict[str, FitParameter] = {}
    for name in ("w1", "gamma_eff", "splitting", "t0", "background"):
        if name not in params:
            continue
        par = params[name]
        value, stderr = float(par.value), par.stderr
        varied = par.vary or bool(par.expr)
        if varied and (stderr is None or not np.isfinite(stderr)):
            if polished:
                logger.warning(f"{spec.name}: no uncertainty estimate for {name}")
            stderr = float("nan")
        if name in ("w1", "background"):
            value /= data.scale
            stderr = stderr / data.scale if stderr is not None else None
        parameters[name] = FitParameter(value=value, stderr=None if stderr is None else float(stderr))

    values = _shape_values(params)
    best_fit = (values["w1"] * spec.basis(data.tau, values) + values["background"]) / data.scale
    n_used = int(np.count_nonzero(data.weights))
    return _Candidate(
        model=spec.name, parameters=parameters, chisqr=chisqr, n_used=n_used,
        n_params=spec.n_params, best_fit=best_fit,
    )


def derived_eigen(model: str, gamma_eff: float, splitting: float = 0.0) -> EigenPair:
    if model == "eq3":
        return make_pair(complex(splitting / 2, gamma_eff), complex(-splitting / 2, gamma_eff), gamma_eff)
    if model == "eq4_canonical":
        return make_pair(complex(0.0, gamma_eff + splitting / 2), complex(0.0, gamma_eff - splitting / 2), gamma_eff)
    return make_pair(complex(0.0, gamma_eff), complex(0.0, gamma_eff), gamma_eff)


# ============== Public API ==============

def fit_waveform(
    data: Union[CoincidenceHistogram, NormalizedCurve],
    tau_unit_ns: float,
    settings: Optional[FitSettings] = None,
) -> FitResult:
    """Fit every configured model and return the AICc-preferred one."""
    settings = settings or FitSettings()
    prepared = prepare(data, tau_unit_ns, settings)

    candidates: List[_Candidate] = []
    failures = []
    for name in settings.models:
        try:
            candidates.append(fit_model(MODELS[name], prepared, settings))
        except FitFailureError as e:
            logger.warning(f"Model {name} failed: {e}")
            failures.append(e)
    if not candidates:
        raise FitFailureError(
            "Every model failed to fit", best_so_far=failures[0].best_so_far if failures else None
        )

    best_score = min(c.aicc for c in candidates)
    within = [c for c in candidates if c.aicc - best_score < settings.aicc_threshold]
    chosen = min(within, key=lambda c: (c.n_params, c.aicc))
    ambiguous = len(within) > 1
    if ambiguous:
        names = [c.model for c in within]
        logger.warning(f"Ambiguous model selection among {names}; returning simplest ({chosen.model})")

    gamma = chosen.parameters["gamma_eff"].value
    splitting = chosen.parameters["splitting"].value if "splitting" in chosen.parameters else 0.0
    span = (prepared.tau[-1] - chosen.parameters["t0"].value) * 2 * gamma
    if span < 3:
        logger.warning(f"tau range covers only {span:.2f} decay times")

    n_used, k = chosen.n_used, chosen.n_params
    scores = [
        CandidateScore(model=c.model, chisqr=c.chisqr, aicc=c.aicc, n_params=c.n_params,
                       delta_aicc=c.aicc - best_score)
        for c in candidates
    ]
    logger.info(f"Selected {chosen.model}: Gamma_eff={gamma:.5g}, splitting={splitting:.5g}")
    return FitResult(
        model=chosen.model,
        parameters=chosen.parameters,
        chisqr=chosen.chisqr,
        redchi=chosen.chisqr / max(n_used - k, 1),
        aicc=chosen.aicc,
        eigen=derived_eigen(chosen.model, gamma, splitting),
        candidates=scores,
        ambiguous=ambiguous,
        tau=prepared.tau_ns,
        best_fit=chosen.best_fit,
    )


TRACE_COLUMNS = [
    "omega3", "model", "gamma_eff", "splitting", "re_dplus", "im_dplus", "re_dminus", "im_dminus",
    "ambiguous", "status",
]


def fit_point(omega3: float, data, tau_unit_ns: float, settings: Optional[FitSettings] = None) -> Dict:
    """One row of a transition trace; failures are recorded, not raised."""
    try:
        result = fit_waveform(data, tau_unit_ns, settings)
    except BiphotonError as e:
        logger.warning(f"Fit at Omega3={omega3:.4g} failed: {e}")
        row = {name: float("nan") for name in TRACE_COLUMNS}
        row.update({"omega3": omega3, "model": "", "ambiguous": False, "status": f"failed: {e}"})
        return row
    row = {"omega3": omega3, "model": result.model, "gamma_eff": result.gamma_eff,
           "splitting": result.splitting, "ambiguous": result.ambiguous, "status": "ok"}
    row.update(result.eigen.to_dict())
    return row


def assemble_trace(rows: Sequence[Dict]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=TRACE_COLUMNS)
    return frame.sort_values("omega3", kind="mergesort").reset_index(drop=True)


def trace_transition(
    points: Sequence[Tuple[float, Union[CoincidenceHistogram, NormalizedCurve]]],
    tau_unit_ns: float,
    settings: Optional[FitSettings] = None,
) -> pd.DataFrame:
    """Fitted eigenvalue pairs along a coupling series, sorted by Omega3."""
    if not points:
        raise InvalidParameterError("trace_transition needs at least one histogram")
    return assemble_trace([fit_point(o3, data, tau_unit_ns, settings) for o3, data in points])
