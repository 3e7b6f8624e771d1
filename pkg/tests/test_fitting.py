import math

import numpy as np
import pytest

from biphoton_simulator.counting import normalize_to_g2, scale_for_contrast, simulate_histogram
from biphoton_simulator.eigensystem import eigenvalues
from biphoton_simulator.errors import InvalidParameterError, NoSignalError
from biphoton_simulator.fitting import (
    TRACE_COLUMNS,
    FitSettings,
    aicc,
    assemble_trace,
    derived_eigen,
    fit_point,
    fit_waveform,
)
from biphoton_simulator.models import CoincidenceHistogram
from biphoton_simulator.params import FieldParams
from biphoton_simulator.waveform import closed_form, tau_grid

TOL_FIT = 5e-2
TOL_MEDIAN = 3e-2
N_SEEDS = 100


def simulated_histogram(sys_params, omega3, seed):
    pair = eigenvalues(sys_params, FieldParams(omega3=omega3))
    waveform = closed_form(pair, tau_grid(20, 4001))
    background = 2e5 * 2e5
    return simulate_histogram(
        waveform, sys_params.tau_unit_ns, 2e5, 2e5, 600, seed=seed,
        pair_scale=scale_for_contrast(waveform, background, 20.0),
    )


def test_aicc():
    assert aicc(10.0, 100, 3) == pytest.approx(100 * math.log(0.1) + 6 + 24 / 96)
    assert aicc(10.0, 4, 3) == float("inf")


def test_derived_eigen():
    strong = derived_eigen("eq3", 0.6, 2.0)
    assert strong.delta_plus == complex(1.0, 0.6)
    assert strong.coupling() == "strong"
    weak = derived_eigen("eq4_canonical", 0.6, 0.4)
    assert weak.delta_minus == pytest.approx(0.4j)
    assert derived_eigen("ep_limit", 0.6).coupling() == "ep"


def test_recovers_strong_coupling(sys_params):
    hist = simulated_histogram(sys_params, 2.0, seed=101)
    result = fit_waveform(hist, sys_params.tau_unit_ns)
    assert result.model == "eq3"
    assert result.gamma_eff == pytest.approx(0.6, rel=TOL_FIT)
    assert result.splitting == pytest.approx(math.sqrt(3.36), rel=TOL_FIT)
    assert result.eigen.coupling() == "strong"
    assert {c.model for c in result.candidates} == {"eq3", "eq4_canonical", "s34_single_exp", "ep_limit"}
    assert result.best_fit.shape == hist.counts.shape


def test_recovers_weak_coupling(sys_params):
    hist = simulated_histogram(sys_params, 0.4, seed=202)
    result = fit_waveform(hist, sys_params.tau_unit_ns)
    assert result.model == "eq4_canonical"
    assert result.gamma_eff == pytest.approx(0.6, rel=TOL_FIT)
    assert result.splitting == pytest.approx(2 * math.sqrt(0.12), rel=TOL_FIT)
    assert result.eigen.coupling() == "weak"


def test_counts_and_normalized_curve_give_same_rates(sys_params):
    hist = simulated_histogram(sys_params, 2.0, seed=303)
    settings = FitSettings(models=["eq3"])
    from_counts = fit_waveform(hist, sys_params.tau_unit_ns, settings)
    curve = normalize_to_g2(hist)
    from_curve = fit_waveform(curve, sys_params.tau_unit_ns, settings)
    assert from_curve.gamma_eff == pytest.approx(from_counts.gamma_eff, rel=1e-6)
    assert from_curve.splitting == pytest.approx(from_counts.splitting, rel=1e-6)
    assert from_curve.parameters["background"].value == pytest.approx(
        from_counts.parameters["background"].value / curve.scale, rel=1e-6
    )


def test_flat_background_has_no_signal(rng):
    counts = rng.poisson(1344, 2650)
    hist = CoincidenceHistogram(
        tau_ns=0.1 + 0.2 * np.arange(counts.size), counts=counts,
        bin_width_ns=0.2, duration_s=600, background_rate=4e10,
    )
    with pytest.raises(NoSignalError):
        fit_waveform(hist, 26.5)


def test_too_few_bins(rng):
    counts = rng.poisson(100, 20)
    hist = CoincidenceHistogram(
        tau_ns=np.arange(20) + 0.5, counts=counts, bin_width_ns=1.0, duration_s=1.0, background_rate=1.0
    )
    with pytest.raises(InvalidParameterError, match="at least"):
        fit_waveform(hist, 26.5)


def test_failed_point_is_recorded(rng):
    counts = rng.poisson(1344, 2650)
    hist = CoincidenceHistogram(
        tau_ns=0.1 + 0.2 * np.arange(counts.size), counts=counts,
        bin_width_ns=0.2, duration_s=600, background_rate=4e10,
    )
    row = fit_point(0.5, hist, 26.5)
    assert row["status"].startswith("failed")
    assert math.isnan(row["gamma_eff"])


def test_trace_is_sorted_by_coupling():
    rows = [
        {"omega3": 3.0, "model": "eq3", "status": "ok"},
        {"omega3": 0.5, "model": "eq4_canonical", "status": "ok"},
        {"omega3": 0.8, "model": "ep_limit", "status": "ok"},
    ]
    frame = assemble_trace(rows)
    assert list(frame.columns) == TRACE_COLUMNS
    assert frame["omega3"].tolist() == [0.5, 0.8, 3.0]
    assert frame["model"].tolist() == ["eq4_canonical", "ep_limit", "eq3"]


def test_settings_reject_unknown_model():
    with pytest.raises(ValueError):
        FitSettings(models=["eq5"])


@pytest.mark.slow
@pytest.mark.parametrize(
    "omega3, model, splitting",
    [(2.0, "eq3", math.sqrt(3.36)), (0.4, "eq4_canonical", 2 * math.sqrt(0.12))],
)
def test_round_trip_over_seeds(sys_params, omega3, model, splitting):
    gamma_errors, splitting_errors, chosen = [], [], []
    for seed in range(N_SEEDS):
        result = fit_waveform(simulated_histogram(sys_params, omega3, seed), sys_params.tau_unit_ns)
        chosen.append(result.model)
        gamma_errors.append(abs(result.gamma_eff / 0.6 - 1))
        splitting_errors.append(abs(result.splitting / splitting - 1))
    assert np.median(gamma_errors) < TOL_MEDIAN
    assert np.median(splitting_errors) < TOL_MEDIAN
    assert chosen.count(model) >= 0.95 * N_SEEDS


@pytest.mark.slow
def test_selects_ep_limit_at_the_exceptional_point(sys_params):
    chosen = [
        fit_waveform(simulated_histogram(sys_params, 0.8, seed), sys_params.tau_unit_ns).model
        for seed in range(20)
    ]
    assert chosen.count("ep_limit") >= 15
