import numpy as np
import pytest
from scipy.signal import find_peaks, peak_widths

from biphoton_simulator.eigensystem import double_dressing_channels, eigenvalues
from biphoton_simulator.errors import InvalidParameterError
from biphoton_simulator.params import DopplerModel, FieldParams
from biphoton_simulator.susceptibility import (
    ChiParams,
    SpectrumRequest,
    chi1,
    chi3,
    d_eit,
    d_eit_cleared,
    to_imaginary_basis,
)

TOL = 1e-12
TOL_DOPPLER = 1e-4
TOL_QUADRATURE = 1e-8
TOL_WIDTH = 0.05


def assert_allclose(a, b, tol=TOL):
    np.testing.assert_allclose(a, b, rtol=0, atol=tol)


def test_cleared_numerator_vanishes_at_eigenvalues(sys_params):
    fields = FieldParams(omega3=2.0, delta3=0.3)
    pair = eigenvalues(sys_params, fields)
    num, _ = d_eit_cleared(np.array([pair.delta_plus, pair.delta_minus]), sys_params, fields)
    assert_allclose(num, 0, tol=1e-12)


def test_d_eit_stays_finite_at_pole(sys_params):
    fields = FieldParams(omega3=1.0)
    value = d_eit(1j * sys_params.gamma41, sys_params, fields)
    # cleared product d_EIT * den at den = 0 is the coupling term
    assert_allclose(value, 0.25)
    values = d_eit(np.array([0.0, 1j, 2.0]), sys_params, fields)
    assert np.all(np.isfinite(values))
    assert_allclose(values[0], 0.45)



def test_chi1_without_coupling_is_lorentzian(sys_params, doppler_off):
    grid = np.linspace(-5, 5, 101)
    spectrum = chi1(grid, sys_params, FieldParams(omega3=0.0), doppler_off)
    assert_allclose(spectrum.values, -1 / (grid - 1j))


def test_coupling_opens_transparency_window(sys_params, doppler_off):
    bare = chi1([0.0], sys_params, FieldParams(omega3=0.0), doppler_off).values[0]
    dressed = chi1([0.0], sys_params, FieldParams(omega3=0.8), doppler_off).values[0]
    assert_allclose(dressed / bare, 5 / 9)


def test_strong_coupling_gives_two_peaks(sys_params, doppler_off):
    grid = np.linspace(-20, 20, 4001)
    spectrum = chi3(grid, sys_params, FieldParams(omega3=10.0), doppler_off)
    peaks, _ = find_peaks(np.abs(spectrum.values))
    assert len(peaks) == 2
    np.testing.assert_allclose(np.sort(grid[peaks]), [-np.sqrt(24.48), np.sqrt(24.48)], atol=0.02)


def test_weak_coupling_two_linewidths_on_imaginary_axis(sys_params, doppler_off):
    fields = FieldParams(omega3=0.4)
    grid = np.linspace(-1, 1, 2001)
    real_peaks, _ = find_peaks(np.abs(chi3(grid, sys_params, fields, doppler_off).values))
    assert len(real_peaks) == 1

    request = SpectrumRequest(
        kind="chi3", grid=np.linspace(0.013, 2.013, 401), sys=sys_params, fields=fields, doppler=doppler_off
    )
    spectrum = to_imaginary_basis(request)
    assert spectrum.axis == "imaginary_delta"
    peaks, _ = find_peaks(np.abs(spectrum.values))
    np.testing.assert_allclose(request.grid[peaks], [0.6 - np.sqrt(0.12), 0.6 + np.sqrt(0.12)], atol=0.005)


def test_double_dressing_gives_three_channels(sys_params, doppler_off):
    fields = FieldParams(omega3=10.0, omega2=30.0)
    grid = np.linspace(-40, 40, 8001)
    spectrum = chi3(grid, sys_params, fields, doppler_off, ChiParams(double_dressing=True))
    peaks, _ = find_peaks(np.abs(spectrum.values))
    assert len(peaks) == 3
    channels = [c.real for c in double_dressing_channels(sys_params, fields)]
    np.testing.assert_allclose(grid[peaks], channels, atol=0.2)


def test_doppler_average_is_close_to_stationary_atoms(sys_params, doppler_off):
    grid = np.linspace(-3, 3, 61)
    fields = FieldParams(omega3=2.0)
    moving = chi3(grid, sys_params, fields, DopplerModel(n_nodes=16))
    still = chi3(grid, sys_params, fields, doppler_off)
    np.testing.assert_allclose(moving.values, still.values, rtol=TOL_DOPPLER)


def test_prefactor_scales_linearly(sys_params, fields, doppler_off):
    grid = np.linspace(-2, 2, 21)
    base = chi3(grid, sys_params, fields, doppler_off)
    scaled = chi3(grid, sys_params, fields, doppler_off, ChiParams(chi3_prefactor=2 - 1j))
    assert_allclose(scaled.values, (2 - 1j) * base.values)


@pytest.mark.parametrize("grid", [[], [0.0, 0.0], [1.0, 0.0], [0.0, 2e3]])
def test_rejects_bad_grids(sys_params, fields, doppler_off, grid):
    with pytest.raises(InvalidParameterError):
        chi3(grid, sys_params, fields, doppler_off)


def test_unknown_spectrum_kind(sys_params, fields):
    request = SpectrumRequest(kind="chi5", grid=np.array([0.0]), sys=sys_params, fields=fields)
    with pytest.raises(InvalidParameterError, match="Choose from"):
        request.evaluate()


def test_zero_prefactor_rejected():
    with pytest.raises(ValueError):
        ChiParams(chi3_prefactor=0)


def test_spectrum_frame_columns(sys_params, fields, doppler_off):
    spectrum = chi3(np.linspace(-1, 1, 5), sys_params, fields, doppler_off)
    frame = spectrum.to_frame()
    assert list(frame.columns) == ["delta", "re", "im"]
    assert len(frame) == 5


@pytest.mark.parametrize("evaluator", [chi1, chi3])
def test_quadrature_converges_without_field_shifts(sys_params, evaluator, caplog):
    grid = np.linspace(-5, 5, 101)
    fields = FieldParams(omega3=2.0, delta3=0.3)
    coarse = evaluator(grid, sys_params, fields, DopplerModel(n_nodes=64)).values
    fine = evaluator(grid, sys_params, fields, DopplerModel(n_nodes=128)).values
    assert np.max(np.abs(fine - coarse) / np.abs(fine)) < TOL_QUADRATURE
    assert "quadrature" not in caplog.text


@pytest.mark.parametrize("evaluator", [chi1, chi3])
def test_unconverged_quadrature_is_reported(sys_params, evaluator, caplog):
    doppler = DopplerModel(n_nodes=64, shift_e3=True)
    spectrum = evaluator(np.linspace(-5, 5, 101), sys_params, FieldParams(omega3=2.0), doppler)
    assert np.all(np.isfinite(spectrum.values))
    assert "quadrature not converged: 64 -> 128 nodes" in caplog.text


def test_chi1_reflection_symmetry(sys_params, doppler_off):
    grid = np.linspace(-5, 5, 101)
    values = chi1(grid, sys_params, FieldParams(omega3=2.0), doppler_off).values
    assert_allclose(values[::-1], -np.conj(values))


def test_doppler_average_does_not_narrow_peak(sys_params, doppler_off):
    grid = np.linspace(-4, 4, 801)
    fields = FieldParams(omega3=0.8)

    def fwhm(doppler):
        magnitude = np.abs(chi3(grid, sys_params, fields, doppler).values)
        peak = int(np.argmax(magnitude))
        return peak_widths(magnitude, [peak], rel_height=0.5)[0][0]

    assert fwhm(DopplerModel()) >= (1 - TOL_WIDTH) * fwhm(doppler_off)
