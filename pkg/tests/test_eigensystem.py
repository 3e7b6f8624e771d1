import numpy as np
import pytest

from biphoton_simulator.eigensystem import (
    branch_continuity_violations,
    classify_regime,
    double_dressing_channels,
    eigenvalues,
    eigenvalues_array,
    find_ep,
    hamiltonian,
    sweep_double_dressing,
    sweep_eigenvalues,
)
from biphoton_simulator.errors import InvalidParameterError, NoCoalescenceError
from biphoton_simulator.models import EigenSweep, Regime
from biphoton_simulator.params import FieldParams, SystemParams
from biphoton_simulator.susceptibility import d_eit_polynomial

TOL = 1e-12
TOL_ROOTS = 1e-10
N_DRAWS = 10_000


def assert_allclose(a, b, tol=TOL):
    np.testing.assert_allclose(a, b, rtol=0, atol=tol)


def assert_same_pairs(actual, expected, tol):
    """Compare unordered root pairs row by row."""
    for (a1, a2), (e1, e2) in zip(actual, expected):
        direct = max(abs(a1 - e1), abs(a2 - e2))
        crossed = max(abs(a1 - e2), abs(a2 - e1))
        assert min(direct, crossed) <= tol * max(1.0, abs(e1), abs(e2))


def test_weak_coupling_values(sys_params):
    pair = eigenvalues(sys_params, FieldParams(omega3=0.4))
    root = np.sqrt(0.12)
    assert_allclose(pair.delta_plus, 1j * (0.6 + root))
    assert_allclose(pair.delta_minus, 1j * (0.6 - root))
    assert pair.coupling() == "weak"
    assert pair.gamma_e_plus == pytest.approx(0.6 + root)
    assert pair.gamma_e_minus == pytest.approx(0.6 - root)


def test_strong_coupling_values(sys_params):
    pair = eigenvalues(sys_params, FieldParams(omega3=2.0))
    root = np.sqrt(0.84)
    assert_allclose(pair.delta_plus, root + 0.6j)
    assert_allclose(pair.delta_minus, -root + 0.6j)
    assert pair.coupling() == "strong"
    assert pair.gamma_e_plus is None


def random_draws(rng):
    """Omega3, Delta3 and Gamma21/Gamma41 over the full parameter box."""
    return rng.uniform(0, 10, N_DRAWS), rng.uniform(-10, 10, N_DRAWS), 1 - rng.uniform(0, 1, N_DRAWS)


def test_matches_dense_diagonalisation(rng):
    pairs = []
    stack = np.empty((N_DRAWS, 2, 2), dtype=complex)
    for i, (o, d, ratio) in enumerate(zip(*random_draws(rng))):
        atom = SystemParams(gamma21_ratio=ratio)
        pairs.append(eigenvalues_array(atom, o, d))
        stack[i] = -hamiltonian(atom, FieldParams(omega3=o, delta3=d)).matrix()
    assert_same_pairs(pairs, np.linalg.eigvals(stack), TOL)


def test_vieta_identities(rng):
    for o, d, ratio in zip(*random_draws(rng)):
        atom = SystemParams(gamma21_ratio=ratio)
        plus, minus = eigenvalues_array(atom, o, d)
        g21, g41 = atom.gamma21, atom.gamma41
        scale = max(1.0, abs(plus), abs(minus))
        assert abs(plus + minus - (1j * (g21 + g41) - d)) <= TOL * scale
        assert abs(plus * minus - ((-1j * g21) * (d - 1j * g41) - o ** 2 / 4)) <= TOL * scale ** 2



def test_polynomial_roots_match_eigenvalues(sys_params, rng):
    roots, expected = [], []
    for o, d in zip(rng.uniform(0, 5, 1000), rng.uniform(-5, 5, 1000)):
        fields = FieldParams(omega3=o, delta3=d)
        roots.append(np.roots(d_eit_polynomial(sys_params, fields)))
        pair = eigenvalues(sys_params, fields)
        expected.append((pair.delta_plus, pair.delta_minus))
    assert_same_pairs(roots, expected, TOL_ROOTS)


def test_exceptional_point(sys_params):
    omega_star = find_ep(sys_params)
    assert omega_star == pytest.approx(2 * sys_params.gamma_diff, abs=1e-14)
    pair = eigenvalues(sys_params, FieldParams(omega3=omega_star))
    assert abs(pair.omega_e) < 1e-10
    assert pair.coupling() == "ep"
    assert_allclose(pair.delta_plus, 0.6j, tol=1e-10)


def test_no_coalescence_off_resonance(sys_params):
    with pytest.raises(NoCoalescenceError) as info:
        find_ep(sys_params, delta3=1.0)
    assert info.value.min_splitting > 0


def test_no_decay_difference_means_ep_at_zero():
    params = SystemParams(gamma21_ratio=1.0)
    assert find_ep(params) == 0.0


@pytest.mark.parametrize(
    "omega3, width, regime",
    [
        (0.8, 1.0, Regime.EP),
        (3.0, 10.0, Regime.R1),
        (0.4, 10.0, Regime.R3),
        (3.0, 0.1, Regime.R2),
    ],
)
def test_regime_labels(sys_params, omega3, width, regime):
    label = classify_regime(sys_params, FieldParams(omega3=omega3), width)
    assert label.regime == regime
    assert label.two_gamma_diff == pytest.approx(0.8)


def test_sweep_is_continuous_through_ep(sys_params):
    grid = np.round(np.arange(0, 201) * 0.01, 12)
    sweep = sweep_eigenvalues(sys_params, grid, [0.0])
    assert sweep.delta_plus.shape == (1, 201)
    assert branch_continuity_violations(sweep) == []
    # at every point the tracked pair is the analytic pair, in some order
    plus, minus = eigenvalues_array(sys_params, grid, 0.0)
    assert_same_pairs(zip(sweep.delta_plus[0], sweep.delta_minus[0]), zip(plus, minus), 1e-12)


def test_sweep_over_detuning_rows(sys_params):
    sweep = sweep_eigenvalues(sys_params, np.linspace(0, 2, 41), np.linspace(-1, 1, 41))
    assert sweep.delta_plus.shape == (41, 41)
    assert sweep.omega3_ep == pytest.approx(0.8)
    assert branch_continuity_violations(sweep) == []
    frame = sweep.to_frame()
    assert len(frame) == 41 * 41


def test_detuning_scan_below_ep_is_continuous(sys_params):
    delta3 = np.linspace(-1, 1, 41)
    sweep = sweep_eigenvalues(sys_params, [0.7], delta3)
    assert branch_continuity_violations(sweep) == []
    plus, minus = sweep.delta_plus[:, 0], sweep.delta_minus[:, 0]
    gap = np.abs(plus - minus)
    assert np.all(np.abs(np.diff(plus)) < 0.5 * np.minimum(gap[1:], gap[:-1]))
    assert np.all(np.abs(np.diff(minus)) < 0.5 * np.minimum(gap[1:], gap[:-1]))
    # real parts meet only at delta3 = 0, where the imaginary parts stay apart
    center = np.argmin(np.abs(delta3))
    assert abs(plus[center].real - minus[center].real) < TOL
    assert abs(plus[center].imag - minus[center].imag) > 0.3
    assert np.all(np.abs(np.delete(plus.imag - minus.imag, center)) > 0.01)


def test_untracked_detuning_scan_is_flagged(sys_params):
    delta3 = np.linspace(-1, 1, 41)
    plus, minus = eigenvalues_array(sys_params, 0.7, delta3)
    raw = EigenSweep(
        omega3=np.array([0.7]), delta3=delta3,
        delta_plus=plus[:, None], delta_minus=minus[:, None], omega3_ep=0.8,
    )
    assert (21, 0) in branch_continuity_violations(raw)


def test_cut_beyond_ep_is_not_a_violation(sys_params):
    sweep = sweep_eigenvalues(sys_params, [0.5, 2.0], [-0.1, 0.0, 0.1])
    assert branch_continuity_violations(sweep) == []
    # along delta3 the far column changes sheet, the near one does not
    far_plus = sweep.delta_plus[:, 1]
    assert abs(far_plus[2] - far_plus[0]) > 1.0
    near_plus = sweep.delta_plus[:, 0]
    assert abs(near_plus[2] - near_plus[0]) < 0.3



def test_swapped_branches_are_flagged():
    sweep = EigenSweep(
        omega3=np.array([0.0, 1.0, 2.0]),
        delta3=np.array([0.0]),
        delta_plus=np.array([[1j, 0.2j, 1j]]),
        delta_minus=np.array([[0.2j, 1j, 0.2j]]),
    )
    assert branch_continuity_violations(sweep) == [(0, 1), (0, 2)]


@pytest.mark.parametrize("grid", [[], [0.0, 0.5, 0.5], [0.0, 1.0, 0.5]])
def test_bad_sweep_grids(sys_params, grid):
    with pytest.raises(InvalidParameterError):
        sweep_eigenvalues(sys_params, grid, [0.0])


def test_double_dressing_without_e2_reduces_to_single_pair(sys_params):
    fields = FieldParams(omega3=2.0, omega2=0.0)
    channels = double_dressing_channels(sys_params, fields)
    pair = eigenvalues(sys_params, fields)
    c0 = complex(0.0, sys_params.gamma41)
    expected = sorted([pair.delta_plus, pair.delta_minus, c0], key=lambda z: (z.real, z.imag))
    assert_allclose(np.array(channels), np.array(expected), tol=1e-10)


def test_double_dressing_against_companion_matrix(sys_params):
    fields = FieldParams(omega3=10.0, omega2=30.0)
    pair = eigenvalues(sys_params, fields)
    p, m, c0 = pair.delta_plus, pair.delta_minus, complex(0.0, sys_params.gamma41)
    g = 0.25 * fields.omega2 ** 2
    a2 = -(p + c0 + m)
    a1 = p * c0 - g + m * (p + c0)
    a0 = -m * (p * c0 - g)
    companion = np.array([[-a2, -a1, -a0], [1, 0, 0], [0, 1, 0]], dtype=complex)
    expected = sorted(np.linalg.eigvals(companion), key=lambda z: (z.real, z.imag))
    channels = double_dressing_channels(sys_params, fields)
    assert_allclose(np.array(channels), np.array(expected), tol=1e-9)
    assert [round(c.real, 1) for c in channels] == [-12.7, -5.0, 17.7]


def test_double_dressing_surface_shape(sys_params, fields):
    surface = sweep_double_dressing(sys_params, fields, [0.0, 1.0], [0.5, 1.0, 2.0])
    assert surface.shape == (2, 3, 3)
    assert np.all(np.isfinite(surface))
