# --- eigensystem.py ---
"""
Two-level effective Hamiltonian, its eigenenergies and the exceptional point.

Sign convention: the eigenenergies delta are the negatives of the matrix
eigenvalues, delta = -eig(H_eff). Their sum is -delta3 + i(Gamma41 + Gamma21).
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np
from scipy import optimize

from .errors import InvalidParameterError, NoCoalescenceError, NumericalError
from .models import EffectiveHamiltonian, EigenPair, EigenSweep, Regime, RegimeLabel
from .params import FieldParams, SystemParams

logger = logging.getLogger(__name__)

EP_TOLERANCE = 1e-6


def hamiltonian(sys: SystemParams, fields: FieldParams) -> EffectiveHamiltonian:
    coupling = complex(-fields.omega3 / 2)
    return EffectiveHamiltonian(
        h11=complex(0.0, -sys.gamma21),
        h12=coupling,
        h21=coupling,
        h22=complex(fields.delta3, -sys.gamma41),
    )


def eigenvalues_array(sys: SystemParams, omega3, delta3) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised eigenenergies, ordered by real part then imaginary part (descending)."""
    omega3 = np.asarray(omega3, dtype=float)
    delta3 = np.asarray(delta3, dtype=float)
    disc_re = (omega3 / 2) ** 2 + (delta3 / 2) ** 2 - sys.gamma_diff ** 2
    disc_im = -delta3 * sys.gamma_diff
    root = np.sqrt(disc_re + 1j * disc_im)
    center = -delta3 / 2 + 1j * sys.gamma_eff
    plus = center + root
    minus = center - root
    swap = (plus.real < minus.real) | ((plus.real == minus.real) & (plus.imag < minus.imag))
    return np.where(swap, minus, plus), np.where(swap, plus, minus)


def eigenvalues(sys: SystemParams, fields: FieldParams) -> EigenPair:
    plus, minus = eigenvalues_array(sys, fields.omega3, fields.delta3)
    return make_pair(complex(plus), complex(minus), sys.gamma_eff)


def make_pair(delta_plus: complex, delta_minus: complex, gamma_eff: float) -> EigenPair:
    omega_e = delta_plus - delta_minus
    gamma_e_plus = gamma_e_minus = None
    if abs(omega_e.real) <= abs(omega_e.imag):
        gamma_e_plus = gamma_eff + abs(omega_e) / 2
        gamma_e_minus = gamma_eff - abs(omega_e) / 2
    return EigenPair(
        delta_plus=delta_plus,
        delta_minus=delta_minus,
        omega_e=omega_e,
        gamma_eff=gamma_eff,
        gamma_e_plus=gamma_e_plus,
        gamma_e_minus=gamma_e_minus,
    )


def splitting_magnitude(sys: SystemParams, omega3: float, delta3: float) -> float:
    plus, minus = eigenvalues_array(sys, omega3, delta3)
    return float(abs(plus - minus))


def find_ep(sys: SystemParams, delta3: float = 0.0) -> float:
    """Coupling Omega3 at which the two eigenenergies coalesce."""
    gamma_diff = sys.gamma_diff
    if delta3 != 0:
        upper = 2 * (gamma_diff + abs(delta3)) + 1.0
        res = optimize.minimize_scalar(
            lambda o: splitting_magnitude(sys, o, delta3), bounds=(0.0, upper), method="bounded"
        )
        min_split = float(res.fun)
        raise NoCoalescenceError(
            f"No real Omega3 coalesces the eigenvalues at delta3={delta3}; "
            f"minimum |Omega_e| = {min_split:.6g} at Omega3 = {float(res.x):.6g}",
            min_splitting=min_split,
        )
    if gamma_diff == 0:
        return 0.0

    # discriminant (Omega3/2)^2 - Gamma_diff^2 changes sign at the EP
    half = optimize.bisect(lambda s: s * s - gamma_diff * gamma_diff, 0.0, 2 * gamma_diff, xtol=1e-15)
    best, best_val = half, abs(half * half - gamma_diff * gamma_diff)
    for direction in (np.inf, -np.inf):
        s = half
        for _ in range(64):
            s = float(np.nextafter(s, direction))
            val = abs(s * s - gamma_diff * gamma_diff)
            if val < best_val:
                best, best_val = s, val
    omega_star = 2 * best
    logger.info(f"Exceptional point at Omega3 = {omega_star:.12g} Gamma41 (Gamma_diff = {gamma_diff:.6g})")
    return omega_star


def classify_regime(
    sys: SystemParams, fields: FieldParams, bandwidth: float, ep_tolerance: float = EP_TOLERANCE
) -> RegimeLabel:
    pair = eigenvalues(sys, fields)
    omega_abs = abs(pair.omega_e)
    two_gamma_diff = 2 * sys.gamma_diff
    if omega_abs < ep_tolerance:
        regime = Regime.EP
    elif bandwidth < max(omega_abs, sys.gamma_eff):
        regime = Regime.R2
    elif fields.omega3 > two_gamma_diff:
        regime = Regime.R1
    else:
        regime = Regime.R3
    return RegimeLabel(
        regime=regime,
        omega_e_abs=omega_abs,
        gamma_eff=sys.gamma_eff,
        bandwidth=bandwidth,
        two_gamma_diff=two_gamma_diff,
    )


def _check_grid(name: str, grid) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise InvalidParameterError(f"Empty {name} grid")
    if grid.size > 1:
        steps = np.diff(grid)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise InvalidParameterError(f"{name} grid must be strictly monotone")
    return grid


def track_branches(plus: np.ndarray, minus: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbour branch continuation along the last axis."""
    plus = plus.copy()
    minus = minus.copy()
    for k in range(1, plus.shape[-1]):
        prev_p, prev_m = plus[..., k - 1], minus[..., k - 1]
        cur_p, cur_m = plus[..., k].copy(), minus[..., k].copy()
        keep = np.abs(cur_p - prev_p) + np.abs(cur_m - prev_m)
        cross = np.abs(cur_m - prev_p) + np.abs(cur_p - prev_m)
        swap = cross < keep
        plus[..., k] = np.where(swap, cur_m, cur_p)
        minus[..., k] = np.where(swap, cur_p, cur_m)
    return plus, minus


def sweep_eigenvalues(sys: SystemParams, omega3_grid, delta3_grid) -> EigenSweep:
    """
    Eigenvalue surfaces with continuous branches.

    The first omega3 column is continued along delta3 and seeds every row,
    which is then continued along omega3. When the grid encloses the EP the
    surfaces carry an unavoidable cut along delta3 = 0 on the far side of the
    EP from the first column.
    """
    omega3_grid = _check_grid("omega3", omega3_grid)
    delta3_grid = _check_grid("delta3", delta3_grid)
    o3, d3 = np.meshgrid(omega3_grid, delta3_grid)
    plus, minus = eigenvalues_array(sys, o3, d3)
    plus[:, 0], minus[:, 0] = track_branches(plus[:, 0], minus[:, 0])
    plus, minus = track_branches(plus, minus)
    return EigenSweep(
        omega3=omega3_grid, delta3=delta3_grid, delta_plus=plus, delta_minus=minus,
        omega3_ep=2 * sys.gamma_diff,
    )


def _jumps(plus: np.ndarray, minus: np.ndarray, axis: int, ep_tolerance: float) -> np.ndarray:
    """Steps that swap labels, or move a branch at least the inter-branch distance."""
    gap = np.abs(plus - minus)
    n = gap.shape[axis]
    head = np.take(gap, range(1, n), axis=axis)
    tail = np.take(gap, range(0, n - 1), axis=axis)
    p0, p1 = np.take(plus, range(0, n - 1), axis=axis), np.take(plus, range(1, n), axis=axis)
    m0, m1 = np.take(minus, range(0, n - 1), axis=axis), np.take(minus, range(1, n), axis=axis)
    keep = np.abs(p1 - p0) + np.abs(m1 - m0)
    cross = np.abs(m1 - p0) + np.abs(p1 - m0)
    step = np.maximum(np.abs(p1 - p0), np.abs(m1 - m0))
    near_ep = (head < ep_tolerance) | (tail < ep_tolerance)
    return ((cross < keep) | (step >= np.maximum(head, tail))) & ~near_ep


def _on_cut(sweep: EigenSweep) -> np.ndarray:
    """delta3 steps that cross the branch cut, shape (n_delta3 - 1, n_omega3)."""
    if sweep.omega3_ep is None:
        return np.zeros((sweep.delta3.size - 1, sweep.omega3.size), dtype=bool)
    crosses_zero = (sweep.delta3[:-1] * sweep.delta3[1:] <= 0)[:, None]
    seed_side = np.sign(sweep.omega3[0] - sweep.omega3_ep)
    far_side = (np.sign(sweep.omega3 - sweep.omega3_ep) != seed_side)[None, :]
    return crosses_zero & far_side


def branch_continuity_violations(
    sweep: EigenSweep, ep_tolerance: float = EP_TOLERANCE
) -> List[Tuple[int, int]]:
    """
    (row, column) grid points reached by a step that swaps the branch labels or
    moves a branch at least the inter-branch distance, away from the EP. Steps
    are checked along omega3 and along delta3; delta3 steps across the EP branch
    cut are skipped.
    """
    bad = np.zeros(sweep.delta_plus.shape, dtype=bool)
    bad[:, 1:] |= _jumps(sweep.delta_plus, sweep.delta_minus, -1, ep_tolerance)
    bad[1:, :] |= _jumps(sweep.delta_plus, sweep.delta_minus, 0, ep_tolerance) & ~_on_cut(sweep)
    return [(int(row), int(col)) for row, col in zip(*np.nonzero(bad))]



def double_dressing_channels(
    sys: SystemParams, fields: FieldParams, g2_factor: float = 0.25
) -> List[complex]:
    """
    Three channel energies of the doubly dressed transition, sorted by real part.

    Roots of [(u - p+)(u - c0) - g Omega2^2](u - p-), where p+- are the singly
    dressed eigenenergies and c0 = i Gamma41 - delta3/2 + delta2 is the pole
    introduced by the E2 dressing.
    """
    pair = eigenvalues(sys, fields)
    c0 = complex(-fields.delta3 / 2 + fields.delta2, sys.gamma41)
    inner = np.polymul([1.0, -pair.delta_plus], [1.0, -c0])
    inner = np.polyadd(inner, [-g2_factor * fields.omega2 ** 2])
    coeffs = np.polymul(inner, [1.0, -pair.delta_minus])
    try:
        roots = np.roots(coeffs)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"Channel polynomial root finding did not converge: {e}")
    if roots.size != 3 or not np.all(np.isfinite(roots)):
        raise NumericalError(f"Channel polynomial returned invalid roots: {roots}")
    return sorted((complex(r) for r in roots), key=lambda z: (z.real, z.imag))



def sweep_double_dressing(
    sys: SystemParams, fields: FieldParams, omega2_grid: Sequence[float], omega3_grid: Sequence[float],
    g2_factor: float = 0.25,
) -> np.ndarray:
    """Channel energies on an (omega2, omega3) surface, shape (n_omega2, n_omega3, 3)."""
    omega2_grid = _check_grid("omega2", omega2_grid)
    omega3_grid = _check_grid("omega3", omega3_grid)
    out = np.empty((omega2_grid.size, omega3_grid.size, 3), dtype=complex)
    for i, o2 in enumerate(omega2_grid):
        for j, o3 in enumerate(omega3_grid):
            point = fields.model_copy(update={"omega2": float(o2), "omega3": float(o3)})
            out[i, j] = double_dressing_channels(sys, point, g2_factor)
    return out
