"""Fisher-information quantities for the maximally entangled probe.

The quantum Fisher information matrix is computed two independent ways: from generator
vectors (J_ij = 4 s_i.s_j) and from central differences of the evolved state. The gap
functional measures how far a control falls short of the single-parameter optima.
"""

import dataclasses
import math

import numpy as np

from metrocontrol import dynamics
from metrocontrol.errors import InvalidWeightsError, SignificanceError
from metrocontrol.utils import numerics

SINGULAR_RATIO = 1e-12
MIN_STEP = 1e-9


@dataclasses.dataclass(frozen=True, eq=False)
class QfimReport:
    """QFIM of one schedule with its single-parameter optima and derived bounds."""

    J: np.ndarray
    J_opt: np.ndarray
    gap: float
    weighted_gap: float
    trace_crb: float
    svd_lower_bound: float = math.nan

    def as_dict(self):
        """JSON-ready form; infinite values become the string 'inf'."""
        return {
            'J': self.J.tolist(),
            'J_opt': self.J_opt.tolist(),
            'gap': _encode(self.gap),
            'weighted_gap': _encode(self.weighted_gap),
            'trace_crb': _encode(self.trace_crb),
            'svd_lower_bound': _encode(self.svd_lower_bound),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            J=np.asarray(data['J'], dtype=float),
            J_opt=np.asarray(data['J_opt'], dtype=float),
            gap=float(data['gap']),
            weighted_gap=float(data['weighted_gap']),
            trace_crb=float(data['trace_crb']),
            svd_lower_bound=float(data['svd_lower_bound']),
        )


def _encode(value):
    return 'inf' if math.isinf(value) and value > 0 else float(value)


def qfim_from_generators(gens):
    """J_ij = 4 s_i.s_j for a list of GeneratorVector."""
    vectors = np.array([gen.s for gen in gens], dtype=float)
    return 4 * vectors @ vectors.T


def default_step(x):
    """Finite-difference steps h_i = 1e-5 max(1, |x_i|)."""
    return 1e-5 * np.maximum(1.0, np.abs(dynamics.parameter_values(x)))


def finite_difference_steps(x, h=None):
    """Per-parameter steps from a scalar, a sequence or the default policy.

    Raises:
        SignificanceError: Some step is below 1e-9.
    """
    values = dynamics.parameter_values(x)
    steps = default_step(values) if h is None else np.broadcast_to(
        np.asarray(h, dtype=float), values.shape).copy()
    for step in steps:
        if not step >= MIN_STEP:
            raise SignificanceError(step)
    return steps


def shifted(x, i, value):
    """Copy of the parameter vector with x_i replaced by value."""
    values = dynamics.parameter_values(x).copy()
    values[i] = value
    return values


def state_derivatives(model, x, grid, schedule, h=None):
    """Final state and its central-difference derivatives in every parameter.

    The schedule is held fixed while x varies.

    Returns:
        A tuple (amplitudes, derivatives) with shapes (4,) and (n, 4).
    """
    values = dynamics.parameter_values(x)
    steps = finite_difference_steps(values, h)
    state = dynamics.evolve_entangled(model, values, grid, schedule).amplitudes
    derivatives = np.array([
        numerics.central_diff(
            lambda xi, i=i: dynamics.evolve_entangled(model, shifted(values, i, xi), grid,
                                                      schedule).amplitudes,
            values[i], steps[i])
        for i in range(len(values))
    ])
    return state, derivatives


def qfim_from_state(model, x, grid, schedule, h=None):
    """Pure-state QFIM J_ij = 4 Re(<d_i phi|d_j phi> - <d_i phi|phi><phi|d_j phi>).

    Args:
        model: FieldModel.
        x: Parameter values.
        grid: TimeGrid.
        schedule: ControlSchedule, held fixed.
        h: Finite-difference step (scalar or per parameter); default 1e-5 max(1, |x_i|).

    Raises:
        SignificanceError: A step is below 1e-9.
    """
    state, derivatives = state_derivatives(model, x, grid, schedule, h)
    overlaps = np.conj(derivatives) @ derivatives.T
    projections = np.conj(derivatives) @ state
    matrix = 4 * np.real(overlaps - np.outer(projections, np.conj(projections)))
    return (matrix + matrix.T) / 2


def single_param_optimum(velocity_field, grid):
    """J_opt_i = 4 (integral of |V_i(t)| dt)^2 for every parameter."""
    magnitudes = np.linalg.norm(velocity_field, axis=-1)
    return 4 * numerics.integrate(magnitudes.T, grid.dt) ** 2


def check_weights(w, n):
    """Returns w as an array of length n (ones if None).

    Raises:
        InvalidWeightsError: Some weight is negative or non-finite.
    """
    weights = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if weights.shape != (n,) or not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise InvalidWeightsError(weights)
    return weights


def gap(J, J_opt, w=None):
    """Weighted gap sum_i w_i (J_opt_i - J_ii); uniform weights when w is None."""
    J_opt = np.asarray(J_opt, dtype=float)
    weights = check_weights(w, len(J_opt))
    return float(np.sum(weights * (J_opt - np.diagonal(J))))


def trace_crb(J):
    """Tr(J^-1), or +inf when the smallest eigenvalue is below 1e-12 of the largest."""
    eigenvalues = np.linalg.eigvalsh(np.asarray(J, dtype=float))
    if eigenvalues[-1] <= 0 or eigenvalues[0] < SINGULAR_RATIO * eigenvalues[-1]:
        return math.inf
    return float(np.sum(1 / eigenvalues))


def is_diagonal(J, tolerance=1e-6):
    """Whether every off-diagonal entry is within tolerance of the diagonal scale."""
    J = np.asarray(J, dtype=float)
    scale = max(float(np.max(np.abs(np.diagonal(J)))), 1e-300)
    off_diagonal = J - np.diag(np.diagonal(J))
    return bool(np.max(np.abs(off_diagonal)) <= tolerance * scale)


def minimal_gap_planar(frame, grid, w=None):
    """Smallest gap reachable by rotations about the normal of a planar velocity set.

    4 times the double integral of sum_i w_i |V_i(t1)||V_i(t2)| - sqrt(C^2 + D^2), where C
    and D are the weighted in-plane dot and cross products of the velocities at t1 and t2.

    Args:
        frame: control.PlanarFrame of the velocities.
        grid: TimeGrid.
        w: Estimation weights.
    """
    weights = check_weights(w, frame.a.shape[0])
    root = np.sqrt(weights)[:, None]
    a, b = root * frame.a, root * frame.b
    magnitudes = np.hypot(a, b)

    def integrand(rows):
        dot = a[:, rows].T @ a + b[:, rows].T @ b
        cross = a[:, rows].T @ b - b[:, rows].T @ a
        return magnitudes[:, rows].T @ magnitudes - np.hypot(dot, cross)

    return 4 * numerics.lattice_integral(integrand, grid.steps + 1, grid.dt)


def build_report(J, J_opt, w=None, svd_lower_bound=math.nan):
    """Assembles a QfimReport; gap uses uniform weights, weighted_gap uses w."""
    J = np.asarray(J, dtype=float)
    J_opt = np.asarray(J_opt, dtype=float)
    return QfimReport(
        J=J,
        J_opt=J_opt,
        gap=gap(J, J_opt),
        weighted_gap=gap(J, J_opt, w),
        trace_crb=trace_crb(J),
        svd_lower_bound=float(svd_lower_bound),
    )
