"""Projective measurements on the probe-ancilla pair and classical Fisher information."""

import dataclasses
import logging

import numpy as np

from metrocontrol import dynamics
from metrocontrol import qfim
from metrocontrol.utils import numerics

logger = logging.getLogger(__name__)

ZERO_PROBABILITY = 1e-12
DIVERGENCE_DERIVATIVE = 1e-8


@dataclasses.dataclass(frozen=True, eq=False)
class MeasurementBasis:
    """Four orthonormal two-qubit vectors, stored as the rows of vectors."""

    vectors: np.ndarray
    name: str

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=complex)
        if vectors.shape != (4, 4):
            raise ValueError('A basis needs four 4-vectors, got shape {}.'.format(vectors.shape))
        overlap = vectors.conj() @ vectors.T
        if np.max(np.abs(overlap - np.eye(4))) > 1e-12:
            raise ValueError('Basis {} is not orthonormal.'.format(self.name))
        object.__setattr__(self, 'vectors', vectors)


@dataclasses.dataclass(frozen=True, eq=False)
class CfimReport:
    """Classical Fisher information of one measurement.

    Attributes:
        I: CFIM, shape (n, n).
        basis: Name of the measurement basis.
        p: Outcome probabilities at the design point.
        divergent: Indices of outcomes whose probability vanishes while its derivative
            does not; their contribution is excluded from I.
    """

    I: np.ndarray
    basis: str
    p: np.ndarray
    divergent: tuple = ()

    def as_dict(self):
        return {'I': self.I.tolist(), 'basis': self.basis, 'p': self.p.tolist()}


def bell_basis():
    """(|00> +- |11>)/sqrt(2) and (|01> +- |10>)/sqrt(2)."""
    root = 1 / np.sqrt(2)
    return MeasurementBasis(np.array([
        [root, 0, 0, root],
        [root, 0, 0, -root],
        [0, root, root, 0],
        [0, root, -root, 0],
    ]), 'bell')


def rotated_bell_basis(probe_unitary, ancilla_unitary, name='rotated_bell'):
    """Bell basis with the local unitary U_probe (x) U_ancilla applied to every vector."""
    local = np.kron(np.asarray(probe_unitary, dtype=complex),
                    np.asarray(ancilla_unitary, dtype=complex))
    return MeasurementBasis(bell_basis().vectors @ local.T, name)


def outcome_probabilities(state, basis):
    """p_y = |<y|state>|^2."""
    amplitudes = getattr(state, 'amplitudes', state)
    return np.abs(basis.vectors.conj() @ amplitudes) ** 2


def cfim(model, x, grid, schedule, basis=None, h=None):
    """Classical Fisher information sum_y d_i p_y d_j p_y / p_y of a projective measurement.

    Probabilities are exact; their parameter derivatives are central differences with the
    same step policy as qfim.qfim_from_state, and the schedule is held fixed. Outcomes with
    p_y < 1e-12 are excluded; they are reported as divergent when |d p_y| > 1e-8.

    Args:
        model: FieldModel.
        x: Parameter values.
        grid: TimeGrid.
        schedule: ControlSchedule.
        basis: MeasurementBasis; the Bell basis when None.
        h: Finite-difference step.

    Returns:
        CfimReport.
    """
    basis = bell_basis() if basis is None else basis
    values = dynamics.parameter_values(x)
    steps = qfim.finite_difference_steps(values, h)

    def probabilities(point):
        return outcome_probabilities(dynamics.evolve_entangled(model, point, grid, schedule),
                                     basis)

    p = probabilities(values)
    derivatives = np.array([
        numerics.central_diff(lambda xi, i=i: probabilities(qfim.shifted(values, i, xi)),
                              values[i], steps[i])
        for i in range(len(values))
    ])

    kept = p >= ZERO_PROBABILITY
    divergent = tuple(int(y) for y in np.flatnonzero(
        ~kept & np.any(np.abs(derivatives) > DIVERGENCE_DERIVATIVE, axis=0)))
    if divergent:
        logger.warning('CFIM diverges at outcomes %s of basis %s', divergent, basis.name)

    weighted = derivatives[:, kept] / p[kept]
    information = weighted @ derivatives[:, kept].T
    return CfimReport((information + information.T) / 2, basis.name, p, divergent)


def _operator(gen):
    return np.kron(gen.operator, numerics.IDENTITY2)


def weak_commutation(gens, state=None):
    """Matrix Im <psi|S_i S_j|psi> with S = s.sigma acting on the probe.

    Equals (s_i x s_j).<sigma>_probe; zero for the maximally entangled probe. Other probe
    states are for diagnostics only.
    """
    state = dynamics.TwoQubitState.maximally_entangled() if state is None else state
    bloch = state.probe_bloch()
    vectors = np.array([gen.s for gen in gens], dtype=float)
    n = len(vectors)
    matrix = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            matrix[i, j] = np.cross(vectors[i], vectors[j]) @ bloch
    return matrix


def probe_variance(gen, state=None):
    """<S^2> - <S>^2 of S = s.sigma (x) I on a two-qubit state."""
    state = dynamics.TwoQubitState.maximally_entangled() if state is None else state
    operator = _operator(gen)
    psi = state.amplitudes
    mean = np.real(np.conj(psi) @ operator @ psi)
    square = np.real(np.conj(psi) @ operator @ operator @ psi)
    return float(square - mean ** 2)
