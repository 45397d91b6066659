"""Joint control synthesis and its certificates.

Controls are described by paths of Heisenberg frames R(t) and converted to control fields
by dynamics.schedule_from_frames. Planar velocity sets have a closed-form angle profile;
general sets are handled by a piecewise-constant Euler-angle search.

Classes:
    PlanarFrame: in-plane basis and coordinates of a planar velocity set
    AlphaProfile: rotation angle about the plane normal on every node
    CorrelationKernel: lazily evaluated kernel sum_i w_i V_i(t1) V_i(t2)^T
    StationarityReport: first- and second-order response to angle perturbations
"""

import collections
import dataclasses
import logging

import numpy as np
from scipy import optimize

from metrocontrol import dynamics
from metrocontrol import qfim
from metrocontrol.errors import (ConfigurationError, NonPlanarError, UnknownControlError,
                                 ZeroVelocityError)
from metrocontrol.utils import numerics
from metrocontrol.utils import parallel

logger = logging.getLogger(__name__)

PLANARITY_TOLERANCE = 1e-9
REFERENCE_THRESHOLD = 1e-12
PULSE_CANDIDATE_SEGMENTS = 8
REFINE_MAX_ITER = 500
REFINE_TOLERANCE = 1e-13
MAX_SEGMENTS = 64
SIMPLEX_STEP = 0.5

BruteForceResult = collections.namedtuple('BruteForceResult', ['schedule', 'achieved_gap'])


@dataclasses.dataclass(frozen=True, eq=False)
class PlanarFrame:
    """Right-handed frame {e1, e2, normal} of a planar velocity set.

    Attributes:
        normal: Unit normal of the plane.
        e1, e2: Orthonormal in-plane basis with e1 x e2 = normal.
        a, b: In-plane coordinates V_i(t_k).e1 and V_i(t_k).e2, shape (n, steps + 1).
        ratio: Smallest over largest eigenvalue of the velocity scatter matrix.
    """

    normal: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    a: np.ndarray
    b: np.ndarray
    ratio: float

    @property
    def coordinates(self):
        """Complex in-plane coordinates a + ib."""
        return self.a + 1j * self.b


@dataclasses.dataclass(frozen=True, eq=False)
class AlphaProfile:
    """Unwrapped angle profile, zero at reference_index."""

    alpha: np.ndarray
    reference_index: int


class CorrelationKernel:
    """Kernel K(t1, t2) = sum_i w_i V_i(t1) V_i(t2)^T on the grid lattice.

    Entries are computed on demand; K(t2, t1) is returned as K(t1, t2)^T.
    """

    def __init__(self, velocity_field, w=None):
        weights = qfim.check_weights(w, velocity_field.shape[0])
        self._scaled = np.sqrt(weights)[:, None, None] * velocity_field

    def at(self, k1, k2):
        if k1 > k2:
            return self.at(k2, k1).T
        return np.einsum('ia,ib->ab', self._scaled[:, k1], self._scaled[:, k2])

    def block(self, rows):
        """Kernel for the given rows against every column, shape (rows, n_nodes, 3, 3)."""
        return np.einsum('ira,ikb->rkab', self._scaled[:, rows], self._scaled)


@dataclasses.dataclass(frozen=True)
class StationarityReport:
    """Response of the weighted objective to random per-segment angle perturbations."""

    first_order_residual: float
    quadratic_coefficient: float
    threshold: float
    perturbation: float

    @property
    def is_stationary(self):
        return self.first_order_residual < self.threshold

    def as_dict(self):
        return dict(dataclasses.asdict(self), is_stationary=self.is_stationary)


def correlation_kernel(velocity_field, w=None):
    return CorrelationKernel(velocity_field, w)


def _canonical_sign(vector):
    """Flips vector so its largest-magnitude component is positive."""
    return vector if vector[np.argmax(np.abs(vector))] >= 0 else -vector


def detect_plane(velocity_field, tolerance=PLANARITY_TOLERANCE):
    """Finds the plane containing every velocity.

    Args:
        velocity_field: Array of shape (n, steps + 1, 3).
        tolerance: Largest admissible ratio of the smallest to the largest eigenvalue of
            sum_{i,k} V V^T.

    Returns:
        PlanarFrame with canonical orientation.

    Raises:
        ZeroVelocityError: Every velocity vanishes.
        NonPlanarError: The velocities span three dimensions.
    """
    flat = np.asarray(velocity_field, dtype=float).reshape(-1, 3)
    eigenvalues, eigenvectors = np.linalg.eigh(flat.T @ flat)
    if eigenvalues[-1] <= 0:
        raise ZeroVelocityError()

    ratio = max(float(eigenvalues[0] / eigenvalues[-1]), 0.0)
    normal = _canonical_sign(eigenvectors[:, 0])
    out_of_plane = np.max(np.abs(flat @ normal))
    if ratio > tolerance or out_of_plane > tolerance * np.max(np.linalg.norm(flat, axis=1)):
        raise NonPlanarError(ratio)

    e1 = _canonical_sign(eigenvectors[:, 2])
    e2 = np.cross(normal, e1)
    return PlanarFrame(normal=normal, e1=e1, e2=e2, a=velocity_field @ e1,
                       b=velocity_field @ e2, ratio=ratio)


def planar_alpha(frame, grid, w=None):
    """Closed-form angle profile aligning every rotated velocity with its reference.

    alpha(t) = atan2(sum_i [a_i(t) b_i(t0) - a_i(t0) b_i(t)],
                     sum_i [a_i(t) a_i(t0) + b_i(t) b_i(t0)])
    with t0 the first node where sum_i w_i |V_i|^2 exceeds 1e-12 of its maximum. When t0 is
    not the first node, the reference velocities are replaced by their unit directions
    scaled by sqrt(w_i). alpha is zero before t0 and unwrapped after it.

    Raises:
        ZeroVelocityError: Every velocity vanishes.
    """
    weights = qfim.check_weights(w, frame.a.shape[0])
    if frame.a.shape[1] != grid.steps + 1:
        raise ConfigurationError('Planar frame has {} nodes, grid has {}.'.format(
            frame.a.shape[1], grid.steps + 1))
    root = np.sqrt(weights)[:, None]
    a, b = root * frame.a, root * frame.b

    power = np.sum(a ** 2 + b ** 2, axis=0)
    if np.max(power) <= 0:
        raise ZeroVelocityError()
    reference = int(np.argmax(power > REFERENCE_THRESHOLD * np.max(power)))

    a0, b0 = a[:, reference], b[:, reference]
    if reference > 0:
        norms = np.hypot(a0, b0)
        scale = np.divide(root[:, 0], norms, out=np.zeros_like(norms), where=norms > 0)
        a0, b0 = a0 * scale, b0 * scale
        logger.debug('planar reference node %d (velocities vanish at t=0)', reference)

    alpha = np.arctan2(a.T @ b0 - b.T @ a0, a.T @ a0 + b.T @ b0)
    alpha[:reference] = 0.0
    alpha[reference:] = np.unwrap(alpha[reference:])
    alpha -= alpha[reference]
    return AlphaProfile(alpha, reference)


def _offsets(n_nodes, flips):
    """Pi offsets leaving and arriving at each node for pulses at the given nodes."""
    nodes = np.arange(n_nodes)
    leaving = np.zeros(n_nodes)
    arriving = np.zeros(n_nodes)
    for node in flips:
        leaving += np.pi * (nodes >= node)
        arriving += np.pi * (nodes > node)
    return leaving, arriving


def _planar_objective(coordinates, leaving, arriving, dt):
    """sum_i w_i J_ii for rotations about the normal; coordinates carry sqrt(w_i)."""
    phased_out = np.exp(1j * leaving[:-1]) * coordinates[:, :-1]
    phased_in = np.exp(1j * arriving[1:]) * coordinates[:, 1:]
    vectors = dt / 2 * np.sum(phased_out + phased_in, axis=1)
    return float(4 * np.sum(np.abs(vectors) ** 2))


def rotation_schedule(kind, model, x, grid, normal, alpha, flips=(), label=None, extra=None):
    """Schedule whose frame at t_k is the rotation about normal by alpha[k].

    A pi pulse about the normal is applied at every node in flips.
    """
    alpha = np.asarray(alpha, dtype=float)
    leaving, arriving = _offsets(grid.steps + 1, flips)
    parameters = {
        'alpha': alpha.tolist(),
        'normal': np.asarray(normal, dtype=float).tolist(),
        'segments': [{'start': int(node), 'offset': float(np.pi)} for node in flips],
    }
    parameters.update(extra or {})
    return dynamics.schedule_from_frames(
        kind, model, x, grid,
        numerics.rotation(normal, alpha + leaving),
        numerics.rotation(normal, alpha + arriving),
        parameters, label)


def _wrap(angles):
    return np.angle(np.exp(1j * angles))


def _encoded_value(coordinates, alpha, flips, dt):
    leaving, arriving = _offsets(coordinates.shape[1], flips)
    return _planar_objective(coordinates, alpha + leaving, alpha + arriving, dt)


def ascend_profile(coordinates, theta, dt, max_iter=REFINE_MAX_ITER):
    """Fixed-point ascent on sum_i w_i J_ii over rotations about the normal.

    Every iteration sets theta(t) = arg sum_i conj(z_i(t)) s_i with
    s_i = integral of exp(i theta) z_i; the objective never decreases. Nodes where the sum
    vanishes keep their angle.

    Args:
        coordinates: Complex in-plane velocities scaled by sqrt(w_i), shape (n, steps + 1).
        theta: Starting angle on every node.
        dt: Grid step.

    Returns:
        A tuple (theta, value) with the final profile and its objective.
    """
    quadrature = numerics.trapezoid_weights(coordinates.shape[1], dt)

    def moments_of(angles):
        return (np.exp(1j * angles) * coordinates) @ quadrature

    theta = np.array(theta, dtype=float)
    moments = moments_of(theta)
    value = 4 * float(np.sum(np.abs(moments) ** 2))
    for _ in range(max_iter):
        pull = np.conj(coordinates).T @ moments
        magnitude = np.abs(pull)
        if np.max(magnitude) <= 0:
            break
        active = magnitude > REFERENCE_THRESHOLD * np.max(magnitude)
        updated = np.where(active, np.angle(pull), theta)
        updated_moments = moments_of(updated)
        updated_value = 4 * float(np.sum(np.abs(updated_moments) ** 2))
        if updated_value <= value + REFINE_TOLERANCE * value:
            break
        theta, moments, value = updated, updated_moments, updated_value
    return theta, value


def encode_profile(theta):
    """Splits a node angle profile into a continuous alpha and pi pulses.

    Steps turning by more than pi/2 become a pi pulse at the arrival node plus the
    remaining small turn; no pulse is placed on the last node.

    Returns:
        A tuple (alpha, flips) with alpha[0] = 0.
    """
    turns = _wrap(np.diff(theta))
    flipped = np.abs(turns) > np.pi / 2
    turns = np.where(flipped, _wrap(turns - np.pi), turns)
    alpha = np.concatenate([[0.0], np.cumsum(turns)])
    flips = tuple(int(node) + 1 for node in np.flatnonzero(flipped[:-1]))
    return alpha, flips


def planar_optimal_schedule(model, x, grid, w=None):
    """Joint optimal control for planar velocities.

    Candidates are the closed-form profile, the same profile with one pi pulse at each
    inner boundary of an 8-segment partition, and the profile of every single parameter.
    Each candidate is then refined by ascend_profile; the best of all is kept.

    Args:
        model: FieldModel.
        x: Design point (ParameterPoint or array); its weights are used when w is None.
        grid: TimeGrid.
        w: Estimation weights.

    Raises:
        NonPlanarError: The velocities are not planar.
    """
    if w is None:
        w = getattr(x, 'weights', None)
    x0 = dynamics.parameter_values(x)
    weights = qfim.check_weights(w, len(x0))
    velocity_field = dynamics.velocities(model, x0, grid)
    frame = detect_plane(velocity_field)
    profile = planar_alpha(frame, grid, weights)
    coordinates = np.sqrt(weights)[:, None] * frame.coordinates

    candidates = [(profile.alpha, ())]
    for j in range(1, PULSE_CANDIDATE_SEGMENTS):
        candidates.append((profile.alpha,
                           (int(round(j * grid.steps / PULSE_CANDIDATE_SEGMENTS)),)))
    for i in range(len(x0)):
        try:
            candidates.append((planar_alpha(frame, grid, np.eye(len(x0))[i]).alpha, ()))
        except ZeroVelocityError:
            continue

    best_alpha, best_flips = candidates[0]
    best = _encoded_value(coordinates, best_alpha, best_flips, grid.dt)
    ascended, ascended_value = None, -np.inf
    for alpha, flips in candidates:
        value = _encoded_value(coordinates, alpha, flips, grid.dt)
        if value > best + 1e-12 * abs(best):
            best, best_alpha, best_flips = value, alpha, flips
        theta, value = ascend_profile(coordinates, alpha + _offsets(len(alpha), flips)[0],
                                      grid.dt)
        if value > ascended_value:
            ascended, ascended_value = theta, value

    alpha, flips = encode_profile(ascended)
    value = _encoded_value(coordinates, alpha, flips, grid.dt)
    if value > best + 1e-12 * abs(best):
        logger.info('fixed-point refinement raises the planar objective from %.12g to %.12g '
                    'with %d pi pulses', best, value, len(flips))
        best, best_alpha, best_flips = value, alpha, flips
    elif best_flips:
        logger.info('pi pulse at node %d improves the planar control', best_flips[0])

    return rotation_schedule('planar_optimal', model, x0, grid, frame.normal, best_alpha,
                             best_flips, extra={'weights': weights.tolist()})


def minimal_rotation_frames(velocity):
    """Frames rotating V(t) onto the direction of the first nonzero V(t0).

    Each frame is the smallest rotation about V(t) x V(t0); frames before t0 are I.

    Args:
        velocity: Array of shape (steps + 1, 3).

    Raises:
        ZeroVelocityError: velocity vanishes everywhere.
    """
    norms = np.linalg.norm(velocity, axis=1)
    if np.max(norms) <= 0:
        raise ZeroVelocityError()
    reference = int(np.argmax(norms > REFERENCE_THRESHOLD * np.max(norms)))
    target = velocity[reference] / norms[reference]

    frames = np.broadcast_to(np.eye(3), (len(velocity), 3, 3)).copy()
    for k in range(reference + 1, len(velocity)):
        if norms[k] == 0:
            frames[k] = frames[k - 1]
            continue
        direction = velocity[k] / norms[k]
        axis = np.cross(direction, target)
        sin, cos = np.linalg.norm(axis), float(direction @ target)
        if sin < 1e-15:
            if cos > 0:
                continue
            # antiparallel: any axis perpendicular to the direction
            axis = np.cross(direction, np.eye(3)[np.argmin(np.abs(direction))])
        frames[k] = numerics.rotation(axis, np.arctan2(sin, cos))
    return frames


def single_param_schedule(model, x, grid, i):
    """Control locking the rotated velocity of parameter i onto its initial direction.

    Raises:
        ZeroVelocityError: V_i vanishes on the whole grid.
    """
    x0 = dynamics.parameter_values(x)
    velocity_field = dynamics.velocities(model, x0, grid)[i:i + 1]
    if not np.any(np.linalg.norm(velocity_field, axis=-1) > 0):
        raise ZeroVelocityError(i)
    label = 'single_param({})'.format(i)

    try:
        frame = detect_plane(velocity_field)
    except NonPlanarError:
        frames = minimal_rotation_frames(velocity_field[0])
        return dynamics.schedule_from_frames(
            'single_param', model, x0, grid, frames,
            parameters={'index': i, 'frames': frames.tolist()}, label=label)

    profile = planar_alpha(frame, grid)
    return rotation_schedule('single_param', model, x0, grid, frame.normal, profile.alpha,
                             label=label, extra={'index': i})


def svd_lower_bound(velocity_field, grid, w=None):
    """Lower bound on the gap of any control from the nuclear norm of the kernel.

    sum_i w_i J_opt_i - 4 (double integral of the nuclear norm of K(t1, t2)), evaluated as
    the double integral of the pointwise difference on the grid lattice. Planar and
    two-parameter sets use closed-form 2x2 nuclear norms; larger sets use batched SVDs.
    """
    velocity_field = np.asarray(velocity_field, dtype=float)
    n = velocity_field.shape[0]
    weights = qfim.check_weights(w, n)
    root = np.sqrt(weights)
    magnitudes = root[:, None] * np.linalg.norm(velocity_field, axis=-1)
    block_rows = 256

    try:
        frame = detect_plane(velocity_field)
    except ZeroVelocityError:
        return 0.0
    except NonPlanarError:
        frame = None

    if frame is not None:
        a, b = root[:, None] * frame.a, root[:, None] * frame.b

        def nuclear(rows):
            p, q = a[:, rows].T @ a, a[:, rows].T @ b
            r, s = b[:, rows].T @ a, b[:, rows].T @ b
            squares = p ** 2 + q ** 2 + r ** 2 + s ** 2
            return np.sqrt(squares + 2 * np.abs(p * s - q * r))
    elif n == 2:
        scaled = root[:, None, None] * velocity_field
        g11 = np.sum(scaled[0] ** 2, axis=-1)
        g22 = np.sum(scaled[1] ** 2, axis=-1)
        g12 = np.sum(scaled[0] * scaled[1], axis=-1)
        determinant = np.maximum(g11 * g22 - g12 ** 2, 0.0)

        def nuclear(rows):
            trace = (np.outer(g11[rows], g11) + 2 * np.outer(g12[rows], g12)
                     + np.outer(g22[rows], g22))
            return np.sqrt(np.maximum(trace + 2 * np.sqrt(np.outer(determinant[rows],
                                                                   determinant)), 0.0))
    else:
        kernel = correlation_kernel(velocity_field, weights)
        block_rows = 16

        def nuclear(rows):
            return np.linalg.svd(kernel.block(rows), compute_uv=False).sum(axis=-1)

    def integrand(rows):
        return magnitudes[:, rows].T @ magnitudes - nuclear(rows)

    return 4 * numerics.lattice_integral(integrand, grid.steps + 1, grid.dt, block_rows)


def segment_of_step(steps, segments):
    """Segment index floor(k S / steps) of every step k."""
    return (np.arange(steps) * segments) // steps


def segment_frames(rotations, steps):
    """Leaving and arriving frames of a piecewise-constant rotation path.

    The path is rotated globally so the first frame is the identity.

    Args:
        rotations: Array of shape (segments, 3, 3).
        steps: Number of grid steps.
    """
    rotations = rotations[0].T @ rotations
    owner = segment_of_step(steps, len(rotations))
    leaving = np.concatenate([rotations[owner], rotations[owner[-1:]]])
    arriving = np.concatenate([rotations[:1], rotations[owner]])
    return leaving, arriving


def _segment_starts(steps, segments):
    return np.searchsorted(segment_of_step(steps, segments), np.arange(segments)).tolist()


def segment_schedule(kind, model, x, grid, angles, normal=None, label=None, extra=None):
    """Piecewise-constant control from per-segment angles.

    Args:
        kind: Control family name.
        model: FieldModel.
        x: Design point.
        grid: TimeGrid.
        angles: Shape (segments,) rotation angles about normal, or (segments, 3) extrinsic
            Z-Y-Z Euler angles when normal is None.
        normal: Rotation axis of planar problems.
        label: Report label.
        extra: Additional replay parameters.
    """
    angles = np.asarray(angles, dtype=float)
    if len(angles) > grid.steps:
        raise ConfigurationError('{} segments exceed {} grid steps.'.format(
            len(angles), grid.steps))
    starts = _segment_starts(grid.steps, len(angles))
    if normal is None:
        rotations = numerics.euler_zyz(angles[:, 0], angles[:, 1], angles[:, 2])
        segments = [{'start': start, 'euler': triple.tolist()}
                    for start, triple in zip(starts, angles)]
    else:
        rotations = numerics.rotation(normal, angles)
        segments = [{'start': start, 'alpha': float(angle)} for start, angle in zip(starts, angles)]

    leaving, arriving = segment_frames(rotations, grid.steps)
    parameters = {
        'alpha': [],
        'normal': None if normal is None else np.asarray(normal, dtype=float).tolist(),
        'segments': segments,
    }
    parameters.update(extra or {})
    return dynamics.schedule_from_frames(kind, model, x, grid, leaving, arriving, parameters,
                                         label)


def segment_moments(velocity_field, grid, segments):
    """Per-segment trapezoid integrals of V_i, shape (n, segments, 3)."""
    owner = segment_of_step(grid.steps, segments)
    step_integrals = grid.dt / 2 * (velocity_field[:, :-1] + velocity_field[:, 1:])
    indicator = (owner[None, :] == np.arange(segments)[:, None]).astype(float)
    return np.einsum('sk,ikc->isc', indicator, step_integrals)


def _search_objective(moments, weights, frame, objective):
    """Returns the function minimized by the brute-force search and its dimension."""
    segments = moments.shape[1]
    if objective not in ('gap', 'trace_crb'):
        raise UnknownControlError('Unknown brute-force objective {}.'.format(objective))

    if frame is not None:
        planar = moments @ frame.e1 + 1j * (moments @ frame.e2)
        scaled = np.sqrt(weights)[:, None] * planar

        def in_plane(angles):
            phases = np.exp(1j * angles)
            if objective == 'gap':
                return -4 * float(np.sum(np.abs(scaled @ phases) ** 2))
            vectors = planar @ phases
            return qfim.trace_crb(4 * np.real(np.outer(vectors, np.conj(vectors))))

        return in_plane, segments

    def euler(angles):
        triples = angles.reshape(segments, 3)
        rotations = numerics.euler_zyz(triples[:, 0], triples[:, 1], triples[:, 2])
        vectors = np.einsum('sab,isb->ia', rotations, moments)
        if objective == 'gap':
            return -4 * float(np.sum(weights * np.sum(vectors ** 2, axis=1)))
        return qfim.trace_crb(4 * vectors @ vectors.T)

    return euler, 3 * segments


def _restart(function, dimension, seed, index, max_iter):
    """One Nelder-Mead run; restart 0 starts from zero angles, others at random."""
    if index == 0:
        start = np.zeros(dimension)
    else:
        start = np.random.default_rng([seed, index]).uniform(-np.pi, np.pi, dimension)
    simplex = np.vstack([start, start + SIMPLEX_STEP * np.eye(dimension)])

    def bounded(angles):
        value = function(angles)
        return value if np.isfinite(value) else 1e300

    result = optimize.minimize(bounded, start, method='Nelder-Mead', options={
        'maxiter': max_iter,
        'xatol': 1e-7,
        'fatol': np.inf,
        'initial_simplex': simplex,
    })
    logger.debug('restart %d: objective %.12g after %d iterations', index, result.fun, result.nit)
    return float(result.fun), index, result.x


def brute_force_optimize(model, x, grid, w=None, segments=32, restarts=8, seed=0,
                         objective='gap', max_iter=2000, workers=None):
    """Derivative-free search over piecewise-constant controls.

    Planar problems search one angle per segment about the plane normal; others search a
    Z-Y-Z Euler triple per segment. Restarts run in parallel and are merged by objective
    value, ties going to the lower restart index, so results depend only on seed.

    Args:
        model: FieldModel.
        x: Design point; its weights are used when w is None.
        grid: TimeGrid.
        w: Estimation weights.
        segments: Number of piecewise-constant segments, at most 64.
        restarts: Number of Nelder-Mead runs.
        seed: Seed of the random starting points.
        objective: 'gap' maximizes sum_i w_i J_ii; 'trace_crb' minimizes Tr(J^-1)
            (experimental).
        max_iter: Iterations per restart.
        workers: Thread cap; METROCONTROL_THREADS when None.

    Returns:
        BruteForceResult(schedule, achieved_gap) with the weighted gap of the schedule.
    """
    if not 1 <= segments <= MAX_SEGMENTS:
        raise ConfigurationError('segments must be between 1 and {}, got {}.'.format(
            MAX_SEGMENTS, segments))
    if restarts < 1:
        raise ConfigurationError('restarts must be positive, got {}.'.format(restarts))
    if w is None:
        w = getattr(x, 'weights', None)
    x0 = dynamics.parameter_values(x)
    weights = qfim.check_weights(w, len(x0))
    velocity_field = dynamics.velocities(model, x0, grid)

    try:
        frame = detect_plane(velocity_field)
    except NonPlanarError:
        frame = None
    function, dimension = _search_objective(segment_moments(velocity_field, grid, segments),
                                            weights, frame, objective)

    runs = parallel.parallel_map(lambda index: _restart(function, dimension, seed, index,
                                                        max_iter),
                                 range(restarts), workers)
    value, index, angles = min(runs, key=lambda run: (run[0], run[1]))
    logger.info('brute force: best restart %d with objective %.12g', index, value)

    label = 'brute_force({},{},{})'.format(segments, restarts, seed)
    extra = {'seed': seed, 'restarts': restarts, 'objective': objective}
    if frame is None:
        schedule = segment_schedule('brute_force', model, x0, grid, angles.reshape(segments, 3),
                                    label=label, extra=extra)
    else:
        schedule = segment_schedule('brute_force', model, x0, grid, angles, frame.normal,
                                    label=label, extra=extra)
    return BruteForceResult(schedule, weighted_gap(velocity_field, schedule, grid, weights))


def weighted_gap(velocity_field, schedule, grid, w=None):
    """Weighted gap achieved by a schedule."""
    J = qfim.qfim_from_generators(dynamics.generators(velocity_field, schedule, grid))
    return qfim.gap(J, qfim.single_param_optimum(velocity_field, grid), w)


def verify_stationarity(model, x, grid, w, schedule, perturbation=1e-3, samples=32,
                        segments=32, seed=0):
    """Probes the weighted objective around a schedule with random angle perturbations.

    Every sample rotates the frames of each of `segments` time segments by
    perturbation * d_s, d_s ~ N(0, 1), about the plane normal (random axes per segment for
    non-planar problems), once with each sign. The odd part of the response is the
    first-order residual; it must stay below 1e-3 * perturbation * sum_i w_i J_opt_i.

    Returns:
        StationarityReport.
    """
    x0 = dynamics.parameter_values(x)
    weights = qfim.check_weights(w if w is not None else getattr(x, 'weights', None), len(x0))
    schedule.check_grid(grid)
    velocity_field = dynamics.velocities(model, x0, grid)
    total_opt = float(np.sum(weights * qfim.single_param_optimum(velocity_field, grid)))
    rng = np.random.default_rng(seed)

    try:
        axes = np.tile(detect_plane(velocity_field).normal, (segments, 1))
    except NonPlanarError:
        axes = rng.standard_normal((segments, 3))

    owner = segment_of_step(grid.steps, segments)
    leaving_owner = np.concatenate([owner, owner[-1:]])
    arriving_owner = np.concatenate([owner[:1], owner])
    frames, arrival_frames = schedule.frame_rotations, schedule.arrival_rotations

    def value(angles):
        turns = np.stack([numerics.rotation(axis, angle) for axis, angle in zip(axes, angles)])
        vectors = dynamics.accumulate(velocity_field, turns[leaving_owner] @ frames,
                                      turns[arriving_owner] @ arrival_frames, grid.dt)
        return 4 * float(np.sum(weights * np.sum(vectors ** 2, axis=1)))

    base = value(np.zeros(segments))
    odd, even = [], []
    for _ in range(samples):
        direction = perturbation * rng.standard_normal(segments)
        plus, minus = value(direction), value(-direction)
        odd.append(abs(plus - minus) / 2)
        even.append(abs((plus + minus) / 2 - base))

    return StationarityReport(
        first_order_residual=max(odd),
        quadratic_coefficient=max(even) / (perturbation ** 2 * total_opt),
        threshold=1e-3 * perturbation * total_opt,
        perturbation=perturbation,
    )


def pairwise_residual(frame, alpha, w=None, samples=50, seed=0):
    """Largest violation of the pairwise angle condition at random node pairs.

    For each pair the optimal relative angle is minus the argument of
    sum_i w_i z_i(t1) conj(z_i(t2)); the residual is the wrapped difference from
    alpha(t1) - alpha(t2). Pairs where that sum vanishes are skipped.
    """
    weights = qfim.check_weights(w, frame.a.shape[0])
    coordinates = np.sqrt(weights)[:, None] * frame.coordinates
    active = np.flatnonzero(np.sum(np.abs(coordinates) ** 2, axis=0) > 0)
    if len(active) < 2:
        return 0.0

    rng = np.random.default_rng(seed)
    first, second = rng.choice(active, samples), rng.choice(active, samples)
    correlation = np.sum(coordinates[:, first] * np.conj(coordinates[:, second]), axis=0)
    scale = np.max(np.abs(coordinates)) ** 2
    keep = np.abs(correlation) > 1e-9 * scale
    if not np.any(keep):
        return 0.0
    alpha = np.asarray(alpha)
    phases = np.exp(1j * (alpha[first] - alpha[second])) * correlation
    return float(np.max(np.abs(np.angle(phases[keep]))))


def schedule_to_dict(schedule):
    """JSON form {"kind", "label", "alpha", "normal", "segments", ...} of a schedule."""
    data = {'kind': schedule.kind, 'label': schedule.label, 'alpha': [], 'normal': None,
            'segments': []}
    data.update(schedule.parameters)
    return data


def schedule_from_dict(data, model, x, grid):
    """Rebuilds a schedule from schedule_to_dict output for the same model, x and grid.

    Raises:
        UnknownControlError: The description cannot be replayed.
    """
    kind = data['kind']
    label = data.get('label')
    extra = {key: value for key, value in data.items()
             if key not in ('kind', 'label', 'alpha', 'normal', 'segments', 'frames')}

    if kind in ('none', 'time_reversal', 'dc'):
        return dynamics.build_schedule(kind, model, x, grid)
    if kind == 'ac':
        return dynamics.build_schedule(kind, model, x, grid, omega=data['omega'])
    if 'frames' in data:
        return dynamics.schedule_from_frames(kind, model, x, grid, np.asarray(data['frames']),
                                             parameters=dict(extra, frames=data['frames']),
                                             label=label)
    segments = data.get('segments', [])
    if data.get('alpha'):
        flips = [segment['start'] for segment in segments if 'offset' in segment]
        return rotation_schedule(kind, model, x, grid, data['normal'], data['alpha'], flips,
                                 label=label, extra=extra)
    if segments and 'euler' in segments[0]:
        return segment_schedule(kind, model, x, grid,
                                [segment['euler'] for segment in segments],
                                label=label, extra=extra)
    if segments and 'alpha' in segments[0]:
        return segment_schedule(kind, model, x, grid,
                                [segment['alpha'] for segment in segments],
                                normal=data['normal'], label=label, extra=extra)
    raise UnknownControlError('Cannot replay schedule of kind {}.'.format(kind))
