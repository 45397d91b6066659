"""Controlled qubit dynamics and Heisenberg-picture generators.

The probe Hamiltonian is H = F(x, t).sigma. A control schedule adds an engineered field
c_k.sigma on every time step and optionally an instantaneous pulse at every grid node, so the
controlled step propagator at parameter x is su2_exp(F(x, t_k + dt/2) + c_k, dt) K_k. The
schedule is fixed while x varies.

Classes:
    FieldModel: base class of parameter-encoding field models
    DcField, AcField, TwoFrequencyField: built-in models
    TimeGrid: uniform time discretization
    ParameterPoint: parameter values with estimation weights
    ControlSchedule: control fields, pulses and the frames they produce
    GeneratorVector: vector form s of a generator S = s.sigma
    TwoQubitState: probe-ancilla pure state
"""

import dataclasses
import importlib
import logging

import numpy as np

from metrocontrol.errors import (InvalidGridError, InvalidWeightsError, NonFiniteError,
                                 ScheduleMismatchError, UnknownControlError, UnknownModelError)
from metrocontrol.utils import numerics

logger = logging.getLogger(__name__)

MODELS = {}

SCHEDULE_KINDS = ('none', 'time_reversal', 'dc', 'ac', 'planar_optimal', 'single_param')


def register_model(cls):
    """Class decorator adding a FieldModel subclass to the registry under cls.name."""
    MODELS[cls.name] = cls
    return cls


def get_model(name):
    """Returns a new instance of the built-in model registered under name.

    Raises:
        UnknownModelError: No model is registered under name.
    """
    try:
        return MODELS[name]()
    except KeyError:
        raise UnknownModelError('Unknown scenario {}; choose one of {}.'.format(
            name, ', '.join(sorted(MODELS))))


def load_model(path):
    """Imports and instantiates a FieldModel subclass given as 'package.module:Class'.

    Raises:
        UnknownModelError: The path cannot be imported or does not name a FieldModel.
    """
    module_name, _, class_name = path.partition(':')
    if not module_name or not class_name:
        raise UnknownModelError('Model path {} is not of the form module:Class.'.format(path))
    try:
        model_class = getattr(importlib.import_module(module_name), class_name)
    except (ImportError, AttributeError) as exc:
        raise UnknownModelError('Could not import model {}: {}'.format(path, exc))
    if not (isinstance(model_class, type) and issubclass(model_class, FieldModel)):
        raise UnknownModelError('{} is not a FieldModel subclass.'.format(path))
    return model_class()


class FieldModel:
    """Field F(x, t) of the Hamiltonian H = F(x, t).sigma, in rad/s.

    Subclasses set the class attributes and implement field(). gradient() defaults to
    central differences and should be overridden when a closed form is known. Both methods
    are vectorized over t and must not mutate the instance.

    Class attributes:
        name: Registry name.
        param_names: Names of the parameters, in order.
        formula: Human-readable form of the Hamiltonian.
        defaults: Default parameter values.
    """

    name = None
    param_names = ()
    formula = ''
    defaults = ()

    @property
    def n_params(self):
        return len(self.param_names)

    def field(self, x, t):
        """Returns F(x, t) with shape t.shape + (3,)."""
        raise NotImplementedError

    def gradient(self, x, t):
        """Returns dF/dx_i for every i, with shape (n_params,) + t.shape + (3,)."""
        x = np.asarray(x, dtype=float)
        rows = []
        for i in range(len(x)):
            step = 1e-6 * max(1.0, abs(x[i]))
            shift = np.zeros_like(x)
            shift[i] = 1.0
            rows.append(numerics.central_diff(lambda xi: self.field(x + (xi - x[i]) * shift, t),
                                              x[i], step))
        return np.stack(rows)

    def derivative(self, i, x, t):
        """Returns dF/dx_i with shape t.shape + (3,)."""
        return self.gradient(x, t)[i]


@register_model
class DcField(FieldModel):
    """Static field in the x-y plane."""

    name = 'dc'
    param_names = ('Bx', 'By')
    formula = 'H = Bx sigma_x + By sigma_y'
    defaults = (1.0, 0.5)

    def field(self, x, t):
        t = np.asarray(t, dtype=float)
        bx, by = x
        return np.stack([np.full_like(t, bx), np.full_like(t, by), np.zeros_like(t)], axis=-1)

    def gradient(self, x, t):
        t = np.asarray(t, dtype=float)
        ones, zeros = np.ones_like(t), np.zeros_like(t)
        return np.stack([
            np.stack([ones, zeros, zeros], axis=-1),
            np.stack([zeros, ones, zeros], axis=-1),
        ])


@register_model
class AcField(FieldModel):
    """Field of amplitude B rotating at frequency omega in the x-z plane."""

    name = 'ac'
    param_names = ('B', 'omega')
    formula = 'H = -B (cos(omega t) sigma_x + sin(omega t) sigma_z)'
    defaults = (1.0, 2.0)

    def field(self, x, t):
        t = np.asarray(t, dtype=float)
        amplitude, omega = x
        return -amplitude * np.stack([np.cos(omega * t), np.zeros_like(t),
                                      np.sin(omega * t)], axis=-1)

    def gradient(self, x, t):
        t = np.asarray(t, dtype=float)
        amplitude, omega = x
        cos, sin, zeros = np.cos(omega * t), np.sin(omega * t), np.zeros_like(t)
        return np.stack([
            -np.stack([cos, zeros, sin], axis=-1),
            amplitude * t[..., None] * np.stack([sin, zeros, -cos], axis=-1),
        ])


@register_model
class TwoFrequencyField(FieldModel):
    """Superposition of two counter-rotating fields with frequencies x_m and x_n."""

    name = 'two_frequency'
    param_names = ('x_m', 'x_n')
    formula = ('H = (cos(x_n t) + cos(x_m t)) sigma_x '
               '+ (sin(x_n t) - sin(x_m t)) sigma_z')
    defaults = (1.5, 1.0)

    def field(self, x, t):
        t = np.asarray(t, dtype=float)
        x_m, x_n = x
        return np.stack([np.cos(x_n * t) + np.cos(x_m * t), np.zeros_like(t),
                         np.sin(x_n * t) - np.sin(x_m * t)], axis=-1)

    def gradient(self, x, t):
        t = np.asarray(t, dtype=float)
        x_m, x_n = x
        zeros = np.zeros_like(t)
        return np.stack([
            t[..., None] * np.stack([-np.sin(x_m * t), zeros, -np.cos(x_m * t)], axis=-1),
            t[..., None] * np.stack([-np.sin(x_n * t), zeros, np.cos(x_n * t)], axis=-1),
        ])


@dataclasses.dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k dt, k = 0..steps, over [0, t_max] seconds."""

    t_max: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t_max) and self.t_max > 0):
            raise InvalidGridError('t_max must be positive, got {}.'.format(self.t_max))
        if int(self.steps) != self.steps or self.steps < 2:
            raise InvalidGridError('steps must be an integer >= 2, got {}.'.format(self.steps))
        object.__setattr__(self, 't_max', float(self.t_max))
        object.__setattr__(self, 'steps', int(self.steps))

    @classmethod
    def with_default_steps(cls, t_max, steps_per_unit=4000):
        return cls(t_max, max(2, int(round(steps_per_unit * t_max))))

    @property
    def dt(self):
        return self.t_max / self.steps

    @property
    def times(self):
        return np.linspace(0.0, self.t_max, self.steps + 1)

    @property
    def midpoints(self):
        return (np.arange(self.steps) + 0.5) * self.dt

    def refined(self, factor=2):
        return TimeGrid(self.t_max, self.steps * factor)


@dataclasses.dataclass(frozen=True, eq=False)
class ParameterPoint:
    """Parameter values x with nonnegative estimation weights w (default all ones)."""

    values: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(values)):
            raise NonFiniteError('Parameter values must be finite: {}'.format(values))
        weights = np.ones_like(values) if self.weights is None else \
            np.atleast_1d(np.asarray(self.weights, dtype=float))
        if weights.shape != values.shape:
            raise InvalidWeightsError(weights)
        if not np.all(np.isfinite(weights)) or np.any(weights < 0) or not np.any(weights > 0):
            raise InvalidWeightsError(weights)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'weights', weights)

    def __len__(self):
        return len(self.values)


def parameter_values(x):
    """Returns the raw parameter vector of a ParameterPoint or array-like."""
    return np.asarray(getattr(x, 'values', x), dtype=float)


@dataclasses.dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Control applied on a time grid, and the Heisenberg frames it produces.

    Attributes:
        kind: Control family, e.g. 'time_reversal' or 'planar_optimal'.
        grid: The TimeGrid the schedule was built for.
        design_point: Parameter values x0 the control was designed at.
        control_fields: Engineered field c_k per step, shape (steps, 3).
        pulses: Instantaneous unitary K_k at every node, shape (steps + 1, 2, 2).
            The pulses at the first and last node are the identity.
        step_unitaries: Net controlled step propagator at x0 including the pulse at the
            start of the step, shape (steps, 2, 2).
        frame_rotations: R(t_k) leaving node k (after its pulse), shape (steps + 1, 3, 3).
        arrival_rotations: R(t_k) arriving at node k (before its pulse).
        parameters: JSON-serializable description used to replay the schedule.
        label: Name used in reports; defaults to kind.
    """

    kind: str
    grid: TimeGrid
    design_point: np.ndarray
    control_fields: np.ndarray
    pulses: np.ndarray
    step_unitaries: np.ndarray
    frame_rotations: np.ndarray
    arrival_rotations: np.ndarray
    parameters: dict = dataclasses.field(default_factory=dict)
    label: str = None

    def __post_init__(self):
        if self.label is None:
            object.__setattr__(self, 'label', self.kind)

    def check_grid(self, grid):
        """Raises ScheduleMismatchError unless the schedule was built for grid."""
        if grid != self.grid:
            raise ScheduleMismatchError('Schedule built for {} used with {}.'.format(
                self.grid, grid))

    def step_propagators(self, model, x):
        """Controlled step propagators at parameter values x (control held fixed)."""
        fields = model.field(parameter_values(x), self.grid.midpoints) + self.control_fields
        return numerics.su2_exp(fields, self.grid.dt) @ self.pulses[:-1]

    def consistency_residual(self):
        """Largest deviation between the stored frames and those implied by step_unitaries."""
        propagators = _cumulative(self.step_unitaries)
        frames = numerics.so3_from_su2(np.conj(np.swapaxes(propagators, -1, -2)))
        return float(np.max(np.abs(frames - self.arrival_rotations)))


def _cumulative(step_unitaries):
    """Propagators P[0] = I, P[k + 1] = S[k] P[k]."""
    propagators = np.empty((len(step_unitaries) + 1, 2, 2), dtype=complex)
    propagators[0] = numerics.IDENTITY2
    for k, step in enumerate(step_unitaries):
        propagators[k + 1] = step @ propagators[k]
    return propagators


def _dagger(u):
    return np.conj(np.swapaxes(u, -1, -2))


def assemble_schedule(kind, model, x, grid, control_fields, pulses=None, parameters=None,
                      label=None):
    """Builds a ControlSchedule from control fields and node pulses.

    Frames are computed by propagating the controlled dynamics at x.

    Args:
        kind: Control family name.
        model: FieldModel.
        x: Design point (ParameterPoint or array).
        grid: TimeGrid.
        control_fields: Array of shape (steps, 3).
        pulses: Optional array of shape (steps + 1, 2, 2); identity if omitted.
        parameters: Replay description stored on the schedule.
        label: Report label.
    """
    x0 = parameter_values(x)
    control_fields = numerics.as_vec3(control_fields)
    if pulses is None:
        pulses = np.broadcast_to(numerics.IDENTITY2, (grid.steps + 1, 2, 2)).copy()
    pulses = np.array(pulses, dtype=complex)
    pulses[0] = pulses[-1] = numerics.IDENTITY2

    evolutions = numerics.su2_exp(model.field(x0, grid.midpoints) + control_fields, grid.dt)
    step_unitaries = evolutions @ pulses[:-1]
    arriving = _cumulative(step_unitaries)
    leaving = pulses @ arriving

    return ControlSchedule(
        kind=kind,
        grid=grid,
        design_point=x0,
        control_fields=control_fields,
        pulses=pulses,
        step_unitaries=step_unitaries,
        frame_rotations=numerics.so3_from_su2(_dagger(leaving)),
        arrival_rotations=numerics.so3_from_su2(_dagger(arriving)),
        parameters=dict(parameters or {}),
        label=label,
    )


def schedule_from_frames(kind, model, x, grid, frames, arrival_frames=None, parameters=None,
                         label=None):
    """Synthesizes the control that realizes a prescribed path of Heisenberg frames.

    The frames are lifted to SU(2); the propagator of every step is the SU(2) step between
    consecutive frames, its logarithm minus the free field gives the control field, and a
    pulse is inserted wherever the arriving and leaving frames of a node differ.

    Args:
        kind: Control family name.
        model: FieldModel.
        x: Design point.
        grid: TimeGrid.
        frames: Frames leaving each node, shape (steps + 1, 3, 3); frames[0] must be I.
        arrival_frames: Frames arriving at each node; equal to frames if omitted.
        parameters: Replay description stored on the schedule.
        label: Report label.
    """
    frames = np.asarray(frames, dtype=float)
    arrival_frames = frames if arrival_frames is None else np.asarray(arrival_frames, dtype=float)
    if frames.shape != (grid.steps + 1, 3, 3) or arrival_frames.shape != frames.shape:
        raise ScheduleMismatchError('Expected {} frames, got {}.'.format(
            grid.steps + 1, frames.shape[0]))

    # R = SO(3)(P^dagger), so the lifted frame is P^dagger
    leaving = _dagger(numerics.su2_from_so3(frames))
    jumps = np.any(frames != arrival_frames, axis=(-2, -1))
    arriving = leaving.copy()
    arriving[jumps] = _dagger(numerics.su2_from_so3(arrival_frames[jumps]))

    steps = arriving[1:] @ _dagger(leaving[:-1])
    x0 = parameter_values(x)
    fields = numerics.su2_log(steps) / grid.dt - model.field(x0, grid.midpoints)

    pulses = np.broadcast_to(numerics.IDENTITY2, (grid.steps + 1, 2, 2)).copy()
    pulses[jumps] = leaving[jumps] @ _dagger(arriving[jumps])
    logger.debug('%s schedule: %d pulses', kind, int(np.count_nonzero(jumps[1:-1])))
    return assemble_schedule(kind, model, x0, grid, fields, pulses, parameters, label)


def build_schedule(kind, model, x, grid, omega=None, index=0, weights=None):
    """Builds one of the standard control schedules.

    Args:
        kind: One of none, time_reversal, dc, ac, planar_optimal, single_param.
        model: FieldModel.
        x: Design point.
        grid: TimeGrid.
        omega: Rotation rate of the ac control; defaults to the model's omega parameter.
        index: Parameter index of the single_param control.
        weights: Estimation weights of the planar_optimal control.

    Raises:
        UnknownControlError: kind is not recognized, or ac is requested without a rate.
    """
    x0 = parameter_values(x)
    free = model.field(x0, grid.midpoints)

    if kind == 'none':
        return assemble_schedule(kind, model, x0, grid, np.zeros_like(free))
    if kind in ('time_reversal', 'dc'):
        return assemble_schedule(kind, model, x0, grid, -free)
    if kind == 'ac':
        if omega is None:
            if 'omega' not in model.param_names:
                raise UnknownControlError('The ac control needs a rotation rate omega.')
            omega = x0[model.param_names.index('omega')]
        # H_c = -H_x - (omega / 2) sigma_y
        fields = -free - np.array([0.0, omega / 2, 0.0])
        return assemble_schedule(kind, model, x0, grid, fields, parameters={'omega': omega},
                                 label='ac({})'.format(omega))

    # the optimal controls live in control, which builds on this module
    from metrocontrol import control

    if kind == 'planar_optimal':
        return control.planar_optimal_schedule(model, x0, grid, weights)
    if kind == 'single_param':
        return control.single_param_schedule(model, x0, grid, index)
    raise UnknownControlError('Unknown control kind {}; choose one of {}.'.format(
        kind, ', '.join(SCHEDULE_KINDS)))


def velocities(model, x, grid):
    """Instantaneous velocities V_i(t_k) = dF/dx_i, shape (n_params, steps + 1, 3).

    Raises:
        NonFiniteError: The model produced non-finite values.
    """
    values = np.asarray(model.gradient(parameter_values(x), grid.times), dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError('Model {} has non-finite gradients on the grid.'.format(model.name))
    return values


def propagate_free(model, x, grid):
    """Free propagators U[0] = I, U[k + 1] = su2_exp(F(x, t_k + dt/2), dt) U[k]."""
    fields = model.field(parameter_values(x), grid.midpoints)
    return _cumulative(numerics.su2_exp(fields, grid.dt))


@dataclasses.dataclass(frozen=True, eq=False)
class GeneratorVector:
    """Generator S = s.sigma of one parameter, stored as the 3-vector s."""

    s: np.ndarray
    param_index: int

    @property
    def operator(self):
        return np.einsum('j,jab->ab', self.s, numerics.PAULI)


def accumulate(velocity_field, frames, arrival_frames, dt):
    """Trapezoid integral of R(t) V_i(t) with separate leaving and arriving frames.

    Args:
        velocity_field: Array of shape (n, steps + 1, 3).
        frames: Leaving frames, shape (steps + 1, 3, 3).
        arrival_frames: Arriving frames, same shape.
        dt: Grid spacing.

    Returns:
        Array of shape (n, 3).
    """
    leaving = np.einsum('kab,ikb->ia', frames[:-1], velocity_field[:, :-1])
    arriving = np.einsum('kab,ikb->ia', arrival_frames[1:], velocity_field[:, 1:])
    return dt / 2 * (leaving + arriving)


def generators(velocity_field, schedule, grid):
    """Generator vectors for every parameter.

    Raises:
        ScheduleMismatchError: schedule was built for another grid.
    """
    schedule.check_grid(grid)
    if velocity_field.shape[1] != grid.steps + 1:
        raise ScheduleMismatchError('Velocities have {} nodes, grid has {}.'.format(
            velocity_field.shape[1], grid.steps + 1))
    vectors = accumulate(velocity_field, schedule.frame_rotations,
                         schedule.arrival_rotations, grid.dt)
    return [GeneratorVector(vector, i) for i, vector in enumerate(vectors)]


def generator(velocity_field, schedule, grid, i):
    """Generator vector s_i = integral of R(t) V_i(t) dt."""
    single = generators(velocity_field[i:i + 1], schedule, grid)[0]
    return GeneratorVector(single.s, i)


@dataclasses.dataclass(frozen=True, eq=False)
class TwoQubitState:
    """Pure probe-ancilla state, amplitudes ordered |0p0a>, |0p1a>, |1p0a>, |1p1a>."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1) > 1e-10:
            raise ValueError('State is not normalized (norm {}).'.format(norm))
        object.__setattr__(self, 'amplitudes', amplitudes)

    @classmethod
    def maximally_entangled(cls):
        return cls(np.array([1, 0, 0, 1]) / np.sqrt(2))

    @classmethod
    def product(cls, probe, ancilla):
        return cls(np.kron(np.asarray(probe, dtype=complex), np.asarray(ancilla, dtype=complex)))

    def probe_bloch(self):
        """Bloch vector <sigma (x) I> of the probe's reduced state."""
        psi = self.amplitudes.reshape(2, 2)
        reduced = psi @ np.conj(psi.T)
        return np.real(np.einsum('jab,ba->j', numerics.PAULI, reduced))


def evolve_entangled(model, x, grid, schedule):
    """Final state (P (x) I)|phi_0> of the maximally entangled probe under the schedule.

    Raises:
        ScheduleMismatchError: schedule was built for another grid.
    """
    schedule.check_grid(grid)
    total = numerics.chain_product(schedule.step_propagators(model, x))
    return TwoQubitState(total.reshape(4) / np.sqrt(2))
