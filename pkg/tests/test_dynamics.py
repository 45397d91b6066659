import numpy as np
import pytest

from metrocontrol import dynamics
from metrocontrol import qfim
from metrocontrol.errors import (InvalidGridError, InvalidWeightsError, NonFiniteError,
                                 ScheduleMismatchError, UnknownControlError, UnknownModelError)
from metrocontrol.utils import numerics

CONTROLS = {
    'dc': ['none', 'dc', 'planar_optimal', 'single_param'],
    'ac': ['none', 'time_reversal', 'ac', 'planar_optimal', 'single_param'],
    'two_frequency': ['none', 'time_reversal', 'planar_optimal', 'single_param'],
}


def test_registry_lists_builtin_models():
    assert {'dc', 'ac', 'two_frequency'} <= set(dynamics.MODELS)
    assert dynamics.get_model('ac').param_names == ('B', 'omega')
    with pytest.raises(UnknownModelError):
        dynamics.get_model('quadrupole')


def test_load_model_by_import_path():
    model = dynamics.load_model('metrocontrol.dynamics:TwoFrequencyField')
    assert model.name == 'two_frequency'
    with pytest.raises(UnknownModelError):
        dynamics.load_model('metrocontrol.dynamics:TimeGrid')
    with pytest.raises(UnknownModelError):
        dynamics.load_model('no_colon_here')


@pytest.mark.parametrize('name', ['dc', 'ac', 'two_frequency'])
def test_closed_form_gradients_match_finite_differences(name):
    model = dynamics.get_model(name)
    x = np.array(model.defaults)
    times = np.linspace(0.0, 2.0, 9)
    fallback = dynamics.FieldModel.gradient(model, x, times)
    np.testing.assert_allclose(model.gradient(x, times), fallback, atol=1e-8)


def test_time_grid_validation():
    grid = dynamics.TimeGrid(0.5, 4)
    assert grid.dt == 0.125
    np.testing.assert_allclose(grid.midpoints, [0.0625, 0.1875, 0.3125, 0.4375])
    assert grid.refined().steps == 8
    assert dynamics.TimeGrid.with_default_steps(1.25).steps == 5000
    with pytest.raises(InvalidGridError):
        dynamics.TimeGrid(0.0, 10)
    with pytest.raises(InvalidGridError):
        dynamics.TimeGrid(1.0, 1)


def test_parameter_point_validation():
    point = dynamics.ParameterPoint([1.0, 2.0])
    np.testing.assert_array_equal(point.weights, [1.0, 1.0])
    with pytest.raises(InvalidWeightsError):
        dynamics.ParameterPoint([1.0, 2.0], [1.0, -1.0])
    with pytest.raises(InvalidWeightsError):
        dynamics.ParameterPoint([1.0, 2.0], [0.0, 0.0])
    with pytest.raises(NonFiniteError):
        dynamics.ParameterPoint([np.inf, 2.0])


def test_dc_control_freezes_frames(grid):
    model = dynamics.get_model('dc')
    schedule = dynamics.build_schedule('dc', model, [1.0, 0.5], grid)
    np.testing.assert_allclose(schedule.frame_rotations,
                               np.broadcast_to(np.eye(3), (grid.steps + 1, 3, 3)), atol=1e-12)
    gens = dynamics.generators(dynamics.velocities(model, [1.0, 0.5], grid), schedule, grid)
    np.testing.assert_allclose(qfim.qfim_from_generators(gens), 4 * np.eye(2), atol=1e-10)


def test_free_evolution_frames_follow_propagators(grid):
    model = dynamics.get_model('dc')
    schedule = dynamics.build_schedule('none', model, [1.0, 0.5], grid)
    propagators = dynamics.propagate_free(model, [1.0, 0.5], grid)
    expected = numerics.so3_from_su2(np.conj(np.swapaxes(propagators, -1, -2)))
    np.testing.assert_allclose(schedule.frame_rotations, expected, atol=1e-12)


def test_ac_control_locks_the_amplitude_velocity(grid):
    model = dynamics.get_model('ac')
    x = [1.0, 2.0]
    schedule = dynamics.build_schedule('ac', model, x, grid)
    assert schedule.label == 'ac(2.0)'
    velocity_field = dynamics.velocities(model, x, grid)
    rotated = np.einsum('kab,kb->ka', schedule.frame_rotations, velocity_field[0])
    np.testing.assert_allclose(rotated, np.broadcast_to(rotated[0], rotated.shape), atol=1e-9)


def test_ac_control_needs_a_rate(grid):
    with pytest.raises(UnknownControlError):
        dynamics.build_schedule('ac', dynamics.get_model('dc'), [1.0, 0.5], grid)
    with pytest.raises(UnknownControlError):
        dynamics.build_schedule('bang_bang', dynamics.get_model('dc'), [1.0, 0.5], grid)


def test_frame_synthesis_reproduces_prescribed_frames(grid, two_frequency):
    angles = 0.8 * np.sin(3 * grid.times)
    frames = numerics.rotation([0.0, 1.0, 0.0], angles)
    schedule = dynamics.schedule_from_frames('custom', two_frequency, [1.5, 1.0], grid, frames)
    np.testing.assert_allclose(schedule.frame_rotations, frames, atol=1e-9)
    assert schedule.consistency_residual() < 1e-9


def test_frame_synthesis_inserts_pulses(grid, two_frequency):
    frames = np.broadcast_to(np.eye(3), (grid.steps + 1, 3, 3)).copy()
    arriving = frames.copy()
    flip = numerics.rotation([0.0, 1.0, 0.0], np.pi)
    frames[500:] = flip
    arriving[501:] = flip
    schedule = dynamics.schedule_from_frames('custom', two_frequency, [1.5, 1.0], grid, frames,
                                             arriving)
    np.testing.assert_allclose(schedule.frame_rotations[500], flip, atol=1e-9)
    np.testing.assert_allclose(schedule.arrival_rotations[500], np.eye(3), atol=1e-9)
    assert numerics.unitarity_residual(schedule.pulses) < 1e-12
    assert not np.allclose(schedule.pulses[500], np.eye(2))


@pytest.mark.parametrize('name, kind', [(name, kind) for name, kinds in CONTROLS.items()
                                        for kind in kinds])
def test_generator_qfim_matches_state_qfim(name, kind):
    model = dynamics.get_model(name)
    x = np.array(model.defaults)
    grid = dynamics.TimeGrid(1.0, 1000)
    schedule = dynamics.build_schedule(kind, model, x, grid)
    J = qfim.qfim_from_generators(dynamics.generators(dynamics.velocities(model, x, grid),
                                                      schedule, grid))
    J_state = qfim.qfim_from_state(model, x, grid, schedule)
    h = float(np.max(qfim.default_step(x)))
    np.testing.assert_allclose(J, J_state, atol=max(1e-4, 10 * h ** 2))


def test_generator_selects_one_parameter(grid, two_frequency):
    schedule = dynamics.build_schedule('time_reversal', two_frequency, [1.5, 1.0], grid)
    velocity_field = dynamics.velocities(two_frequency, [1.5, 1.0], grid)
    single = dynamics.generator(velocity_field, schedule, grid, 1)
    assert single.param_index == 1
    np.testing.assert_allclose(single.s, dynamics.generators(velocity_field, schedule, grid)[1].s)
    np.testing.assert_allclose(single.operator, single.operator.conj().T)


def test_schedule_rejects_other_grids(grid, two_frequency):
    schedule = dynamics.build_schedule('none', two_frequency, [1.5, 1.0], grid)
    with pytest.raises(ScheduleMismatchError):
        dynamics.evolve_entangled(two_frequency, [1.5, 1.0], grid.refined(), schedule)


def test_evolved_state_is_normalized(grid, two_frequency):
    schedule = dynamics.build_schedule('planar_optimal', two_frequency, [1.5, 1.0], grid)
    state = dynamics.evolve_entangled(two_frequency, [1.5, 1.0], grid, schedule)
    assert np.linalg.norm(state.amplitudes) == pytest.approx(1.0)
    np.testing.assert_allclose(dynamics.TwoQubitState.maximally_entangled().probe_bloch(),
                               np.zeros(3), atol=1e-15)


def test_product_state_bloch_vector():
    state = dynamics.TwoQubitState.product([1.0, 0.0], [0.0, 1.0])
    np.testing.assert_allclose(state.probe_bloch(), [0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        dynamics.TwoQubitState([1.0, 1.0, 0.0, 0.0])


def test_generators_converge_quadratically(two_frequency):
    def moments(steps):
        grid = dynamics.TimeGrid(1.0, steps)
        schedule = dynamics.build_schedule('time_reversal', two_frequency, [1.5, 1.0], grid)
        velocity_field = dynamics.velocities(two_frequency, [1.5, 1.0], grid)
        return np.array([g.s for g in dynamics.generators(velocity_field, schedule, grid)])

    coarse, middle, fine = moments(100), moments(200), moments(400)
    for i in range(2):
        ratio = (np.linalg.norm(coarse[i] - middle[i]) / np.linalg.norm(middle[i] - fine[i]))
        assert 3.5 <= ratio <= 4.5


@pytest.mark.parametrize('scale', [2.5, -0.3])
def test_generators_are_linear_in_the_velocities(grid, two_frequency, scale):
    schedule = dynamics.build_schedule('planar_optimal', two_frequency, [1.5, 1.0], grid)
    velocity_field = dynamics.velocities(two_frequency, [1.5, 1.0], grid)
    base = dynamics.generators(velocity_field, schedule, grid)
    scaled = dynamics.generators(scale * velocity_field, schedule, grid)
    for original, stretched in zip(base, scaled):
        np.testing.assert_allclose(stretched.s, scale * original.s, rtol=1e-12, atol=1e-15)
