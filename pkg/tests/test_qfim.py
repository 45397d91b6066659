import math

import numpy as np
import pytest

from metrocontrol import control
from metrocontrol import dynamics
from metrocontrol import qfim
from metrocontrol.errors import InvalidWeightsError, SignificanceError


def report_for(kind, model, x, grid):
    schedule = dynamics.build_schedule(kind, model, x, grid)
    velocity_field = dynamics.velocities(model, x, grid)
    J = qfim.qfim_from_generators(dynamics.generators(velocity_field, schedule, grid))
    return qfim.build_report(J, qfim.single_param_optimum(velocity_field, grid))


def test_dc_control_attains_both_optima():
    grid = dynamics.TimeGrid(1.5, 600)
    report = report_for('dc', dynamics.get_model('dc'), [1.0, 0.5], grid)
    np.testing.assert_allclose(report.J, 4 * 1.5 ** 2 * np.eye(2), atol=1e-9)
    assert report.gap == pytest.approx(0.0, abs=1e-8)
    assert report.trace_crb == pytest.approx(2 / (4 * 1.5 ** 2))


def test_ac_control_gap_is_a_discretization_error():
    grid = dynamics.TimeGrid.with_default_steps(1.0)
    report = report_for('ac', dynamics.get_model('ac'), [1.0, 2.0], grid)
    np.testing.assert_allclose(report.J_opt, [4.0, 1.0], rtol=1e-6)
    assert abs(report.gap) < 1e-4 * np.sum(report.J_opt)
    assert qfim.is_diagonal(report.J)


def test_time_reversal_two_frequency_values(two_frequency, grid):
    report = report_for('time_reversal', two_frequency, [1.5, 1.0], grid)
    np.testing.assert_allclose(report.J_opt, [1.0, 1.0], rtol=1e-6)
    assert np.trace(report.J) == pytest.approx(1.8276, abs=1e-3)


def test_single_param_optimum_is_four_times_squared_path_length():
    grid = dynamics.TimeGrid(2.0, 200)
    velocity_field = np.zeros((1, grid.steps + 1, 3))
    velocity_field[0, :, 2] = 3.0
    assert qfim.single_param_optimum(velocity_field, grid)[0] == pytest.approx(4 * 36.0)


def test_finite_difference_steps():
    np.testing.assert_allclose(qfim.finite_difference_steps([0.5, -20.0]), [1e-5, 2e-4])
    np.testing.assert_allclose(qfim.finite_difference_steps([0.5, 2.0], 1e-6), [1e-6, 1e-6])
    with pytest.raises(SignificanceError):
        qfim.finite_difference_steps([0.5, 2.0], 1e-10)


def test_state_qfim_is_symmetric_psd(two_frequency, grid):
    schedule = dynamics.build_schedule('none', two_frequency, [1.5, 1.0], grid)
    J = qfim.qfim_from_state(two_frequency, [1.5, 1.0], grid, schedule)
    np.testing.assert_array_equal(J, J.T)
    assert np.linalg.eigvalsh(J)[0] > -1e-9


def test_gap_weights():
    J = np.diag([1.0, 3.0])
    J_opt = np.array([2.0, 4.0])
    assert qfim.gap(J, J_opt) == pytest.approx(2.0)
    assert qfim.gap(J, J_opt, [0.5, 2.0]) == pytest.approx(2.5)
    with pytest.raises(InvalidWeightsError):
        qfim.gap(J, J_opt, [1.0, -1.0])


def test_trace_crb_is_infinite_for_singular_matrices():
    assert qfim.trace_crb(np.diag([2.0, 4.0])) == pytest.approx(0.75)
    assert qfim.trace_crb(np.ones((2, 2))) == math.inf
    assert qfim.trace_crb(np.zeros((2, 2))) == math.inf


def test_is_diagonal():
    assert qfim.is_diagonal(np.diag([1.0, 2.0]))
    assert not qfim.is_diagonal(np.array([[1.0, 0.1], [0.1, 2.0]]))


def test_report_dict_uses_inf_token():
    report = qfim.build_report(np.ones((2, 2)), np.array([2.0, 2.0]))
    data = report.as_dict()
    assert set(data) == {'J', 'J_opt', 'gap', 'weighted_gap', 'trace_crb', 'svd_lower_bound'}
    assert data['trace_crb'] == 'inf'
    restored = qfim.QfimReport.from_dict(data)
    assert restored.trace_crb == math.inf
    assert restored.gap == report.gap


def test_minimal_planar_gap_bounds_every_planar_control(two_frequency, grid):
    velocity_field = dynamics.velocities(two_frequency, [1.5, 1.0], grid)
    frame = control.detect_plane(velocity_field)
    minimal = qfim.minimal_gap_planar(frame, grid)
    for kind in ('time_reversal', 'single_param', 'planar_optimal'):
        assert report_for(kind, two_frequency, [1.5, 1.0], grid).gap >= minimal - 1e-9
