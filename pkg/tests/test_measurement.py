import numpy as np
import pytest

from metrocontrol import dynamics
from metrocontrol import measurement
from metrocontrol import qfim
from metrocontrol.utils import numerics

SCENARIOS = [('dc', 'dc'), ('dc', 'none'), ('ac', 'ac'), ('two_frequency', 'planar_optimal'),
             ('two_frequency', 'time_reversal')]


def scenario_generators(name, kind, grid):
    model = dynamics.get_model(name)
    x = np.array(model.defaults)
    schedule = dynamics.build_schedule(kind, model, x, grid)
    velocity_field = dynamics.velocities(model, x, grid)
    return model, x, schedule, dynamics.generators(velocity_field, schedule, grid)


def random_states(count, seed=0):
    rng = np.random.default_rng(seed)
    amplitudes = rng.standard_normal((count, 4)) + 1j * rng.standard_normal((count, 4))
    amplitudes /= np.linalg.norm(amplitudes, axis=1, keepdims=True)
    return [dynamics.TwoQubitState(vector) for vector in amplitudes]


def test_bell_bases_are_orthonormal():
    basis = measurement.bell_basis()
    np.testing.assert_allclose(basis.vectors.conj() @ basis.vectors.T, np.eye(4), atol=1e-15)
    rotated = measurement.rotated_bell_basis(numerics.su2_exp([0.3, -0.2, 0.9], 1.0),
                                             numerics.IDENTITY2)
    assert rotated.name == 'rotated_bell'
    with pytest.raises(ValueError):
        measurement.MeasurementBasis(np.ones((4, 4)), 'degenerate')


def test_maximally_entangled_state_is_a_bell_outcome():
    probabilities = measurement.outcome_probabilities(
        dynamics.TwoQubitState.maximally_entangled(), measurement.bell_basis())
    np.testing.assert_allclose(probabilities, [1.0, 0.0, 0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize('name, kind', SCENARIOS)
def test_weak_commutation_vanishes_on_the_entangled_probe(grid, name, kind):
    _, _, _, gens = scenario_generators(name, kind, grid)
    np.testing.assert_allclose(measurement.weak_commutation(gens), np.zeros((2, 2)), atol=1e-12)


def test_weak_commutation_on_a_polarized_probe(grid):
    _, _, _, gens = scenario_generators('two_frequency', 'time_reversal', grid)
    probe = dynamics.TwoQubitState.product(np.array([1.0, 1.0j]) / np.sqrt(2), [1.0, 0.0])
    matrix = measurement.weak_commutation(gens, probe)
    np.testing.assert_allclose(matrix, -matrix.T, atol=1e-15)
    assert abs(matrix[0, 1]) > 1e-3


def test_probe_variance_is_largest_on_the_entangled_probe(grid):
    _, _, _, gens = scenario_generators('two_frequency', 'planar_optimal', grid)
    for gen in gens:
        entangled = measurement.probe_variance(gen)
        assert entangled == pytest.approx(gen.s @ gen.s)
        for state in random_states(1000):
            assert measurement.probe_variance(gen, state) <= entangled + 1e-12


@pytest.mark.parametrize('name, kind', SCENARIOS)
def test_cfim_is_bounded_by_qfim(name, kind):
    grid = dynamics.TimeGrid(1.0, 500)
    model, x, schedule, _ = scenario_generators(name, kind, grid)
    J = qfim.qfim_from_state(model, x, grid, schedule)
    report = measurement.cfim(model, x, grid, schedule)
    assert report.basis == 'bell'
    assert report.p.sum() == pytest.approx(1.0)
    assert np.linalg.eigvalsh(J - report.I)[0] >= -1e-6 * np.linalg.norm(J, 2)


def test_cfim_of_a_stationary_bell_state():
    grid = dynamics.TimeGrid(1.0, 100)
    model, x, schedule, _ = scenario_generators('dc', 'dc', grid)
    report = measurement.cfim(model, x, grid, schedule)
    assert report.divergent == ()
    np.testing.assert_allclose(report.I, np.zeros((2, 2)), atol=1e-6)
    assert set(report.as_dict()) == {'I', 'basis', 'p'}


def test_cfim_in_a_rotated_basis(grid):
    model, x, schedule, _ = scenario_generators('two_frequency', 'planar_optimal', grid)
    basis = measurement.rotated_bell_basis(numerics.su2_exp([0.0, 0.4, 0.0], 1.0),
                                           numerics.IDENTITY2, 'tilted')
    report = measurement.cfim(model, x, grid, schedule, basis)
    J = qfim.qfim_from_state(model, x, grid, schedule)
    assert report.basis == 'tilted'
    assert np.linalg.eigvalsh(J - report.I)[0] >= -1e-6 * np.linalg.norm(J, 2)
