import json
import os

import pytest

from metrocontrol import config
from metrocontrol.errors import ConfigurationError, InvalidGridError, UnknownModelError

CONFIG_DIR = os.path.join(os.path.dirname(os.path.realpath(__file__)), '..', 'configs')


def base(**overrides):
    data = {'scenario': 'two_frequency', 'grid': {'t_max': 1.0}}
    data.update(overrides)
    return data


def test_defaults():
    scenario = config.validate(base())
    assert scenario.point.values.tolist() == [1.5, 1.0]
    assert scenario.point.weights.tolist() == [1.0, 1.0]
    assert scenario.steps == 4000
    assert scenario.control == config.ControlSpec('planar_optimal')
    assert scenario.compare == (scenario.control,)
    assert scenario.fd_step is None
    assert scenario.perturbation == 1e-3


def test_scenario_defaults_for_x():
    assert config.validate(base(scenario='dc')).point.values.tolist() == [1.0, 0.5]
    assert config.validate(base(scenario='ac')).point.values.tolist() == [1.0, 2.0]


@pytest.mark.parametrize('text, expected', [
    ('none', config.ControlSpec('none')),
    ('single_param(1)', config.ControlSpec('single_param', index=1)),
    ('brute_force(16,4,3)', config.ControlSpec('brute_force', segments=16, restarts=4, seed=3)),
    ({'kind': 'ac', 'omega': 1.5}, config.ControlSpec('ac', omega=1.5)),
])
def test_control_spec_parse(text, expected):
    assert config.ControlSpec.parse(text) == expected


def test_control_labels():
    assert config.ControlSpec.parse('brute_force(16,4,3)').label == 'brute_force(16,4,3)'
    assert config.ControlSpec.parse('single_param(0)').label == 'single_param(0)'
    assert config.ControlSpec('ac', omega=1.5).label == 'ac(1.5)'
    with pytest.raises(ConfigurationError):
        config.ControlSpec.parse('dc(3)')


@pytest.mark.parametrize('data', [
    base(colour='blue'),
    base(grid={'t_max': 1.0, 'dt': 0.1}),
    base(grid={'t_max': -1.0}),
    base(grid={'t_max': 1.0, 'steps': 1}),
    base(scenario='quadrupole'),
    base(control='single_param'),
    base(control={'kind': 'brute_force', 'segments': 65}),
    base(weights=[1.0, -1.0]),
    base(sweep=[]),
])
def test_schema_violations(data):
    with pytest.raises(ConfigurationError) as info:
        config.validate(data)
    assert info.value.errors


def test_every_schema_violation_is_reported():
    with pytest.raises(ConfigurationError) as info:
        config.validate({'scenario': 'dc', 'colour': 'blue', 'fd_step': -1})
    assert len(info.value.errors) == 3


@pytest.mark.parametrize('data', [
    base(x=[1.0]),
    base(weights=[1.0, 1.0, 1.0]),
    base(weights=[0.0, 0.0]),
    base(sweep=[1.0, 0.5]),
    base(control='single_param(2)'),
    base(scenario='dc', control='ac'),
    base(model='metrocontrol.dynamics:DcField'),
    base(scenario='custom'),
])
def test_semantic_violations(data):
    with pytest.raises(ConfigurationError):
        config.validate(data)


def test_custom_model():
    scenario = config.validate(base(scenario='custom', model='metrocontrol.dynamics:AcField',
                                    x=[0.5, 3.0], control='ac'))
    assert scenario.model.name == 'ac'
    with pytest.raises(UnknownModelError):
        config.validate(base(scenario='custom', model='metrocontrol.nowhere:Field', x=[1.0]))


def test_sweep_grids():
    scenario = config.validate(base(sweep=[0.25, 0.5]))
    assert scenario.grid(0.25).steps == 1000
    pinned = config.validate(base(grid={'t_max': 1.0, 'steps': 200}, sweep=[0.25, 0.5]))
    assert pinned.grid(0.25).steps == 200
    assert pinned.grid().t_max == 1.0


def test_load_config(tmp_path, write_config):
    scenario = config.load_config(write_config(base(control='time_reversal')))
    assert scenario.control.kind == 'time_reversal'

    broken = tmp_path / 'broken.json'
    broken.write_text('{"scenario": ')
    with pytest.raises(ConfigurationError):
        config.load_config(str(broken))
    with pytest.raises(ConfigurationError):
        config.load_config(str(tmp_path / 'missing.json'))


def test_shipped_configs_are_valid():
    for name in ('dc', 'ac', 'two_frequency', 'two_frequency_sweep'):
        config.load_config(os.path.join(CONFIG_DIR, '{}.json'.format(name)))


def test_schema_is_bundled_with_the_package():
    schema = config.load_schema()
    assert schema['additionalProperties'] is False
    json.dumps(schema)


def test_invalid_grid_is_a_configuration_error():
    assert issubclass(InvalidGridError, ConfigurationError)
