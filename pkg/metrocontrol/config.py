"""Experiment configuration files.

A configuration is a JSON document validated against config-schema.json, shipped next to
this module. Semantic checks that the schema cannot express (parameter counts, sweep order,
parameter indices) follow schema validation.
"""

import dataclasses
import json
import os
import re

import jsonschema

from metrocontrol import dynamics
from metrocontrol.errors import ConfigurationError

SCHEMA_NAME = 'config-schema.json'
script_dir = os.path.dirname(os.path.realpath(__file__))
schema_path = os.path.join(script_dir, SCHEMA_NAME)

CONTROL_PATTERN = re.compile(r'^(?P<kind>[a-z_]+)(\((?P<args>[0-9,]*)\))?$')
DEFAULT_SEGMENTS = 32
DEFAULT_RESTARTS = 8


def load_schema():
    with open(schema_path, 'r') as schema_file:
        return json.load(schema_file)


@dataclasses.dataclass(frozen=True)
class ControlSpec:
    """One control of an experiment.

    Attributes:
        kind: Control family.
        index: Parameter index of single_param.
        omega: Rotation rate of ac; None uses the model's omega parameter.
        segments, restarts, seed, objective: brute_force settings.
    """

    kind: str
    index: int = 0
    omega: float = None
    segments: int = DEFAULT_SEGMENTS
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0
    objective: str = 'gap'

    @classmethod
    def parse(cls, value):
        """Builds a ControlSpec from a control name like 'single_param(0)' or an object."""
        if isinstance(value, dict):
            return cls(**value)

        match = CONTROL_PATTERN.match(value)
        if match is None:
            raise ConfigurationError('Malformed control {!r}.'.format(value))
        kind = match.group('kind')
        args = [int(arg) for arg in (match.group('args') or '').split(',') if arg]
        if kind == 'single_param' and len(args) == 1:
            return cls(kind, index=args[0])
        if kind == 'brute_force' and len(args) == 3:
            return cls(kind, segments=args[0], restarts=args[1], seed=args[2])
        if args:
            raise ConfigurationError('Control {!r} takes no arguments.'.format(value))
        return cls(kind)

    @property
    def label(self):
        if self.kind == 'single_param':
            return 'single_param({})'.format(self.index)
        if self.kind == 'brute_force':
            return 'brute_force({},{},{})'.format(self.segments, self.restarts, self.seed)
        if self.kind == 'ac' and self.omega is not None:
            return 'ac({})'.format(self.omega)
        return self.kind


@dataclasses.dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Validated experiment configuration."""

    scenario: str
    model: dynamics.FieldModel
    point: dynamics.ParameterPoint
    t_max: float
    steps: int
    control: ControlSpec
    compare: tuple
    sweep: tuple
    fd_step: float
    perturbation: float
    output: str
    source: dict

    def grid(self, t_max=None):
        """Time grid for t_max (the configured one by default).

        Sweep points without an explicit step count use 4000 steps per unit time.
        """
        if t_max is None or t_max == self.t_max:
            return dynamics.TimeGrid(self.t_max, self.steps)
        if 'steps' in self.source['grid']:
            return dynamics.TimeGrid(t_max, self.steps)
        return dynamics.TimeGrid.with_default_steps(t_max)


def validate(data):
    """Validates raw configuration data and returns a ScenarioConfig.

    Raises:
        ConfigurationError: The data violates the schema or is inconsistent; errors lists
            every problem found.
    """
    validator = jsonschema.Draft7Validator(load_schema())
    problems = sorted(validator.iter_errors(data), key=lambda error: list(error.path))
    if problems:
        messages = ['{}: {}'.format('/'.join(str(part) for part in error.path) or '<root>',
                                    error.message) for error in problems]
        raise ConfigurationError('Invalid configuration: {}'.format(messages[0]), messages)

    scenario = data['scenario']
    if scenario == 'custom':
        if 'model' not in data or 'x' not in data:
            raise ConfigurationError('Custom scenarios need "model" and "x".')
        model = dynamics.load_model(data['model'])
    else:
        if 'model' in data:
            raise ConfigurationError('"model" is only allowed with the custom scenario.')
        model = dynamics.get_model(scenario)

    x = data.get('x', list(model.defaults))
    if len(x) != model.n_params:
        raise ConfigurationError('Scenario {} has {} parameters, got {} values.'.format(
            scenario, model.n_params, len(x)))
    weights = data.get('weights')
    if weights is not None and len(weights) != len(x):
        raise ConfigurationError('Expected {} weights, got {}.'.format(len(x), len(weights)))
    point = dynamics.ParameterPoint(x, weights)

    control = ControlSpec.parse(data.get('control', 'planar_optimal'))
    compare = tuple(ControlSpec.parse(item) for item in data.get('compare', [])) or (control,)
    for spec in (control,) + compare:
        if spec.kind == 'single_param' and spec.index >= model.n_params:
            raise ConfigurationError('single_param index {} out of range.'.format(spec.index))
        if spec.kind == 'ac' and spec.omega is None and 'omega' not in model.param_names:
            raise ConfigurationError('The ac control needs "omega" for scenario {}.'.format(
                scenario))

    sweep = tuple(data.get('sweep', ()))
    if any(later <= earlier for earlier, later in zip(sweep, sweep[1:])):
        raise ConfigurationError('Sweep values must be strictly ascending: {}'.format(list(sweep)))

    t_max = data['grid']['t_max']
    steps = data['grid'].get('steps', dynamics.TimeGrid.with_default_steps(t_max).steps)
    dynamics.TimeGrid(t_max, steps)

    return ScenarioConfig(
        scenario=scenario,
        model=model,
        point=point,
        t_max=float(t_max),
        steps=int(steps),
        control=control,
        compare=compare,
        sweep=sweep,
        fd_step=data.get('fd_step'),
        perturbation=data.get('perturbation', 1e-3),
        output=data.get('output'),
        source=data,
    )


def load_config(path):
    """Reads and validates a configuration file.

    Raises:
        ConfigurationError: The file cannot be read, is not JSON or is invalid.
    """
    try:
        with open(path, 'r') as config_file:
            data = json.load(config_file)
    except OSError as exc:
        raise ConfigurationError('Cannot read configuration {}: {}'.format(path, exc))
    except ValueError as exc:
        raise ConfigurationError('Configuration {} is not valid JSON: {}'.format(path, exc))
    return validate(data)
