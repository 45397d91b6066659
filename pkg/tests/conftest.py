import json

import numpy as np
import pytest

from metrocontrol import dynamics
from metrocontrol.experiment import Experiment


class HelicalField(dynamics.FieldModel):
    """Two-parameter field whose velocities span all three axes.

    Has no closed-form gradient, so the finite-difference default is used.
    """

    name = 'helical'
    param_names = ('a', 'b')
    formula = 'H = a t sigma_x + b t^2 sigma_y + a b t^3 sigma_z'
    defaults = (1.0, 1.0)

    def field(self, x, t):
        t = np.asarray(t, dtype=float)
        a, b = x
        return np.stack([a * t, b * t ** 2, a * b * t ** 3], axis=-1)


@pytest.fixture
def grid():
    return dynamics.TimeGrid(1.0, 1000)


@pytest.fixture
def two_frequency():
    return dynamics.get_model('two_frequency')


@pytest.fixture
def point():
    return dynamics.ParameterPoint([1.5, 1.0])


@pytest.fixture
def helical():
    return HelicalField()


@pytest.fixture(autouse=True)
def isolated_storage(tmp_path, monkeypatch):
    """Keeps brute-force caches out of the user's cache directory."""
    monkeypatch.setattr(Experiment, 'storage_dir', str(tmp_path / 'cache'))


@pytest.fixture
def write_config(tmp_path):
    def write(data, name='config.json'):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return str(path)
    return write
