"""Output helpers: atomic file writes and stable number formatting."""

import json
import math
import os
import tempfile

import numpy as np


def format_number(value):
    """repr() of a float, with the token 'inf' for positive infinity."""
    value = float(value)
    if math.isinf(value) and value > 0:
        return 'inf'
    return repr(value)


def jsonable(value):
    """Converts numpy values and infinities into plain JSON types."""
    if isinstance(value, dict):
        return {key: jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return 'inf' if math.isinf(value) and value > 0 else float(value)
    return value


def dumps(data):
    return json.dumps(jsonable(data), indent=2, sort_keys=True) + '\n'


def atomic_write(path, text):
    """Writes text to path through a temporary file in the same directory.

    The destination is replaced in one rename, so it never holds partial output.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, temp_path = tempfile.mkstemp(dir=directory, prefix='.metrocontrol-', suffix='.tmp')
    try:
        with os.fdopen(handle, 'w', newline='') as temp_file:
            temp_file.write(text)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
