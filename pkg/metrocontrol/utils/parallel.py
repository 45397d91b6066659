"""Thread pool helpers honouring METROCONTROL_THREADS."""

import concurrent.futures
import os

from metrocontrol.errors import ConfigurationError

THREADS_VARIABLE = 'METROCONTROL_THREADS'


def worker_count():
    """Returns the worker cap from METROCONTROL_THREADS, defaulting to the CPU count.

    Raises:
        ConfigurationError: The variable is set but is not a positive integer.
    """
    value = os.environ.get(THREADS_VARIABLE)
    if value is None or not value.strip():
        return os.cpu_count() or 1
    try:
        count = int(value)
    except ValueError:
        count = 0
    if count < 1:
        raise ConfigurationError('{} must be a positive integer, got {!r}.'.format(
            THREADS_VARIABLE, value))
    return count


def parallel_map(func, items, workers=None):
    """Applies func to every item, returning results in input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))
