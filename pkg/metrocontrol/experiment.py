"""Scenario evaluation, sweeps and the verification battery

Classes:
    Evaluation: a schedule with its QFIM report and diagnostics
    SweepRow: one (t_max, control) row of a sweep
    CheckResult: outcome of one verification check
    Experiment: evaluates, sweeps and verifies a ScenarioConfig
"""

import concurrent.futures
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os

import appdirs
import numpy as np

from metrocontrol import control
from metrocontrol import dynamics
from metrocontrol import measurement
from metrocontrol import qfim
from metrocontrol.errors import NonPlanarError, ZeroVelocityError
from metrocontrol.utils import io as io_utils
from metrocontrol.utils import parallel

logger = logging.getLogger(__name__)

CACHE_FORMAT = 1


@dataclasses.dataclass(frozen=True, eq=False)
class Evaluation:
    """A control schedule on one grid with its QFIM report.

    Attributes:
        schedule: The ControlSchedule.
        report: QfimReport including the SVD lower bound.
        generators: GeneratorVector per parameter.
        diagnostics: Dict with is_diagonal and, for planar problems, minimal_gap_planar,
            discrepancy (weighted gap minus the minimal planar gap) and pairwise_residual.
    """

    schedule: dynamics.ControlSchedule
    report: qfim.QfimReport
    generators: list
    diagnostics: dict


@dataclasses.dataclass(frozen=True, eq=False)
class SweepRow:
    """One CSV row of a sweep."""

    t_max: float
    control: str
    J: np.ndarray
    J_opt: np.ndarray
    gap: float
    weighted_gap: float
    trace_crb: float
    svd_lower_bound: float

    @staticmethod
    def header(n):
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        return (['t_max', 'control']
                + ['J_{0}{0}'.format(i + 1) for i in range(n)]
                + ['J_{}{}'.format(i + 1, j + 1) for i, j in pairs]
                + ['Jopt_{}'.format(i + 1) for i in range(n)]
                + ['gap', 'weighted_gap', 'trace_crb', 'svd_lb'])

    def cells(self):
        n = len(self.J_opt)
        numbers = ([self.J[i, i] for i in range(n)]
                   + [self.J[i, j] for i in range(n) for j in range(i + 1, n)]
                   + list(self.J_opt)
                   + [self.gap, self.weighted_gap, self.trace_crb, self.svd_lower_bound])
        return ([io_utils.format_number(self.t_max), self.control]
                + [io_utils.format_number(value) for value in numbers])


@dataclasses.dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ''


class Experiment:
    """Evaluates one configured scenario.

    Instance attributes:
        config: The ScenarioConfig.
        cache_dir: Directory of cached brute-force schedules, or None if caching is off.
        workers: Thread cap for sweeps and brute-force restarts.

        _pool: Thread pool evaluating sweep points.
        _summaries: Per-grid data shared by every control, keyed by TimeGrid.

    Class attributes:
        storage_dir: Default cache directory.
    """

    APP_NAME = 'metrocontrol'
    SCHEDULE_DIR_NAME = 'schedules'
    storage_dir = appdirs.user_cache_dir(APP_NAME)

    def __init__(self, config, cache_dir=None, use_cache=True, workers=None):
        """Inits Experiment for a validated configuration.

        Raises:
            ConfigurationError: METROCONTROL_THREADS is malformed.
        """
        self.config = config
        self.workers = parallel.worker_count() if workers is None else workers
        if use_cache:
            self.cache_dir = os.path.join(cache_dir or self.storage_dir, self.SCHEDULE_DIR_NAME)
        else:
            self.cache_dir = None
        self._pool = concurrent.futures.ThreadPoolExecutor(max_workers=self.workers)
        self._summaries = {}

    def __enter__(self):
        """Enter the with statement"""
        return self

    def __exit__(self, exc_type, exc_value, exc_traceback):
        """Exit the with statement"""
        self.close()

    def close(self):
        """Shut down the worker pool"""
        self._pool.shutdown()

    @property
    def model(self):
        return self.config.model

    @property
    def point(self):
        return self.config.point

    def _cache_path(self, spec, grid):
        """Cache file of a brute-force schedule, keyed by everything it depends on."""
        key = {
            'format': CACHE_FORMAT,
            'model': self.config.source.get('model', self.config.scenario),
            'x': self.point.values.tolist(),
            'weights': self.point.weights.tolist(),
            'grid': [grid.t_max, grid.steps],
            'control': dataclasses.asdict(spec),
        }
        digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()
        return os.path.join(self.cache_dir, '{}.json'.format(digest))

    def _brute_force(self, spec, grid):
        path = self._cache_path(spec, grid) if self.cache_dir else None
        if path and os.path.isfile(path):
            logger.info('Using cached brute-force schedule %s', path)
            with open(path, 'r') as cache_file:
                data = json.load(cache_file)
            return control.schedule_from_dict(data, self.model, self.point.values, grid)

        result = control.brute_force_optimize(
            self.model, self.point, grid, segments=spec.segments, restarts=spec.restarts,
            seed=spec.seed, objective=spec.objective, workers=self.workers)
        if path:
            io_utils.atomic_write(path, io_utils.dumps(control.schedule_to_dict(result.schedule)))
        return result.schedule

    def schedule(self, spec, grid):
        """Builds the schedule described by a ControlSpec on grid."""
        if spec.kind == 'brute_force':
            return self._brute_force(spec, grid)
        if spec.kind == 'planar_optimal':
            return control.planar_optimal_schedule(self.model, self.point, grid)
        return dynamics.build_schedule(spec.kind, self.model, self.point.values, grid,
                                       omega=spec.omega, index=spec.index)

    def _grid_summary(self, grid):
        """Velocities, optima, SVD bound and planar data shared by every control on grid."""
        if grid not in self._summaries:
            self._summaries[grid] = self._summarize(grid)
        return self._summaries[grid]

    def _summarize(self, grid):
        velocity_field = dynamics.velocities(self.model, self.point, grid)
        weights = self.point.weights
        J_opt = qfim.single_param_optimum(velocity_field, grid)
        lower_bound = control.svd_lower_bound(velocity_field, grid, weights)
        try:
            frame = control.detect_plane(velocity_field)
        except (NonPlanarError, ZeroVelocityError):
            return velocity_field, J_opt, lower_bound, None, None
        return (velocity_field, J_opt, lower_bound, frame,
                qfim.minimal_gap_planar(frame, grid, weights))

    def evaluate(self, spec, grid=None, schedule=None):
        """Evaluates one control; builds its schedule unless one is given.

        Returns:
            Evaluation.
        """
        grid = self.config.grid() if grid is None else grid
        schedule = self.schedule(spec, grid) if schedule is None else schedule
        velocity_field, J_opt, lower_bound, frame, minimal_gap = self._grid_summary(grid)

        gens = dynamics.generators(velocity_field, schedule, grid)
        J = qfim.qfim_from_generators(gens)
        report = qfim.build_report(J, J_opt, self.point.weights, lower_bound)

        diagnostics = {'is_diagonal': qfim.is_diagonal(J)}
        if frame is not None:
            diagnostics['minimal_gap_planar'] = minimal_gap
            diagnostics['discrepancy'] = report.weighted_gap - minimal_gap
            if schedule.kind == 'planar_optimal':
                nodes = np.arange(grid.steps + 1)
                leaving = np.array(schedule.parameters['alpha'])
                for segment in schedule.parameters.get('segments', []):
                    leaving[nodes >= segment['start']] += segment.get('offset', 0.0)
                diagnostics['pairwise_residual'] = control.pairwise_residual(
                    frame, leaving, self.point.weights)
        return Evaluation(schedule, report, gens, diagnostics)

    def measure(self, schedule, grid=None, basis=None):
        grid = self.config.grid() if grid is None else grid
        return measurement.cfim(self.model, self.point.values, grid, schedule, basis,
                                self.config.fd_step)

    def run(self):
        """Evaluates the configured control.

        Returns:
            A tuple (payload, evaluation) where payload is the JSON-ready run report.
        """
        grid = self.config.grid()
        evaluation = self.evaluate(self.config.control, grid)
        information = self.measure(evaluation.schedule, grid)
        payload = {
            'scenario': self.config.scenario,
            'control': evaluation.schedule.label,
            'grid': {'t_max': grid.t_max, 'steps': grid.steps},
            'x': self.point.values,
            'weights': self.point.weights,
            'qfim': evaluation.report.as_dict(),
            'cfim': information.as_dict(),
            'diagnostics': dict(evaluation.diagnostics,
                                divergent_outcomes=list(information.divergent)),
        }
        return payload, evaluation

    def _sweep_row(self, item):
        t_max, spec = item
        report = self.evaluate(spec, self.config.grid(t_max)).report
        return SweepRow(t_max, spec.label, report.J, report.J_opt, report.gap,
                        report.weighted_gap, report.trace_crb, report.svd_lower_bound)

    def sweep_rows(self):
        """One SweepRow per (t_max, control), in sweep order then comparison order."""
        sweep = self.config.sweep or (self.config.t_max,)
        list(self._pool.map(self._grid_summary, [self.config.grid(t_max) for t_max in sweep]))
        items = [(t_max, spec) for t_max in sweep for spec in self.config.compare]
        return list(self._pool.map(self._sweep_row, items))

    def sweep_csv(self, rows=None):
        rows = self.sweep_rows() if rows is None else rows
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(SweepRow.header(self.model.n_params))
        for row in rows:
            writer.writerow(row.cells())
        return buffer.getvalue()

    def _refined_schedule(self, spec, schedule, grid):
        """The same control on a grid with twice the steps."""
        if spec.kind == 'brute_force':
            return control.schedule_from_dict(control.schedule_to_dict(schedule), self.model,
                                              self.point.values, grid)
        return self.schedule(spec, grid)

    def verify(self):
        """Runs the cross-method checks on the configured control.

        Returns:
            A list of CheckResult, in execution order.
        """
        grid = self.config.grid()
        spec = self.config.control
        values = self.point.values
        evaluation = self.evaluate(spec, grid)
        schedule, report = evaluation.schedule, evaluation.report
        J, J_opt = report.J, report.J_opt
        checks = []

        steps = qfim.finite_difference_steps(values, self.config.fd_step)
        J_state = qfim.qfim_from_state(self.model, values, grid, schedule, steps)
        tolerance = max(1e-4, 10 * float(np.max(steps)) ** 2)
        deviation = float(np.max(np.abs(J - J_state)))
        checks.append(CheckResult('qfim_cross_method', deviation <= tolerance, deviation,
                                  tolerance, 'generator vs finite-difference state QFIM'))

        refined = grid.refined()
        J_refined = qfim.qfim_from_generators(dynamics.generators(
            dynamics.velocities(self.model, values, refined),
            self._refined_schedule(spec, schedule, refined), refined))
        deviation = float(np.max(np.abs(J_refined - J)))
        tolerance = 1e-4 * float(np.sum(J_opt))
        checks.append(CheckResult('grid_refinement', deviation <= tolerance, deviation,
                                  tolerance, 'QFIM change when the step count doubles'))

        smallest = float(np.linalg.eigvalsh(J)[0])
        tolerance = -1e-9 * max(1.0, float(np.max(np.abs(J))))
        checks.append(CheckResult('qfim_psd', smallest >= tolerance, smallest, tolerance))

        excess = float(np.max(np.diagonal(J) - J_opt))
        tolerance = 1e-9 * max(1.0, float(np.max(J_opt)))
        checks.append(CheckResult('single_param_bound', excess <= tolerance, excess, tolerance,
                                  'J_ii minus its single-parameter optimum'))

        margin = report.weighted_gap - report.svd_lower_bound
        checks.append(CheckResult('bound_dominance', margin >= -1e-6, margin, -1e-6,
                                  'weighted gap minus the SVD lower bound'))

        information = self.measure(schedule, grid)
        smallest = float(np.linalg.eigvalsh(J_state - information.I)[0])
        tolerance = -1e-6 * float(np.linalg.norm(J_state, 2))
        detail = 'Bell basis'
        if information.divergent:
            detail += '; divergent outcomes {}'.format(list(information.divergent))
        checks.append(CheckResult('cfim_below_qfim', smallest >= tolerance, smallest,
                                  tolerance, detail))

        commutator = float(np.max(np.abs(measurement.weak_commutation(evaluation.generators))))
        scale = max(1.0, float(np.max([gen.s @ gen.s for gen in evaluation.generators])))
        checks.append(CheckResult('weak_commutation', commutator <= 1e-12 * scale, commutator,
                                  1e-12 * scale))

        if spec.kind == 'planar_optimal':
            stationarity = control.verify_stationarity(
                self.model, values, grid, self.point.weights, schedule,
                self.config.perturbation)
            checks.append(CheckResult('stationarity', stationarity.is_stationary,
                                      stationarity.first_order_residual, stationarity.threshold,
                                      'quadratic coefficient {:.6g}'.format(
                                          stationarity.quadratic_coefficient)))
        return checks
