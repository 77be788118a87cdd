"""Fixed-step simulation and the soundness check against the abstraction.

Every concrete trajectory, discretized into the rectangles it passes
through, must be a path of the abstraction. Violations mean a bug.
"""

import bisect
import csv
import io
import itertools
import logging
from dataclasses import dataclass, field
import numpy as np
from . import settings
from .errors import IntegrationError, ModelError, StepTooCoarse
from .partition import corner_offsets
from .rats import generate_reachable, prepare_model
logger = logging.getLogger(__name__)


@dataclass
class Trajectory:

    times: np.ndarray
    points: np.ndarray
    step: float
    duration: float
    escaped: bool = False

    @property
    def samples(self):
        return list(zip(self.times, self.points))

    def __len__(self):
        return len(self.times)


@dataclass
class SoundnessReport:

    samples: int = 0
    violations: list = field(default_factory=list)
    maxima: dict = field(default_factory=dict)
    escaped: int = 0
    step: float = None

    @property
    def sound(self):
        return not self.violations


def _check_step(step, duration):
    if not step > 0:
        raise ModelError(f'integration step must be positive, got {step}')
    if duration < step:
        raise ModelError(f'duration {duration} is shorter than the step '
                         f'{step}')


def integrate_rk4_batch(system, starts, step, duration, bounds=None):
    """Classical RK4 for many start points at once. Returns (times, points,
    escape) where points has shape (steps + 1, samples, n) and escape holds,
    per sample, the index of the last sample inside the bounds or -1 when
    the sample never left them. Escaped samples are frozen at that sample.
    """
    _check_step(step, duration)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    steps = int(round(duration / step))
    points = np.empty((steps + 1,) + starts.shape)
    points[0] = starts
    escape = np.full(len(starts), -1)
    if bounds is not None:
        low = np.array([lo for lo, _ in bounds])
        high = np.array([hi for _, hi in bounds])
        slack = settings['grazing_tolerance'] * (high - low)
    x = starts.copy()
    active = np.ones(len(starts), dtype=bool)
    f = system.eval_many
    for k in range(1, steps + 1):
        if active.any():
            y = x[active]
            k1 = f(y)
            k2 = f(y + step / 2 * k1)
            k3 = f(y + step / 2 * k2)
            k4 = f(y + step * k3)
            y = y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.isfinite(y).all():
                raise IntegrationError(f'non-finite state at t = '
                                       f'{k * step:g}')
            if bounds is not None:
                outside = ((y < low - slack) | (y > high + slack)).any(axis=1)
                if outside.any():
                    rows = np.flatnonzero(active)[outside]
                    escape[rows] = k - 1
                    active[rows] = False
                    y = y[~outside]
            x[active] = y
        points[k] = x
    times = np.arange(steps + 1) * step
    return times, points, escape


def integrate_rk4(system, start, step, duration, bounds=None):
    times, points, escape = integrate_rk4_batch(system, [start], step,
                                                duration, bounds)
    if escape[0] >= 0:
        last = escape[0] + 1
        logger.debug(f'trajectory left the box after t = {times[last - 1]:g}')
        return Trajectory(times[:last], points[:last, 0], step, duration,
                          True)
    return Trajectory(times, points[:, 0], step, duration)


def default_step(system, partition):
    """Shortest slab width over ten times the largest derivative magnitude
    at the corners of the bounding box.
    """
    width = min(float(np.diff(values).min()) for values in
                partition.thresholds)
    bounds = np.array(partition.bounds)
    offsets = corner_offsets(partition.dim)
    corners = np.where(offsets == 1, bounds[:, 1], bounds[:, 0])
    speed = float(np.abs(system.eval_many(corners)).max())
    if speed == 0:
        return width
    return width / (10 * speed)


def _locate(values, x):
    j = bisect.bisect_right(values, x) - 1
    return min(max(j, 0), len(values) - 2)


def trajectory_to_path(trajectory, partition):
    """Rectangles visited by the samples, consecutive duplicates collapsed.
    A sample within the grazing tolerance of a boundary of the current
    rectangle stays in the current rectangle.
    """
    if len(trajectory) == 0:
        return []
    spans = [values[-1] - values[0] for values in partition.thresholds]
    slack = [settings['grazing_tolerance'] * span for span in spans]
    points = np.asarray(trajectory.points).tolist()
    current = [_locate(values, x) for values, x in
               zip(partition.thresholds, points[0])]
    path = [tuple(current)]
    for k, point in enumerate(points[1:], start=1):
        moved = False
        for i, (values, x) in enumerate(zip(partition.thresholds, point)):
            j = current[i]
            if values[j] - slack[i] <= x <= values[j + 1] + slack[i]:
                continue
            new = _locate(values, x)
            if abs(new - j) > 1:
                raise StepTooCoarse(k, i, abs(new - j))
            current[i] = new
            moved = True
        if moved:
            path.append(tuple(current))
    return path


def _is_path(rats, source, target):
    if rats.has_transition(source, target):
        return True
    changed = [i for i, (a, b) in enumerate(zip(source, target)) if a != b]
    if len(changed) < 2:
        return False
    for order in itertools.permutations(changed):
        current = source
        for i in order:
            step = list(current)
            step[i] = target[i]
            step = tuple(step)
            if not rats.has_transition(current, step):
                break
            current = step
        else:
            return True
    return False


def check_containment(path, rats, initial=True):
    """Violations of path containment. With ``initial`` the first rectangle
    must be a reachable state of the abstraction.
    """
    violations = []
    if not path:
        return violations
    states = rats.state_set()
    if initial and path[0] not in states:
        violations.append(f'start rectangle {path[0]} is not reachable')
    for source, target in zip(path, path[1:]):
        if not _is_path(rats, source, target):
            violations.append(f'no transition {source} -> {target}')
    return violations


def sample_init(model, count, rng):
    """Uniform start points, each in a uniformly chosen init region."""
    regions = np.array([region.intervals for region in model.init])
    choice = rng.integers(len(regions), size=count)
    low = regions[choice, :, 0]
    high = regions[choice, :, 1]
    return low + rng.random((count, model.system.dim)) * (high - low)


def scan_initial(model, sample_count, step=None, duration=1.0, rats=None,
                 options=None, seed=None):
    """Simulate from random init points and check every discretized
    trajectory against the abstraction.
    """
    report = SoundnessReport()
    if sample_count == 0:
        return report
    if not model.init:
        raise ModelError('the model has no init regions')
    if rats is None:
        rats = generate_reachable(prepare_model(model), options)
    partition = rats.partition
    step = step or default_step(model.system, partition)
    report.step = step
    rng = np.random.default_rng(seed)
    starts = sample_init(model, sample_count, rng)
    times, points, escape = integrate_rk4_batch(
        model.system, starts, step, duration, partition.bounds)
    report.samples = sample_count
    report.escaped = int((escape >= 0).sum())
    maxima = points.max(axis=(0, 1))
    report.maxima = dict(zip(model.variables, maxima.tolist()))
    for sample in range(sample_count):
        last = len(times) if escape[sample] < 0 else escape[sample] + 1
        trajectory = Trajectory(times[:last], points[:last, sample], step,
                                duration, escape[sample] >= 0)
        path = trajectory_to_path(trajectory, partition)
        for violation in check_containment(path, rats):
            report.violations.append(f'sample {sample}: {violation}')
    logger.info(f'{sample_count} trajectories, {len(report.violations)} '
                f'violations, {report.escaped} escaped')
    return report


def trajectory_to_csv(trajectory, variables):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(['t'] + list(variables))
    for t, point in zip(trajectory.times, trajectory.points):
        writer.writerow([repr(float(t))] + [repr(float(x)) for x in point])
    return out.getvalue()


def format_report(report):
    lines = [f'samples:     {report.samples}',
             f'violations:  {len(report.violations)}',
             f'escaped:     {report.escaped}']
    if report.step is not None:
        lines.append(f'step:        {report.step:g}')
    for name, value in report.maxima.items():
        lines.append(f'max {name}: {value:g}')
    lines += report.violations
    return '\n'.join(lines) + '\n'
