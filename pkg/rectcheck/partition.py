"""Threshold partitions and rectangle geometry.

A rectangle is a plain tuple of interval indices, one per variable. Interval
``j`` of variable ``i`` spans ``thresholds[i][j]`` to ``thresholds[i][j + 1]``.
Vertices are always enumerated in binary-counting order with dimension 0 as
the least significant bit.
"""

import bisect
import itertools
import logging
from dataclasses import dataclass
import numpy as np
from . import settings
from .errors import ModelError
logger = logging.getLogger(__name__)

LOWER = 'lower'
UPPER = 'upper'


@dataclass(frozen=True)
class Partition:

    variables: tuple
    thresholds: tuple

    def __post_init__(self):
        object.__setattr__(self, 'variables', tuple(self.variables))
        object.__setattr__(self, 'thresholds',
                           tuple(tuple(float(v) for v in values)
                                 for values in self.thresholds))
        if not self.variables:
            raise ModelError('a partition needs at least one variable')
        if len(self.variables) != len(self.thresholds):
            raise ModelError(
                f'{len(self.variables)} variables but '
                f'{len(self.thresholds)} threshold lists')
        tol = settings['duplicate_tolerance']
        for name, values in zip(self.variables, self.thresholds):
            if len(values) < 2:
                raise ModelError(f'{name} needs at least two thresholds')
            for lo, hi in zip(values, values[1:]):
                if hi - lo <= tol:
                    raise ModelError(
                        f'thresholds of {name} are not strictly increasing '
                        f'({lo:g}, {hi:g})')

    @property
    def dim(self):
        return len(self.variables)

    @property
    def interval_counts(self):
        return tuple(len(values) - 1 for values in self.thresholds)

    @property
    def rectangle_count(self):
        return int(np.prod(self.interval_counts))

    @property
    def bounds(self):
        return tuple((values[0], values[-1]) for values in self.thresholds)

    def index(self, var):
        """Resolve a variable name or index to an index."""
        if isinstance(var, (int, np.integer)):
            if not 0 <= var < self.dim:
                raise ModelError(f'variable index {var} out of range')
            return int(var)
        try:
            return self.variables.index(var)
        except ValueError:
            raise ModelError(f'unknown variable {var}') from None

    def rectangles(self):
        return itertools.product(*(range(m) for m in self.interval_counts))

    def with_thresholds(self, var, values):
        i = self.index(var)
        thresholds = list(self.thresholds)
        thresholds[i] = tuple(values)
        return Partition(self.variables, thresholds)


@dataclass(frozen=True)
class Face:

    rectangle: tuple
    dim: int
    side: str


@dataclass(frozen=True)
class InitRegion:
    """A closed box, one (lo, hi) interval per variable."""

    intervals: tuple

    def __post_init__(self):
        intervals = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        for lo, hi in intervals:
            if lo > hi:
                raise ModelError(f'empty init interval {lo:g}:{hi:g}')
        object.__setattr__(self, 'intervals', intervals)


def check_rectangle(partition, rectangle):
    if len(rectangle) != partition.dim:
        raise ModelError(
            f'rectangle {rectangle} has {len(rectangle)} indices, expected '
            f'{partition.dim}')
    for i, (j, m) in enumerate(zip(rectangle, partition.interval_counts)):
        if not 0 <= j < m:
            raise ModelError(
                f'index {j} out of range for {partition.variables[i]}')


def rectangle_bounds(partition, rectangle):
    check_rectangle(partition, rectangle)
    return tuple((values[j], values[j + 1])
                 for values, j in zip(partition.thresholds, rectangle))


def corner_offsets(n):
    """All 2^n corner offsets in binary-counting order, dim 0 least
    significant.
    """
    return (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1


def grid_coordinates(partition, grid):
    """Map an integer array of grid indices, last axis = variable, to
    threshold values.
    """
    grid = np.asarray(grid)
    coords = np.empty(grid.shape, dtype=float)
    for i, values in enumerate(partition.thresholds):
        coords[..., i] = np.asarray(values)[grid[..., i]]
    return coords


def vertices(partition, rectangle):
    check_rectangle(partition, rectangle)
    grid = np.asarray(rectangle) + corner_offsets(partition.dim)
    return grid_coordinates(partition, grid)


def face_vertices(partition, face):
    points = vertices(partition, face.rectangle)
    bit = 1 if face.side == UPPER else 0
    rows = corner_offsets(partition.dim)[:, face.dim] == bit
    return points[rows]


def threshold_index(values, value):
    tol = settings['duplicate_tolerance']
    pos = bisect.bisect_left(values, value - tol)
    if pos < len(values) and abs(values[pos] - value) <= tol:
        return pos
    return None


def initial_rectangles(partition, regions):
    """All rectangles whose closure lies inside some region. Every region
    bound must coincide with a threshold; call align() first to make it so.
    """
    found = set()
    for region in regions:
        if len(region.intervals) != partition.dim:
            raise ModelError(
                f'init region has {len(region.intervals)} intervals, expected '
                f'{partition.dim}')
        slabs = []
        for name, values, (lo, hi) in zip(partition.variables,
                                          partition.thresholds,
                                          region.intervals):
            first = threshold_index(values, lo)
            last = threshold_index(values, hi)
            if first is None or last is None:
                raise ModelError(
                    f'init bound of {name} ({lo:g}:{hi:g}) is not aligned '
                    f'with a threshold')
            slabs.append(range(first, last))
        found.update(itertools.product(*slabs))
    return sorted(found)


def insert_threshold(partition, var, value):
    i = partition.index(var)
    values = partition.thresholds[i]
    value = float(value)
    if not values[0] <= value <= values[-1]:
        raise ModelError(
            f'threshold {value:g} outside the bounds of '
            f'{partition.variables[i]}')
    if threshold_index(values, value) is not None:
        return partition
    new_values = list(values)
    bisect.insort(new_values, value)
    return partition.with_thresholds(i, new_values)


def align(partition, pairs):
    """Insert (variable, value) pairs, skipping values on or outside the
    bounds. Returns the new partition and the pairs actually inserted.
    """
    inserted = []
    for var, value in pairs:
        i = partition.index(var)
        lo, hi = partition.bounds[i]
        if not lo < value < hi:
            continue
        refined = insert_threshold(partition, i, value)
        if refined is not partition:
            inserted.append((partition.variables[i], float(value)))
            partition = refined
    return partition, inserted


def _far_from_all(values, value, spacing):
    pos = bisect.bisect_left(values, value)
    for neighbour in values[max(pos - 1, 0):pos + 1]:
        if abs(neighbour - value) < spacing:
            return False
    return True


def refine_uniform(partition, var, width, lo=None, hi=None):
    """Add thresholds every ``width`` across [lo, hi], by default the whole
    range of the variable.
    """
    if width <= 0:
        raise ModelError(f'refinement width must be positive, got {width}')
    i = partition.index(var)
    values = list(partition.thresholds[i])
    lo = values[0] if lo is None else float(lo)
    hi = values[-1] if hi is None else float(hi)
    if not values[0] <= lo < hi <= values[-1]:
        raise ModelError(f'refinement interval {lo:g}:{hi:g} out of bounds')
    spacing = settings['min_spacing']
    k = 0
    while True:
        value = lo + k * width
        if value > hi + settings['duplicate_tolerance']:
            break
        if _far_from_all(values, value, spacing):
            bisect.insort(values, value)
        k += 1
    return partition.with_thresholds(i, values)


def refine_auto(system, partition, rectangles=None):
    """One sign-split iteration: wherever f_i is strictly positive at one
    vertex of a rectangle and strictly negative at another, bisect the
    rectangle along variable i.
    """
    n = partition.dim
    if rectangles is None:
        rectangles = list(partition.rectangles())
    else:
        rectangles = list(rectangles)
    offsets = corner_offsets(n)
    midpoints = [set() for _ in range(n)]
    batch = settings['batch_size']
    for start in range(0, len(rectangles), batch):
        chunk = np.asarray(rectangles[start:start + batch], dtype=np.intp)
        grid = chunk[:, None, :] + offsets[None, :, :]
        points = grid_coordinates(partition, grid)
        values = system.eval_many(points.reshape(-1, n)).reshape(points.shape)
        lower = grid_coordinates(partition, chunk)
        upper = grid_coordinates(partition, chunk + 1)
        for i in range(n):
            mixed = ((values[:, :, i] > 0).any(axis=1)
                     & (values[:, :, i] < 0).any(axis=1))
            for row in np.flatnonzero(mixed):
                midpoints[i].add((lower[row, i] + upper[row, i]) / 2)
    spacing = settings['min_spacing']
    for i in range(n):
        values = list(partition.thresholds[i])
        for value in sorted(midpoints[i]):
            if _far_from_all(values, value, spacing):
                bisect.insort(values, value)
        partition = partition.with_thresholds(i, values)
    return partition


def added_thresholds(before, after):
    """Thresholds present in ``after`` but not in ``before``, per variable."""
    added = {}
    for name, old, new in zip(before.variables, before.thresholds,
                              after.thresholds):
        fresh = [v for v in new if threshold_index(old, v) is None]
        if fresh:
            added[name] = fresh
    return added
