"""Rectangular abstraction transition systems.

A rectangle has a transition to its neighbour across a face when the vector
field points outwards at some vertex of that face. Rectangles that a
trajectory might never leave get a self-loop.
"""

import csv
import io
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
import numpy as np
from scipy.optimize import linprog
from . import settings
from .errors import ModelError, StateLimitExceeded
from .partition import (align, check_rectangle, corner_offsets,
                        grid_coordinates, initial_rectangles)
from .property import check_variables, collect_guard_constants
from . import parallel
logger = logging.getLogger(__name__)

TRANSIENT_TESTS = ('per-dim', 'separating')


def _default(key):
    return field(default_factory=lambda: settings[key])


@dataclass(frozen=True)
class AbstractionOptions:

    sign_tolerance: float = _default('sign_tolerance')
    transient_test: str = _default('transient_test')
    max_states: int = None

    def __post_init__(self):
        if not math.isfinite(self.sign_tolerance) or self.sign_tolerance < 0:
            raise ModelError(f'sign tolerance must be finite and >= 0, got '
                             f'{self.sign_tolerance}')
        if self.transient_test not in TRANSIENT_TESTS:
            raise ModelError(f'unknown transient test {self.transient_test}, '
                             f'expected one of {", ".join(TRANSIENT_TESTS)}')
        if self.max_states is not None and self.max_states < 1:
            raise ModelError(f'max_states must be positive, got '
                             f'{self.max_states}')


@dataclass(frozen=True)
class Transition:

    source: tuple
    target: tuple

    @property
    def is_self_loop(self):
        return self.source == self.target


@dataclass
class RatsStats:

    states: int = 0
    transitions: int = 0
    self_loops: int = 0
    seconds: float = 0.0
    per_worker: tuple = ()


@dataclass
class Rats:

    partition: object
    transitions: dict
    initial: list
    stats: RatsStats = field(default_factory=RatsStats)

    @property
    def states(self):
        return list(self.transitions)

    def state_set(self):
        return set(self.transitions)

    def transition_set(self):
        return {(source, target) for source, targets in
                self.transitions.items() for target in targets}

    def has_transition(self, source, target):
        return target in self.transitions.get(source, ())


class VertexField:
    """The vector field at threshold grid points. Small grids are memoized
    in a lazily filled array indexed by the flattened grid position.
    """

    def __init__(self, system, partition):
        self.system = system
        self.partition = partition
        self.shape = tuple(len(values) for values in partition.thresholds)
        size = int(np.prod(self.shape))
        if size <= settings['grid_memo_limit']:
            self._values = np.zeros((size, system.dim))
            self._known = np.zeros(size, dtype=bool)
        else:
            logger.debug(f'grid of {size} points is too large to memoize')
            self._values = None
        self.evaluations = 0

    def at(self, grid):
        """Field values at integer grid points, shape (..., n)."""
        grid = np.asarray(grid, dtype=np.intp)
        flat_grid = grid.reshape(-1, grid.shape[-1])
        if self._values is None:
            self.evaluations += len(flat_grid)
            points = grid_coordinates(self.partition, flat_grid)
            return self.system.eval_many(points).reshape(grid.shape)
        flat = np.ravel_multi_index(tuple(flat_grid.T), self.shape)
        missing = np.unique(flat[~self._known[flat]])
        if len(missing):
            self.evaluations += len(missing)
            coords = np.stack(np.unravel_index(missing, self.shape), axis=-1)
            points = grid_coordinates(self.partition, coords)
            self._values[missing] = self.system.eval_many(points)
            self._known[missing] = True
        return self._values[flat].reshape(grid.shape)


def separates(values, tolerance):
    """True when some direction c has c.f(v) > 0 at every vertex value."""
    n = values.shape[1]
    scale = np.abs(values).max()
    if scale == 0:
        return False
    # maximise s subject to c.f(v) >= s, -1 <= c <= 1, s <= 1
    a_ub = np.hstack([-values / scale, np.ones((len(values), 1))])
    result = linprog(c=np.r_[np.zeros(n), -1.0], A_ub=a_ub,
                     b_ub=np.zeros(len(values)),
                     bounds=[(-1, 1)] * n + [(None, 1)], method='highs')
    if result.status != 0:
        logger.warning(f'separating-vector test failed: {result.message}')
        return False
    return -result.fun > max(tolerance / scale, 1e-9)


class Abstraction:
    """Successor generation for one model. Successor lists are cached per
    rectangle.
    """

    def __init__(self, system, partition, options=None):
        self.system = system
        self.partition = partition
        self.options = options or AbstractionOptions()
        self.field = VertexField(system, partition)
        self.offsets = corner_offsets(partition.dim)
        self.counts = np.asarray(partition.interval_counts)
        self._cache = {}

    @classmethod
    def for_model(cls, model, options=None):
        return cls(model.system, model.partition, options)

    def vertex_values(self, rectangles):
        rectangles = np.asarray(rectangles, dtype=np.intp)
        grid = rectangles[:, None, :] + self.offsets[None, :, :]
        return self.field.at(grid)

    def _transient_mask(self, values):
        tol = self.options.sign_tolerance
        positive = (values > tol).all(axis=1)
        negative = (values < -tol).all(axis=1)
        transient = (positive | negative).any(axis=1)
        if self.options.transient_test == 'separating':
            for row in np.flatnonzero(~transient):
                transient[row] = separates(values[row], tol)
        return transient

    def transient_batch(self, rectangles):
        return self._transient_mask(self.vertex_values(rectangles))

    def compute(self, rectangles):
        """Successor lists for a batch of rectangles, in the fixed order:
        dimensions ascending, lower neighbour before upper, self-loop last.
        """
        if not rectangles:
            return []
        tol = self.options.sign_tolerance
        array = np.asarray(rectangles, dtype=np.intp)
        values = self.vertex_values(array)
        transient = self._transient_mask(values)
        n = self.partition.dim
        moves = []
        for i in range(n):
            lower_rows = self.offsets[:, i] == 0
            upper_rows = ~lower_rows
            down = (array[:, i] > 0) & \
                (values[:, lower_rows, i] < -tol).any(axis=1)
            up = (array[:, i] < self.counts[i] - 1) & \
                (values[:, upper_rows, i] > tol).any(axis=1)
            moves.append((down, up))
        result = []
        for row, rectangle in enumerate(rectangles):
            rectangle = tuple(int(j) for j in rectangle)
            targets = []
            for i, (down, up) in enumerate(moves):
                if down[row]:
                    targets.append(rectangle[:i] + (rectangle[i] - 1,) +
                                   rectangle[i + 1:])
                if up[row]:
                    targets.append(rectangle[:i] + (rectangle[i] + 1,) +
                                   rectangle[i + 1:])
            if not transient[row]:
                targets.append(rectangle)
            result.append(targets)
        return result

    def successors_batch(self, rectangles):
        rectangles = [tuple(r) for r in rectangles]
        todo = [r for r in dict.fromkeys(rectangles) if r not in self._cache]
        batch = settings['batch_size']
        for start in range(0, len(todo), batch):
            chunk = todo[start:start + batch]
            for rectangle, targets in zip(chunk, self.compute(chunk)):
                self._cache[rectangle] = targets
        return [self._cache[r] for r in rectangles]

    def successors(self, rectangle):
        rectangle = tuple(rectangle)
        if rectangle not in self._cache:
            self._cache[rectangle] = self.compute([rectangle])[0]
        return self._cache[rectangle]


def successors(system, partition, rectangle, options=None):
    check_rectangle(partition, rectangle)
    abstraction = Abstraction(system, partition, options)
    rectangle = tuple(rectangle)
    return [Transition(rectangle, target)
            for target in abstraction.successors(rectangle)]


def is_transient(system, partition, rectangle, options=None):
    check_rectangle(partition, rectangle)
    abstraction = Abstraction(system, partition, options)
    return bool(abstraction.transient_batch([tuple(rectangle)])[0])


def prepare_model(model, automaton=None, auto_thresholds=True):
    """Attach the property and align INIT bounds and guard constants with
    thresholds, so every rectangle lies entirely inside or outside each init
    region and guard.
    """
    automaton = automaton if automaton is not None else model.automaton
    if automaton is not None:
        check_variables(automaton, model.variables)
    if not auto_thresholds:
        return model.replace(automaton=automaton)
    pairs = [(name, value) for region in model.init
             for name, interval in zip(model.variables, region.intervals)
             for value in interval]
    if automaton is not None:
        pairs += collect_guard_constants(automaton)
    partition, inserted = align(model.partition, pairs)
    for name, value in inserted:
        logger.debug(f'inserted threshold {value:g} into {name}')
    return model.replace(partition=partition, automaton=automaton)


def _count(transitions):
    total = sum(len(targets) for targets in transitions.values())
    loops = sum(1 for source, targets in transitions.items()
                if source in targets)
    return total, loops


def generate_reachable(model, options=None):
    """Breadth-first closure of the successor relation from the initial
    rectangles.
    """
    options = options or AbstractionOptions()
    start = time.perf_counter()
    abstraction = Abstraction.for_model(model, options)
    initial = initial_rectangles(model.partition, model.init)
    transitions = {}
    frontier = deque(initial)
    seen = set(initial)
    batch = settings['batch_size']
    while frontier:
        chunk = [frontier.popleft() for _ in range(min(batch, len(frontier)))]
        for rectangle, targets in zip(chunk,
                                      abstraction.successors_batch(chunk)):
            transitions[rectangle] = targets
            for target in targets:
                if target not in seen:
                    seen.add(target)
                    frontier.append(target)
        if options.max_states is not None and len(seen) > options.max_states:
            total, loops = _count(transitions)
            raise StateLimitExceeded(options.max_states, RatsStats(
                len(seen), total, loops, time.perf_counter() - start))
    total, loops = _count(transitions)
    stats = RatsStats(len(transitions), total, loops,
                      time.perf_counter() - start, (len(transitions),))
    logger.info(f'generated {stats.states} states and {stats.transitions} '
                f'transitions in {stats.seconds:.3f} s')
    return Rats(model.partition, transitions, initial, stats)


@dataclass(frozen=True)
class RatsJob:
    """What a worker needs to expand rectangles on its own."""

    model: object
    options: AbstractionOptions

    def build(self):
        return RatsExpander(Abstraction.for_model(self.model, self.options))


class RatsExpander:

    def __init__(self, abstraction):
        self.abstraction = abstraction

    def expand(self, states):
        return self.abstraction.successors_batch(states)

    def owner_key(self, state):
        return state

    def is_accepting(self, state):
        return False


def generate_parallel(model, options=None, workers=1):
    options = options or AbstractionOptions()
    if workers < 1:
        raise ModelError(f'workers must be at least 1, got {workers}')
    start = time.perf_counter()
    initial = initial_rectangles(model.partition, model.init)
    with parallel.make_pool(RatsJob(model, options), workers) as pool:
        explored = parallel.explore(pool, initial, options.max_states)
    transitions = {state: explored.adjacency[state]
                   for state in sorted(explored.adjacency)}
    total, loops = _count(transitions)
    stats = RatsStats(len(transitions), total, loops,
                      time.perf_counter() - start, explored.per_worker)
    logger.info(f'generated {stats.states} states and {stats.transitions} '
                f'transitions with {workers} workers in {stats.seconds:.3f} s')
    return Rats(model.partition, transitions, initial, stats)


def _state_id(rectangle):
    return ','.join(str(j) for j in rectangle)


def _state_label(partition, rectangle):
    parts = []
    for name, values, j in zip(partition.variables, partition.thresholds,
                               rectangle):
        parts.append(f'{name}:[{values[j]:g},{values[j + 1]:g}]')
    return ' '.join(parts)


def export_dot(rats, projection=None):
    partition = rats.partition
    initial = set(rats.initial)
    lines = ['digraph rats {', '  node [shape=box];']
    if projection is None:
        for state in rats.states:
            extra = ', peripheries=2' if state in initial else ''
            lines.append(f'  "{_state_id(state)}" '
                         f'[label="{_state_label(partition, state)}"{extra}];')
        for source, target in sorted(rats.transition_set()):
            lines.append(f'  "{_state_id(source)}" -> "{_state_id(target)}";')
        lines.append('}')
        return '\n'.join(lines) + '\n'
    x, y = projection
    i, j = partition.index(x), partition.index(y)
    if i == j:
        raise ModelError(f'projection needs two different variables, got '
                         f'{x} twice')
    reachable = {(s[i], s[j]) for s in rats.states}
    xs, ys = partition.thresholds[i], partition.thresholds[j]
    for a in range(partition.interval_counts[i]):
        for b in range(partition.interval_counts[j]):
            color = 'green' if (a, b) in reachable else 'red'
            label = (f'{partition.variables[i]}:[{xs[a]:g},{xs[a + 1]:g}] '
                     f'{partition.variables[j]}:[{ys[b]:g},{ys[b + 1]:g}]')
            lines.append(f'  "{a},{b}" [label="{label}", style=filled, '
                         f'fillcolor={color}];')
    edges = sorted({((s[i], s[j]), (t[i], t[j]))
                    for s, t in rats.transition_set()
                    if (s[i], s[j]) != (t[i], t[j])})
    for source, target in edges:
        lines.append(f'  "{_state_id(source)}" -> "{_state_id(target)}";')
    lines.append('}')
    return '\n'.join(lines) + '\n'


def export_csv(rats):
    partition = rats.partition
    initial = set(rats.initial)
    states = io.StringIO()
    writer = csv.writer(states, lineterminator='\n')
    header = [f'i_{v}' for v in partition.variables]
    for v in partition.variables:
        header += [f'lo_{v}', f'hi_{v}']
    writer.writerow(header + ['initial', 'self_loop'])
    for state in sorted(rats.states):
        row = list(state)
        for values, j in zip(partition.thresholds, state):
            row += [repr(values[j]), repr(values[j + 1])]
        writer.writerow(row + [int(state in initial),
                               int(rats.has_transition(state, state))])
    transitions = io.StringIO()
    writer = csv.writer(transitions, lineterminator='\n')
    writer.writerow([f'src_{v}' for v in partition.variables] +
                    [f'dst_{v}' for v in partition.variables])
    for source, target in sorted(rats.transition_set()):
        writer.writerow(list(source) + list(target))
    return states.getvalue(), transitions.getvalue()


def format_stats(stats):
    lines = [f'states:            {stats.states}',
             f'transitions:       {stats.transitions}',
             f'self-loops:        {stats.self_loops}',
             f'time:              {stats.seconds:.6f} s']
    if stats.per_worker:
        lines.append('-------------------')
        for worker, count in enumerate(stats.per_worker):
            lines.append(f'{worker}: local states:      {count}')
    return '\n'.join(lines) + '\n'
