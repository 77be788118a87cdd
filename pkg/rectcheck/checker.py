"""Model checking of never claims against the rectangular abstraction.

The product runs the abstraction and the automaton in lock step. A joint step
r -> r', q -> q' exists when r -> r' is an abstraction transition and the
guard of q -> q' holds on the target rectangle r'. A virtual pre-initial
state steps into every initial rectangle, so the automaton also reads the
first rectangle. A rectangle with no abstraction successors steps to itself
in the product; the abstraction itself is left unchanged.

Product states are (rectangle, automaton state index) tuples internally.
"""

import logging
import time
from dataclasses import dataclass, field
import numpy as np
from .errors import ModelError, StateLimitExceeded
from .partition import (LOWER, UPPER, Face, check_rectangle, face_vertices,
                        initial_rectangles, vertices)
from .property import compile_guard, guard_eval, guard_tests_pass
from .rats import Abstraction, AbstractionOptions, separates
from . import parallel
logger = logging.getLogger(__name__)

ALGORITHMS = ('ndfs', 'owcty')
HOLDS_TEXT = ('property holds for the ODE system (abstraction is '
              'conservative)')
FAILS_TEXT = ('property fails on the abstraction; counterexample may be '
              'spurious')
# bytes per state: one 32-bit index per variable plus the automaton state
INDEX_BYTES = 4
APPENDIX_BYTES = {'ndfs': 8, 'owcty': 12}


@dataclass(frozen=True)
class ProductState:

    rectangle: tuple
    automaton_state: str


@dataclass
class Counterexample:

    stem: list
    cycle: list


@dataclass
class CheckStats:

    algorithm: str = 'ndfs'
    states: int = 0
    transitions: int = 0
    iterations: int = 0
    seconds: float = 0.0
    cross: int = 0
    per_worker: tuple = ()
    history: list = field(default_factory=list)
    state_size: int = 0


@dataclass
class Verdict:

    holds: bool
    counterexample: Counterexample = None
    stats: CheckStats = field(default_factory=CheckStats)


class Product:
    """Successor generation for the synchronous product."""

    def __init__(self, model, automaton, options=None):
        self.model = model
        self.automaton = automaton
        self.abstraction = Abstraction.for_model(model, options)
        states = automaton.states
        self.initial_index = states.index(automaton.initial)
        self.accepting = {states.index(q) for q in automaton.accepting}
        self.edges = [[] for _ in states]
        for transition in automaton.transitions:
            self.edges[states.index(transition.source)].append(
                (compile_guard(transition.guard, model.partition),
                 states.index(transition.target)))
        self._cache = {}

    def _step(self, q, targets):
        found = []
        for target in targets:
            for tests, q_next in self.edges[q]:
                if guard_tests_pass(tests, target):
                    found.append((target, q_next))
        return list(dict.fromkeys(found))

    def initial_states(self):
        rectangles = initial_rectangles(self.model.partition, self.model.init)
        return self._step(self.initial_index, rectangles)

    def expand(self, states):
        missing = [s for s in states if s not in self._cache]
        rectangles = list(dict.fromkeys(r for r, _ in missing))
        self.abstraction.successors_batch(rectangles)
        for r, q in missing:
            # a rectangle without successors stutters so its runs stay
            # infinite
            targets = self.abstraction.successors(r) or [r]
            self._cache[(r, q)] = self._step(q, targets)
        return [self._cache[s] for s in states]

    def successors(self, state):
        if state not in self._cache:
            self.expand([state])
        return self._cache[state]

    def owner_key(self, state):
        return state[0]

    def is_accepting(self, state):
        return state[1] in self.accepting

    def to_public(self, state):
        return ProductState(state[0], self.automaton.states[state[1]])


@dataclass(frozen=True)
class ProductJob:

    model: object
    automaton: object
    options: AbstractionOptions

    def build(self):
        return Product(self.model, self.automaton, self.options)


def _automaton(model, automaton):
    automaton = automaton if automaton is not None else model.automaton
    if automaton is None:
        raise ModelError('no property to check')
    return automaton


def product_successors(model, automaton, state):
    product = Product(model, automaton)
    q = automaton.states.index(state.automaton_state)
    return [product.to_public(s)
            for s in product.successors((tuple(state.rectangle), q))]


def _red_search(seed, successors_of, flagged):
    """Look for a path from ``seed`` back to itself. Returns the cycle
    starting at ``seed``, or None.
    """
    stack = [(seed, iter(successors_of(seed)))]
    while stack:
        state, pending = stack[-1]
        for target in pending:
            if target == seed:
                return [s for s, _ in stack]
            if target not in flagged:
                flagged.add(target)
                stack.append((target, iter(successors_of(target))))
                break
        else:
            stack.pop()
    return None


def _nested_dfs(product, max_states=None, accepting=None):
    """Iterative nested depth-first search. Returns (visited, transitions,
    stem, cycle); stem and cycle are None when there is no accepting cycle.
    """
    accepting = accepting or product.is_accepting
    successors_of = product.successors
    visited = set()
    flagged = set()
    transitions = 0
    for initial in product.initial_states():
        if initial in visited:
            continue
        visited.add(initial)
        transitions += len(successors_of(initial))
        stack = [(initial, iter(successors_of(initial)))]
        while stack:
            state, pending = stack[-1]
            for target in pending:
                if target not in visited:
                    visited.add(target)
                    if max_states is not None and len(visited) > max_states:
                        raise StateLimitExceeded(max_states, CheckStats(
                            'ndfs', len(visited), transitions))
                    transitions += len(successors_of(target))
                    stack.append((target, iter(successors_of(target))))
                    break
            else:
                stack.pop()
                if accepting(state):
                    cycle = _red_search(state, successors_of, flagged)
                    if cycle is not None:
                        stem = [s for s, _ in stack]
                        return visited, transitions, stem, cycle
    return visited, transitions, None, None


def _counterexample(product, stem, cycle):
    return Counterexample([product.to_public(s) for s in stem],
                          [product.to_public(s) for s in cycle])


def _state_size(model):
    return INDEX_BYTES * (model.system.dim + 1)


def check_nested_dfs(model, automaton=None, options=None):
    options = options or AbstractionOptions()
    automaton = _automaton(model, automaton)
    start = time.perf_counter()
    product = Product(model, automaton, options)
    visited, transitions, stem, cycle = _nested_dfs(product,
                                                    options.max_states)
    stats = CheckStats('ndfs', len(visited), transitions, 0,
                       time.perf_counter() - start, 0, (len(visited),), [],
                       _state_size(model))
    if cycle is None:
        logger.info(f'no accepting cycle among {stats.states} states')
        return Verdict(True, None, stats)
    logger.info(f'accepting cycle of length {len(cycle)} after '
                f'{stats.states} states')
    return Verdict(False, _counterexample(product, stem, cycle), stats)


def check_owcty_parallel(model, automaton=None, workers=1, options=None,
                         counterexample=True):
    options = options or AbstractionOptions()
    automaton = _automaton(model, automaton)
    if workers < 1:
        raise ModelError(f'workers must be at least 1, got {workers}')
    start = time.perf_counter()
    product = Product(model, automaton, options)
    job = ProductJob(model, automaton, options)
    with parallel.make_pool(job, workers) as pool:
        explored = parallel.explore(pool, product.initial_states(),
                                    options.max_states, collect=False)
        result = parallel.owcty(pool, explored.states)
        kept = None
        if not result.holds and counterexample:
            kept = set(parallel.survivors(pool))
    stats = CheckStats('owcty', explored.states, explored.transitions,
                       result.iterations, time.perf_counter() - start,
                       explored.cross, explored.per_worker, result.history,
                       _state_size(model))
    logger.info(f'owcty finished after {result.iterations} iterations with '
                f'{workers} workers')
    if result.holds:
        return Verdict(True, None, stats)
    if kept is None:
        return Verdict(False, None, stats)
    _, _, stem, cycle = _nested_dfs(
        product, accepting=lambda s: s in kept and product.is_accepting(s))
    if cycle is None:
        logger.error('no cycle through the surviving states')
        return Verdict(False, None, stats)
    return Verdict(False, _counterexample(product, stem, cycle), stats)


def check(model, automaton=None, algorithm=None, workers=1, options=None):
    """Run the requested algorithm; nested DFS for one worker by default,
    OWCTY otherwise. The model must already be aligned.
    """
    algorithm = algorithm or ('ndfs' if workers == 1 else 'owcty')
    if algorithm == 'ndfs':
        if workers != 1:
            logger.warning('nested DFS is sequential; ignoring workers')
        return check_nested_dfs(model, automaton, options)
    if algorithm == 'owcty':
        return check_owcty_parallel(model, automaton, workers, options)
    raise ModelError(f'unknown algorithm {algorithm}, expected one of '
                     f'{", ".join(ALGORITHMS)}')


def _exits(system, partition, rectangle, tol):
    found = []
    for i, count in enumerate(partition.interval_counts):
        for side, step in ((LOWER, -1), (UPPER, 1)):
            j = rectangle[i] + step
            if not 0 <= j < count:
                continue
            face = Face(rectangle, i, side)
            if any(step * system.eval(point)[i] > tol
                   for point in face_vertices(partition, face)):
                found.append(rectangle[:i] + (j,) + rectangle[i + 1:])
    return found


def _stays(system, partition, rectangle, options):
    values = np.array([system.eval(point)
                       for point in vertices(partition, rectangle)])
    tol = options.sign_tolerance
    if ((values > tol).all(axis=0) | (values < -tol).all(axis=0)).any():
        return False
    if options.transient_test == 'separating':
        return not separates(values, tol)
    return True


def rectangle_steps(system, partition, rectangle, options=None):
    """Successor rectangles derived one face at a time from the vector
    field, with the stutter step the product adds for dead ends.
    """
    options = options or AbstractionOptions()
    rectangle = tuple(rectangle)
    found = _exits(system, partition, rectangle, options.sign_tolerance)
    if _stays(system, partition, rectangle, options) or not found:
        found.append(rectangle)
    return found


def validate_counterexample(model, automaton, counterexample, options=None):
    """Re-derive every step of a counterexample from the vector field and
    the guards. Returns a list of problems, empty when it is valid.
    """
    problems = []
    if not counterexample.cycle:
        return ['cycle is empty']
    states = automaton.states
    partition = model.partition

    def steps(source, target):
        try:
            found = rectangle_steps(model.system, partition,
                                    source.rectangle, options)
        except ModelError:
            return False
        if tuple(target.rectangle) not in found:
            return False
        return any(t.target == target.automaton_state and
                   guard_eval(t.guard, target.rectangle, partition)
                   for t in automaton.outgoing(source.automaton_state))

    path = list(counterexample.stem) + list(counterexample.cycle)
    first = path[0]
    if tuple(first.rectangle) not in initial_rectangles(partition,
                                                        model.init):
        problems.append(f'{first.rectangle} is not an initial rectangle')
    elif not any(t.target == first.automaton_state and
                 guard_eval(t.guard, first.rectangle, partition)
                 for t in automaton.outgoing(automaton.initial)):
        problems.append(f'automaton cannot enter {first.automaton_state} on '
                        f'{first.rectangle}')
    for source, target in zip(path, path[1:]):
        if not steps(source, target):
            problems.append(f'no product step {source} -> {target}')
    if not steps(counterexample.cycle[-1], counterexample.cycle[0]):
        problems.append('cycle does not close')
    if not any(s.automaton_state in automaton.accepting
               for s in counterexample.cycle):
        problems.append('cycle has no accepting state')
    for state in path:
        if state.automaton_state not in states:
            problems.append(f'unknown automaton state {state.automaton_state}')
        try:
            check_rectangle(partition, state.rectangle)
        except ModelError as e:
            problems.append(str(e))
    return problems


def format_state(state, partition, automaton):
    cells = ','.join(f'{values[j]:g}({j})' for values, j in
                     zip(partition.thresholds, state.rectangle))
    return f'[{cells}-PP:{automaton.state_index(state.automaton_state)}]'


def format_trace(counterexample, partition, automaton):
    lines = ['[pre-initial]']
    lines += [format_state(s, partition, automaton)
              for s in counterexample.stem]
    lines.append('======= Cycle =======')
    lines += [format_state(s, partition, automaton)
              for s in counterexample.cycle]
    return '\n'.join(lines) + '\n'


def format_stats(stats):
    lines = [f'states:            {stats.states}',
             f'transitions:       {stats.transitions}',
             f'iterations:        {stats.iterations}',
             f'size of a state:   {stats.state_size}',
             f'size of appendix:  {APPENDIX_BYTES[stats.algorithm]}',
             f'cross transitions: {stats.cross}',
             f'time:              {stats.seconds:.6f} s']
    if stats.per_worker:
        lines.append('-------------------')
        for worker, count in enumerate(stats.per_worker):
            lines.append(f'{worker}: local states:      {count}')
    return '\n'.join(lines) + '\n'


def verdict_semantics(verdict):
    return HOLDS_TEXT if verdict.holds else FAILS_TEXT


def format_report(verdict, partition, automaton):
    if verdict.holds:
        header = ['==============================',
                  '  --- No accepting cycle ---',
                  '==============================']
    else:
        header = ['=======================',
                  '--- Accepting cycle ---',
                  '=======================']
    text = '\n'.join(header) + '\n'
    if verdict.counterexample is not None:
        text += format_trace(verdict.counterexample, partition, automaton)
        text += '\n'
    text += format_stats(verdict.stats)
    text += '\n' + verdict_semantics(verdict) + '\n'
    return text
