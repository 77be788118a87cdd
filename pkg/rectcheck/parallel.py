"""Shared-nothing parallel exploration.

Each worker owns the states whose owner key hashes to its index. Work
proceeds in bulk-synchronous steps driven by a coordinator: the coordinator
broadcasts a command, every worker does its local part, swaps batches of
states with every other worker, and reports back a number. Batches carry a
tick so that a fast worker's batch for the next step is stashed until the
receiver gets there.

Workers are separate processes that talk over multiprocessing queues. With
a single worker the same Worker runs inside the coordinator's process.
"""

import logging
import queue
import traceback
from dataclasses import dataclass
from hashlib import md5
from multiprocessing import Process, Queue
from struct import unpack_from
from .errors import StateLimitExceeded, WorkerError
logger = logging.getLogger(__name__)

POLL_INTERVAL = 0.5
JOIN_TIMEOUT = 5


def owner(key, workers):
    """Index of the worker that owns ``key``. Stable across processes and
    runs.
    """
    if workers == 1:
        return 0
    digest = md5(str(tuple(key)).encode()).digest()
    return unpack_from('>I', digest)[0] % workers


class _Stop(Exception):
    pass


class Worker:

    def __init__(self, index, workers, expander, inboxes=None, outbox=None):
        self.index = index
        self.workers = workers
        self.expander = expander
        self._inboxes = inboxes
        self._outbox = outbox
        self._stash = []
        self._tick = 0
        self.adjacency = {}
        self.known = set()
        self.frontier = []
        self.cross = 0
        self.alive = None
        self.reach = set()
        self.indegree = {}

    def log(self, message):
        if self._outbox is None:
            logger.debug(f'worker {self.index}: {message}')
        else:
            self._outbox.put({'action': 'log', 'worker': self.index,
                              'message': message})

    def _next(self, wanted):
        for i, message in enumerate(self._stash):
            if wanted(message):
                return self._stash.pop(i)
        while True:
            message = self._inboxes[self.index].get()
            if message.get('action') == 'stop':
                raise _Stop()
            if wanted(message):
                return message
            self._stash.append(message)

    def next_command(self):
        return self._next(lambda m: m['action'] != 'batch')

    def dispatch(self, action, data):
        return getattr(self, f'run_{action}')(**data)

    def _route(self, states):
        outgoing = [[] for _ in range(self.workers)]
        for state in states:
            outgoing[owner(self.expander.owner_key(state),
                           self.workers)].append(state)
        return outgoing

    def exchange(self, outgoing):
        """Send every other worker its batch and gather the batches sent to
        this worker, own states included.
        """
        self._tick += 1
        tick = self._tick
        for index, states in enumerate(outgoing):
            if index != self.index:
                self._inboxes[index].put({'action': 'batch', 'tick': tick,
                                          'states': states})
        incoming = list(outgoing[self.index])
        for _ in range(self.workers - 1):
            message = self._next(lambda m: m['action'] == 'batch' and
                                 m['tick'] == tick)
            incoming.extend(message['states'])
        return incoming

    # Exploration

    def run_seed(self, states):
        mine = [s for s in dict.fromkeys(states)
                if owner(self.expander.owner_key(s), self.workers) ==
                self.index and s not in self.known]
        self.known.update(mine)
        self.frontier = mine
        return len(mine)

    def run_explore(self):
        targets = []
        for state, successors in zip(self.frontier,
                                     self.expander.expand(self.frontier)):
            self.adjacency[state] = successors
            targets.extend(successors)
        outgoing = self._route(dict.fromkeys(targets))
        self.cross += sum(len(states) for index, states in enumerate(outgoing)
                          if index != self.index)
        new = [s for s in dict.fromkeys(self.exchange(outgoing))
               if s not in self.known]
        self.known.update(new)
        self.frontier = new
        self.log(f'step {self._tick}: {len(new)} new, {len(self.known)} owned')
        return {'new': len(new), 'owned': len(self.known)}

    def run_stats(self):
        return {'states': len(self.adjacency),
                'transitions': sum(len(t) for t in self.adjacency.values()),
                'cross': self.cross}

    def run_collect(self):
        return self.adjacency

    # Accepting-cycle detection

    def run_reset_start(self):
        if self.alive is None:
            self.alive = set(self.adjacency)
        self.reach = {s for s in self.alive if self.expander.is_accepting(s)}
        self.frontier = list(self.reach)
        return len(self.frontier)

    def run_reset_step(self):
        targets = [t for s in self.frontier for t in self.adjacency[s]]
        incoming = self.exchange(self._route(dict.fromkeys(targets)))
        new = [t for t in dict.fromkeys(incoming)
               if t in self.alive and t not in self.reach]
        self.reach.update(new)
        self.frontier = new
        return len(new)

    def run_reset_end(self):
        self.alive = self.reach
        self.reach = set()
        return len(self.alive)

    def run_count_start(self):
        self.indegree = dict.fromkeys(self.alive, 0)
        targets = [t for s in self.alive for t in self.adjacency[s]]
        for t in self.exchange(self._route(targets)):
            if t in self.alive:
                self.indegree[t] += 1
        self.frontier = [s for s, count in self.indegree.items() if count == 0]
        return len(self.frontier)

    def run_eliminate_step(self):
        for s in self.frontier:
            self.alive.discard(s)
        targets = [t for s in self.frontier for t in self.adjacency[s]]
        new = []
        for t in self.exchange(self._route(targets)):
            if t in self.alive:
                self.indegree[t] -= 1
                if self.indegree[t] == 0:
                    new.append(t)
        self.frontier = new
        return len(new)

    def run_size(self):
        return len(self.alive)

    def run_survivors(self):
        return sorted(self.alive)


def run_worker(index, workers, job, inboxes, outbox):
    """Process entry point: build the expander and serve commands until
    told to stop.
    """
    try:
        worker = Worker(index, workers, job.build(), inboxes, outbox)
        while True:
            command = worker.next_command()
            value = worker.dispatch(command['action'], command.get('data', {}))
            outbox.put({'action': 'done', 'worker': index, 'value': value})
    except _Stop:
        pass
    except Exception:
        outbox.put({'action': 'failed', 'worker': index,
                    'message': traceback.format_exc()})


class _Pool:

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc_info):
        self.stop()


class LocalPool(_Pool):

    def __init__(self, job):
        self.job = job
        self.workers = 1
        self._worker = None

    def start(self):
        if self._worker is None:
            self._worker = Worker(0, 1, self.job.build())

    def stop(self):
        self._worker = None

    def broadcast(self, action, **data):
        return [self._worker.dispatch(action, data)]


class WorkerPool(_Pool):
    """Coordinator for worker processes."""

    def __init__(self, job, workers):
        self.job = job
        self.workers = workers
        self._processes = []
        self._inboxes = None
        self._outbox = None
        self._results = {}

    def start(self):
        """
        Start the worker processes and create their queues. If already
        started, do nothing.
        """
        if self._processes:
            return
        logger.debug(f'starting {self.workers} workers')
        self._inboxes = [Queue() for _ in range(self.workers)]
        self._outbox = Queue()
        for index in range(self.workers):
            process = Process(
                target=run_worker,
                args=(index, self.workers, self.job, self._inboxes,
                      self._outbox),
                daemon=True)
            process.start()
            self._processes.append(process)

    def stop(self):
        """
        Ask the workers to stop, and terminate the ones that don't.
        """
        if not self._processes:
            return
        logger.debug(f'stopping {self.workers} workers')
        for inbox in self._inboxes:
            inbox.put({'action': 'stop'})
        for process in self._processes:
            process.join(JOIN_TIMEOUT)
            if process.is_alive():
                logger.warning(f'terminating worker {process.pid}')
                process.terminate()
                process.join()
        self._processes = []
        self._inboxes = None
        self._outbox = None

    def broadcast(self, action, **data):
        self._results = {}
        for inbox in self._inboxes:
            inbox.put({'action': action, 'data': data})
        while len(self._results) < self.workers:
            self._poll()
        return [self._results[index] for index in range(self.workers)]

    def _poll(self):
        try:
            message = self._outbox.get(timeout=POLL_INTERVAL)
        except queue.Empty:
            for index, process in enumerate(self._processes):
                if not process.is_alive() and index not in self._results:
                    raise WorkerError(index, f'exited with code '
                                             f'{process.exitcode}')
            return
        self._handle_incoming(message)

    def _handle_incoming(self, message):
        handler = getattr(self, f'_on_{message.get("action")}', None)
        if handler is None:
            logger.error(f'invalid or unhandled message from worker: '
                         f'{message}')
            return
        handler(message)

    def _on_done(self, message):
        self._results[message['worker']] = message['value']

    def _on_log(self, message):
        logger.debug(f'worker {message["worker"]}: {message["message"]}')

    def _on_failed(self, message):
        raise WorkerError(message['worker'], message['message'])


def make_pool(job, workers, processes=None):
    """A LocalPool for one worker, a WorkerPool otherwise. Pass
    ``processes=True`` to force separate processes.
    """
    if processes is None:
        processes = workers > 1
    if processes:
        return WorkerPool(job, workers)
    return LocalPool(job)


@dataclass
class Explored:

    states: int
    transitions: int
    cross: int
    per_worker: tuple
    adjacency: dict = None


def explore(pool, seeds, max_states=None, collect=True):
    """Expand everything reachable from ``seeds``. Stops when a step
    produces no new state anywhere.
    """
    pending = sum(pool.broadcast('seed', states=list(seeds)))
    steps = 0
    while pending:
        reports = pool.broadcast('explore')
        steps += 1
        pending = sum(r['new'] for r in reports)
        owned = sum(r['owned'] for r in reports)
        if max_states is not None and owned > max_states:
            stats = pool.broadcast('stats')
            raise StateLimitExceeded(max_states, Explored(
                owned, sum(s['transitions'] for s in stats),
                sum(s['cross'] for s in stats),
                tuple(r['owned'] for r in reports)))
    stats = pool.broadcast('stats')
    explored = Explored(
        states=sum(s['states'] for s in stats),
        transitions=sum(s['transitions'] for s in stats),
        cross=sum(s['cross'] for s in stats),
        per_worker=tuple(s['states'] for s in stats))
    if collect:
        explored.adjacency = {}
        for adjacency in pool.broadcast('collect'):
            explored.adjacency.update(adjacency)
    logger.debug(f'explored {explored.states} states in {steps} steps')
    return explored


@dataclass
class OwctyResult:

    holds: bool
    iterations: int
    history: list


def owcty(pool, states):
    """One-way catch them young on an explored pool. ``states`` is the
    number of explored states. Each iteration keeps what is reachable from
    accepting states, then strips states without a predecessor in the kept
    set. A non-empty fixpoint means an accepting cycle exists.
    """
    before = states
    iterations = 0
    history = []
    while True:
        iterations += 1
        pending = sum(pool.broadcast('reset_start'))
        while pending:
            pending = sum(pool.broadcast('reset_step'))
        size = sum(pool.broadcast('reset_end'))
        if size:
            pending = sum(pool.broadcast('count_start'))
            while pending:
                pending = sum(pool.broadcast('eliminate_step'))
            size = sum(pool.broadcast('size'))
        history.append(size)
        logger.debug(f'iteration {iterations}: {size} states kept')
        if size == 0 or size == before:
            break
        before = size
    return OwctyResult(size == 0, iterations, history)


def survivors(pool):
    found = []
    for states in pool.broadcast('survivors'):
        found.extend(states)
    return sorted(found)
