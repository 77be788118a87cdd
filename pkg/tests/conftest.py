from pathlib import Path
import numpy as np
import pytest
from rectcheck.multiaffine import Model, MultiAffineSystem, Term, parse_bio
from rectcheck.partition import InitRegion, Partition
from rectcheck.property import (RELATIONS, Atom, AutomatonTransition,
                                BuchiAutomaton, Guard, parse_property)
from rectcheck.reaction_model import network_to_model, parse_reaction_file

MODELS = Path(__file__).resolve().parent.parent / 'models'


def load_model(name):
    return parse_bio((MODELS / name).read_text(), name)


def load_property(name):
    return parse_property((MODELS / name).read_text(), name)


def load_network(name):
    return parse_reaction_file((MODELS / name).read_text(), name)


def make_model(variables, equations, thresholds, init=None):
    """Build a model from (coefficient, factor names) pairs per equation.
    Without ``init`` the whole box is initial.
    """
    system = MultiAffineSystem(
        variables,
        [[Term(c, [variables.index(v) for v in factors])
          for c, factors in terms] for terms in equations])
    partition = Partition(variables, thresholds)
    if init is None:
        init = [partition.bounds]
    return Model(system, partition, [InitRegion(region) for region in init])


@pytest.fixture
def models_dir():
    return MODELS


@pytest.fixture
def demo():
    return load_model('demo.bio')


@pytest.fixture
def prop1():
    return load_property('demo-prop1.prop')


@pytest.fixture
def prop2():
    return load_property('demo-prop2.prop')


@pytest.fixture
def exchange():
    return load_model('exchange.bio')


@pytest.fixture
def exchange_symmetric():
    # A <-> B with k1 = k2 = 1
    return make_model(('A', 'B'),
                      [[(-1, ['A']), (1, ['B'])], [(1, ['A']), (-1, ['B'])]],
                      [(0, 5, 6, 10), (0, 2, 3, 5)])


@pytest.fixture
def ammonium():
    return network_to_model(load_network('ammonium.rxn'))


def _random_thresholds(rng):
    count = int(rng.integers(2, 6))
    inner = {round(float(v), 1) for v in rng.uniform(0.5, 9.5, count - 2)}
    return [0.0] + sorted(inner) + [10.0]


def random_model(rng):
    """At most three variables, at most five thresholds per axis, one
    aligned init box.
    """
    n = int(rng.integers(1, 4))
    variables = tuple('XYZ'[:n])
    equations = []
    for _ in range(n):
        terms = []
        for _ in range(int(rng.integers(1, 4))):
            size = int(rng.integers(0, min(2, n) + 1))
            factors = rng.choice(n, size=size, replace=False)
            terms.append(Term(round(float(rng.uniform(-2, 2)), 2),
                              [int(i) for i in factors]))
        equations.append(terms)
    system = MultiAffineSystem(variables, equations)
    partition = Partition(variables,
                          [_random_thresholds(rng) for _ in range(n)])
    region = []
    for values in partition.thresholds:
        j = int(rng.integers(0, len(values) - 1))
        k = int(rng.integers(j + 1, len(values)))
        region.append((values[j], values[k]))
    return Model(system, partition, [InitRegion(region)])


def random_automaton(rng, partition):
    """At most three states; guards are single atoms on threshold values."""
    count = int(rng.integers(1, 4))
    states = [f'q{i}' for i in range(count)]
    accepting = [q for q in states if rng.random() < 0.5] or [states[-1]]
    transitions = []
    for source in states:
        for target in states:
            if rng.random() < 0.5:
                continue
            guard = Guard()
            if rng.random() < 0.7:
                i = int(rng.integers(partition.dim))
                values = partition.thresholds[i]
                constant = values[int(rng.integers(len(values)))]
                relation = RELATIONS[int(rng.integers(len(RELATIONS)))]
                guard = Guard([Atom(partition.variables[i], relation,
                                    constant)])
            transitions.append(AutomatonTransition(source, target, guard))
    return BuchiAutomaton('random', states, 'q0', accepting, transitions)


@pytest.fixture
def rng():
    return np.random.default_rng(20090601)
