"""Never-claim Büchi automata.

Properties are written in a small process grammar:

    process LTL_property1 {
    state q1, q2;
    init q1;
    accept q2;
    trans
    q1 -> q2 { guard B>4 && B<4.5 && C>3 && C<3.5; },
    q1 -> q1 {},
    q2 -> q2 {};
    }

    system sync property LTL_property1;

Guards are conjunctions of single-variable comparisons. Once every guard
constant is a threshold, a rectangle lies either entirely on one side of each
constant or the other, so guards are decided on interval indices alone.
"""

import logging
from dataclasses import dataclass
import pyparsing as pp
from .errors import ModelError
from .grammar import (error_at, format_number, located_name, name, number,
                      parse_text)
from .partition import threshold_index
logger = logging.getLogger(__name__)

RELATIONS = ('<=', '>=', '<', '>')
NEGATION = {'<': '>=', '<=': '>', '>': '<=', '>=': '<'}
PATTERNS = ('G', 'F', 'FG', 'GF')


@dataclass(frozen=True)
class Atom:

    variable: str
    relation: str
    constant: float

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ModelError(f'unknown relation {self.relation}')
        object.__setattr__(self, 'constant', float(self.constant))

    def negated(self):
        return Atom(self.variable, NEGATION[self.relation], self.constant)

    def holds_at(self, value):
        if self.relation == '<':
            return value < self.constant
        if self.relation == '<=':
            return value <= self.constant
        if self.relation == '>':
            return value > self.constant
        return value >= self.constant

    def __str__(self):
        return f'{self.variable}{self.relation}{format_number(self.constant)}'


@dataclass(frozen=True)
class Guard:
    """A conjunction of atoms. No atoms means true."""

    atoms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'atoms', tuple(self.atoms))

    @property
    def is_true(self):
        return not self.atoms

    def holds_at(self, variables, point):
        return all(atom.holds_at(point[variables.index(atom.variable)])
                   for atom in self.atoms)

    def __str__(self):
        if self.is_true:
            return 'true'
        return ' && '.join(str(atom) for atom in self.atoms)


TRUE = Guard()


@dataclass(frozen=True)
class AutomatonTransition:

    source: str
    target: str
    guard: Guard = TRUE


@dataclass(frozen=True)
class BuchiAutomaton:

    name: str
    states: tuple
    initial: str
    accepting: tuple
    transitions: tuple

    def __post_init__(self):
        for field in ('states', 'accepting', 'transitions'):
            object.__setattr__(self, field, tuple(getattr(self, field)))
        if len(set(self.states)) != len(self.states):
            raise ModelError(f'duplicate state in {self.name}')
        if self.initial not in self.states:
            raise ModelError(f'initial state {self.initial} is not declared')
        for state in self.accepting:
            if state not in self.states:
                raise ModelError(f'accepting state {state} is not declared')
        for transition in self.transitions:
            for state in (transition.source, transition.target):
                if state not in self.states:
                    raise ModelError(f'transition uses undeclared state '
                                     f'{state}')

    def state_index(self, state):
        return self.states.index(state)

    def is_accepting(self, state):
        return state in self.accepting

    def outgoing(self, state):
        return [t for t in self.transitions if t.source == state]


def _kw(word):
    return pp.Suppress(pp.Keyword(word))


def _section(kind):
    return lambda toks: (kind, list(toks))


ATOM = (name + pp.one_of(' '.join(RELATIONS)) + number).set_parse_action(
    lambda toks: Atom(toks[0], toks[1], toks[2]))
GUARD = (pp.Keyword('true').set_parse_action(lambda toks: TRUE) |
         pp.DelimitedList(ATOM, delim='&&').set_parse_action(
             lambda toks: Guard(list(toks))))
NAMES = pp.DelimitedList(located_name) + pp.Suppress(';')
TRANSITION = pp.Group(
    located_name + pp.Suppress('->') + located_name + pp.Suppress('{') +
    pp.Opt(_kw('guard') + GUARD + pp.Suppress(';')) + pp.Suppress('}'))
SECTION = ((_kw('state') + NAMES).set_parse_action(_section('state')) |
           (_kw('init') + located_name + pp.Suppress(';')).set_parse_action(
               _section('init')) |
           (_kw('accept') + NAMES).set_parse_action(_section('accept')) |
           (_kw('trans') + pp.DelimitedList(TRANSITION) +
            pp.Suppress(';')).set_parse_action(_section('trans')))
SYSTEM = (_kw('system') + _kw('sync') + _kw('property') + located_name +
          pp.Suppress(';')).set_parse_action(_section('system'))
PROCESS = (_kw('process') + located_name + pp.Suppress('{') +
           pp.ZeroOrMore(SECTION) + pp.Suppress('}') + pp.Opt(SYSTEM))
PROCESS.ignore(pp.dbl_slash_comment)


def parse_guard(text):
    """Parse a bare guard such as ``NH4in<5e-4 && B>1`` or ``true``."""
    return parse_text(GUARD, text, 'guard')[0]


def parse_property(text, source=None):
    parsed = parse_text(PROCESS, text, source)
    process = parsed[0]
    states = []
    initial = None
    accepting = None
    transitions = []
    for kind, items in parsed[1:]:
        if kind == 'state':
            states.extend(items)
        elif kind == 'init':
            initial = items[0]
        elif kind == 'accept':
            accepting = (accepting or []) + items
        elif kind == 'trans':
            for origin, target, *guard in items:
                transitions.append((origin, target,
                                    guard[0] if guard else TRUE))
        elif items[0].text != process.text:
            raise error_at(text, items[0].loc, f'system refers to unknown '
                           f'property {items[0].text}', source)
    if initial is None:
        raise error_at(text, process.loc, f'process {process.text} has no '
                       f'init state', source)
    if accepting is None:
        raise error_at(text, process.loc, f'process {process.text} has no '
                       f'accept states', source)
    declared = {state.text for state in states}
    for state in [initial] + accepting + [t for _, t, _ in transitions] + \
            [s for s, _, _ in transitions]:
        if state.text not in declared:
            raise error_at(text, state.loc, f'undeclared state {state.text}',
                           source)
    automaton = BuchiAutomaton(
        name=process.text,
        states=[state.text for state in states],
        initial=initial.text,
        accepting=[state.text for state in accepting],
        transitions=[AutomatonTransition(s.text, t.text, guard)
                     for s, t, guard in transitions])
    logger.debug(f'parsed property {process.text} with '
                 f'{len(automaton.states)} states and '
                 f'{len(automaton.transitions)} transitions')
    return automaton


def emit_property(automaton):
    lines = [f'process {automaton.name} {{',
             f'state {", ".join(automaton.states)};',
             f'init {automaton.initial};']
    if automaton.accepting:
        lines.append(f'accept {", ".join(automaton.accepting)};')
    if automaton.transitions:
        lines.append('trans')
        rows = []
        for t in automaton.transitions:
            body = '{}' if t.guard.is_true else f'{{ guard {t.guard}; }}'
            rows.append(f'{t.source} -> {t.target} {body}')
        lines.append(',\n'.join(rows) + ';')
    lines += ['}', '', f'system sync property {automaton.name};', '']
    return '\n'.join(lines)


def _negated_transitions(source, target, guard):
    return [AutomatonTransition(source, target, Guard([atom.negated()]))
            for atom in guard.atoms]


def ltl_template(pattern, guard):
    """Never claim for one of the patterns G p, F p, FG p and GF p. The
    negation of a conjunction becomes one transition per negated atom.
    """
    if pattern == 'G':
        transitions = [AutomatonTransition('q1', 'q1')]
        transitions += _negated_transitions('q1', 'q2', guard)
        transitions.append(AutomatonTransition('q2', 'q2'))
        return BuchiAutomaton('G_property', ('q1', 'q2'), 'q1', ('q2',),
                              transitions)
    if pattern == 'F':
        return BuchiAutomaton('F_property', ('q1',), 'q1', ('q1',),
                              _negated_transitions('q1', 'q1', guard))
    if pattern == 'FG':
        transitions = [AutomatonTransition('q0', 'q0')]
        transitions += _negated_transitions('q0', 'q1', guard)
        transitions += _negated_transitions('q1', 'q1', guard)
        transitions.append(AutomatonTransition('q1', 'q0', guard))
        return BuchiAutomaton('FG_property', ('q0', 'q1'), 'q0', ('q1',),
                              transitions)
    if pattern == 'GF':
        transitions = [AutomatonTransition('q0', 'q0')]
        transitions += _negated_transitions('q0', 'q1', guard)
        transitions += _negated_transitions('q1', 'q1', guard)
        return BuchiAutomaton('GF_property', ('q0', 'q1'), 'q0', ('q1',),
                              transitions)
    raise ModelError(f'unsupported pattern {pattern}, expected one of '
                     f'{", ".join(PATTERNS)}')


def collect_guard_constants(automaton):
    found = []
    for transition in automaton.transitions:
        for atom in transition.guard.atoms:
            pair = (atom.variable, atom.constant)
            if pair not in found:
                found.append(pair)
    return found


def check_variables(automaton, variables):
    for transition in automaton.transitions:
        for atom in transition.guard.atoms:
            if atom.variable not in variables:
                raise ModelError(f'property {automaton.name} refers to '
                                 f'unknown variable {atom.variable}')


def compile_guard(guard, partition):
    """Turn a guard into (dim, position, below) tests on interval indices.
    ``below`` tests mean the rectangle's interval must end at or before the
    threshold at ``position``; the others that it starts at or after it.
    """
    tests = []
    for atom in guard.atoms:
        dim = partition.index(atom.variable)
        position = threshold_index(partition.thresholds[dim], atom.constant)
        if position is None:
            raise ModelError(f'guard constant {atom} is not a threshold of '
                             f'{atom.variable}')
        tests.append((dim, position, atom.relation in ('<', '<=')))
    return tuple(tests)


def guard_tests_pass(tests, rectangle):
    for dim, position, below in tests:
        if below:
            if rectangle[dim] >= position:
                return False
        elif rectangle[dim] < position:
            return False
    return True


def guard_eval(guard, rectangle, partition):
    return guard_tests_pass(compile_guard(guard, partition), rectangle)
