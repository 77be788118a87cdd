"""Multi-affine ODE systems and the .bio model format.

A .bio file looks like this:

    VARS:A,B,C

    EQ:dA = (-0.1)*A
    EQ:dB = 0.1*A + (-1)*B + 1*C
    EQ:dC = 0.1*A + 1*B + (-1)*C

    TRES:A: 0, 4, 6, 10
    TRES:B: 0, 2, 10
    TRES:C: 0, 2, 4, 10

    INIT:   4:6, 0:2, 2:4

A never claim may follow, starting at the first line that begins with
``process``.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
import numpy as np
import pyparsing as pp
from . import settings
from .errors import ModelError, ParseError
from .grammar import (error_at, format_number, keyword, located_name, number,
                      number_list, parse_text, unsigned)
from .partition import InitRegion, Partition
from .property import check_variables, emit_property, parse_property
logger = logging.getLogger(__name__)


def _signed(toks):
    value = float(toks[-1])
    return -value if toks[0] == '-' else value


COEFFICIENT = pp.Forward()
COEFFICIENT <<= (pp.Opt('-') + (
    unsigned | pp.Suppress('(') + COEFFICIENT + pp.Suppress(')'))
).set_parse_action(_signed)
FACTORS = pp.DelimitedList(located_name, delim='*')
TERM = pp.Group(COEFFICIENT + pp.Opt(pp.Suppress('*') + FACTORS) | FACTORS)
EXPRESSION = pp.DelimitedList(TERM, delim='+')

VARS_LINE = keyword('VARS') + pp.DelimitedList(located_name)
EQ_LINE = keyword('EQ') + located_name + pp.Suppress('=') + EXPRESSION
TRES_LINE = keyword('TRES') + located_name + pp.Suppress(':') + number_list
INIT_LINE = keyword('INIT') + pp.DelimitedList(
    pp.Group(number + pp.Suppress(':') + number))


@dataclass(frozen=True)
class Term:

    coefficient: float
    factors: tuple = ()

    def __post_init__(self):
        factors = tuple(sorted(self.factors))
        if len(set(factors)) != len(factors):
            raise ModelError(f'repeated variable in term factors {factors}')
        object.__setattr__(self, 'factors', factors)
        object.__setattr__(self, 'coefficient', float(self.coefficient))


@dataclass(frozen=True)
class MultiAffineSystem:

    variables: tuple
    equations: tuple

    def __post_init__(self):
        object.__setattr__(self, 'variables', tuple(self.variables))
        object.__setattr__(self, 'equations',
                           tuple(tuple(terms) for terms in self.equations))
        n = len(self.variables)
        if n < 1:
            raise ModelError('a system needs at least one variable')
        if len(set(self.variables)) != n:
            raise ModelError('duplicate variable names')
        if len(self.equations) != n:
            raise ModelError(f'{n} variables but {len(self.equations)} '
                             f'equations')
        for terms in self.equations:
            for term in terms:
                if any(not 0 <= i < n for i in term.factors):
                    raise ModelError(f'factor index out of range in {term}')

    @property
    def dim(self):
        return len(self.variables)

    @cached_property
    def _monomials(self):
        # One column per distinct factor set, and the coefficient matrix that
        # maps monomial values onto the n derivatives.
        index = {}
        for terms in self.equations:
            for term in terms:
                index.setdefault(term.factors, len(index))
        coefficients = np.zeros((len(index), self.dim))
        for i, terms in enumerate(self.equations):
            for term in terms:
                coefficients[index[term.factors], i] += term.coefficient
        return list(index), coefficients

    def eval_many(self, points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise ModelError(f'expected points of dimension {self.dim}, got '
                             f'shape {points.shape}')
        monomials, coefficients = self._monomials
        values = np.ones((points.shape[0], len(monomials)))
        for column, factors in enumerate(monomials):
            for i in factors:
                values[:, column] *= points[:, i]
        return values @ coefficients

    def eval(self, point):
        point = np.asarray(point, dtype=float)
        if point.shape != (self.dim,):
            raise ModelError(f'expected a point of dimension {self.dim}, got '
                             f'shape {point.shape}')
        return self.eval_many(point[None, :])[0]

    def is_affine(self):
        return all(len(term.factors) <= 1
                   for terms in self.equations for term in terms)

    def scaled(self, factor):
        return MultiAffineSystem(
            self.variables,
            [[Term(term.coefficient * factor, term.factors) for term in terms]
             for terms in self.equations])

    def normalized(self):
        """Merge terms with equal factor sets, drop zero coefficients, and
        sort terms by factors.
        """
        equations = []
        for terms in self.equations:
            merged = {}
            for term in terms:
                merged[term.factors] = merged.get(term.factors, 0.0) + \
                    term.coefficient
            equations.append([Term(c, f) for f, c in sorted(merged.items())
                              if c != 0.0])
        return MultiAffineSystem(self.variables, equations)


def evaluate(system, point):
    return system.eval(point)


def is_affine(system):
    return system.is_affine()


@dataclass(frozen=True)
class Model:

    system: MultiAffineSystem
    partition: Partition
    init: tuple = ()
    automaton: object = None

    def __post_init__(self):
        object.__setattr__(self, 'init', tuple(self.init))
        if self.partition.variables != self.system.variables:
            raise ModelError(
                f'partition variables {self.partition.variables} differ from '
                f'system variables {self.system.variables}')
        for region in self.init:
            if len(region.intervals) != self.system.dim:
                raise ModelError(
                    f'init region has {len(region.intervals)} intervals, '
                    f'expected {self.system.dim}')
            for name, (lo, hi), (low, high) in zip(
                    self.system.variables, region.intervals,
                    self.partition.bounds):
                if lo < low or hi > high:
                    raise ModelError(f'init interval {lo:g}:{hi:g} of {name} '
                                     f'lies outside {low:g}:{high:g}')
        if self.automaton is not None:
            check_variables(self.automaton, self.system.variables)

    @property
    def variables(self):
        return self.system.variables

    def replace(self, **changes):
        fields = dict(system=self.system, partition=self.partition,
                      init=self.init, automaton=self.automaton)
        fields.update(changes)
        return Model(**fields)


def split_combined(text):
    """Split a combined listing into the model part and the property part
    (None when there is no ``process`` line).
    """
    lines = text.splitlines(keepends=True)
    for i, line in enumerate(lines):
        if line.lstrip().startswith('process'):
            return ''.join(lines[:i]), ''.join(lines[i:]), i
    return text, None, len(lines)


def _build_terms(groups, variables, text, line=None, source=None):
    terms = []
    for group in groups:
        items = list(group)
        coefficient = 1.0
        if items and isinstance(items[0], float):
            coefficient = items.pop(0)
        indices = []
        for item in items:
            if item.text not in variables:
                raise error_at(text, item.loc, f'unknown variable {item.text}',
                               source, line)
            index = variables.index(item.text)
            if index in indices:
                raise error_at(text, item.loc, f'variable {item.text} '
                               f'repeated in one term', source, line)
            indices.append(index)
        terms.append(Term(coefficient, indices))
    if len(terms) == 1 and not terms[0].factors and terms[0].coefficient == 0:
        return []
    return terms


def parse_terms(text, variables, line=None, source=None):
    """Parse ``c1*X*Y + c2*Z + c3`` into terms over ``variables``. A lone
    ``0`` is the empty sum.
    """
    groups = parse_text(EXPRESSION, text, source, line)
    return _build_terms(groups, variables, text, line, source)


def parse_init_line(text, variables, line=None, source=None):
    """Parse a whole ``INIT: lo:hi, ...`` line."""
    intervals = [tuple(pair) for pair in
                 parse_text(INIT_LINE, text, source, line)]
    if len(intervals) != len(variables):
        raise ParseError(f'INIT has {len(intervals)} intervals, expected '
                         f'{len(variables)}', line, source=source)
    try:
        return InitRegion(intervals)
    except ModelError as e:
        raise ParseError(str(e), line, source=source) from None


def parse_threshold_line(text, line=None, source=None):
    """Parse a whole ``TRES: X: v1, v2, ...`` line. Returns the name, its
    offset in the line and the values.
    """
    parsed = parse_text(TRES_LINE, text, source, line)
    name, values = parsed[0], list(parsed[1:])
    tol = settings['duplicate_tolerance']
    if len(values) < 2:
        raise error_at(text, name.loc, f'{name.text} needs at least two '
                       f'thresholds', source, line)
    for lo, hi in zip(values, values[1:]):
        if hi - lo <= tol:
            raise error_at(text, name.loc, f'thresholds of {name.text} are '
                           f'not strictly increasing ({lo:g}, {hi:g})',
                           source, line)
    return name, values


def line_keyword(text):
    head, sep, _ = text.partition(':')
    return head.strip().upper() if sep else None


def parse_system_lines(lines, source=None):
    """Parse VARS and EQ lines. Returns the system and the remaining
    (line number, keyword, text) entries for the caller.
    """
    variables = None
    equations = {}
    rest = []
    for lineno, raw in lines:
        text = raw.split('#', 1)[0].rstrip()
        if not text.strip():
            continue
        kind = line_keyword(text)
        if kind is None:
            raise ParseError(f'expected KEYWORD: ..., found {text.strip()!r}',
                             lineno, source=source)
        if kind == 'VARS':
            if variables is not None:
                raise ParseError('VARS declared twice', lineno,
                                 source=source)
            names = parse_text(VARS_LINE, text, source, lineno)
            variables = [name.text for name in names]
        elif kind == 'EQ':
            if variables is None:
                raise ParseError('EQ before VARS', lineno, source=source)
            parsed = parse_text(EQ_LINE, text, source, lineno)
            lhs = parsed[0]
            name = lhs.text[1:]
            if not lhs.text.startswith('d') or not name:
                raise error_at(text, lhs.loc, f'expected EQ:dX = ..., found '
                               f'{lhs.text!r}', source, lineno)
            if name not in variables:
                raise error_at(text, lhs.loc, f'equation for unknown '
                               f'variable {name}', source, lineno)
            if name in equations:
                raise error_at(text, lhs.loc, f'second equation for {name}',
                               source, lineno)
            equations[name] = _build_terms(parsed[1:], variables, text,
                                           lineno, source)
        else:
            rest.append((lineno, kind, text))
    if variables is None:
        raise ParseError('no VARS line', source=source)
    for name in variables:
        if name not in equations:
            raise ParseError(f'no equation for {name}', source=source)
    system = MultiAffineSystem(variables, [equations[v] for v in variables])
    return system, rest


def parse_bio(text, source=None):
    model_text, property_text, offset = split_combined(text)
    numbered = list(enumerate(model_text.splitlines(), start=1))
    system, rest = parse_system_lines(numbered, source)
    variables = system.variables
    thresholds = {}
    init = []
    for lineno, kind, line in rest:
        if kind == 'TRES':
            name, values = parse_threshold_line(line, lineno, source)
            if name.text not in variables:
                raise error_at(line, name.loc, f'thresholds for unknown '
                               f'variable {name.text}', source, lineno)
            if name.text in thresholds:
                raise error_at(line, name.loc, f'second TRES line for '
                               f'{name.text}', source, lineno)
            thresholds[name.text] = (values, lineno)
        elif kind == 'INIT':
            init.append((parse_init_line(line, variables, lineno, source),
                         lineno))
        else:
            raise ParseError(f'unknown keyword {kind}', lineno,
                             source=source)
    for name in variables:
        if name not in thresholds:
            raise ParseError(f'no TRES line for {name}', source=source)
    partition = Partition(variables, [thresholds[v][0] for v in variables])
    for region, lineno in init:
        for name, (lo, hi), (low, high) in zip(variables, region.intervals,
                                               partition.bounds):
            if lo < low or hi > high:
                raise ParseError(f'INIT interval {lo:g}:{hi:g} of {name} lies '
                                 f'outside {low:g}:{high:g}', lineno,
                                 source=source)
    automaton = None
    if property_text is not None:
        try:
            automaton = parse_property(property_text, source)
        except ParseError as e:
            line = None if e.line is None else e.line + offset
            raise ParseError(e.message, line, e.column, source) from None
    model = Model(system, partition, [region for region, _ in init],
                  automaton)
    logger.debug(f'parsed model with {system.dim} variables and '
                 f'{partition.rectangle_count} rectangles')
    return model


def format_term(term, variables):
    if term.coefficient < 0:
        coefficient = f'({format_number(term.coefficient)})'
    else:
        coefficient = format_number(term.coefficient)
    return '*'.join([coefficient] + [variables[i] for i in term.factors])


def format_equation(terms, variables):
    if not terms:
        return '0'
    return ' + '.join(format_term(term, variables) for term in terms)


def emit_system(system):
    lines = [f'VARS:{",".join(system.variables)}', '']
    for name, terms in zip(system.variables, system.equations):
        lines.append(f'EQ:d{name} = '
                     f'{format_equation(terms, system.variables)}')
    return '\n'.join(lines) + '\n'


def emit_bio(model):
    lines = [emit_system(model.system)]
    for name, values in zip(model.partition.variables,
                            model.partition.thresholds):
        lines.append(f'TRES:{name}: '
                     f'{", ".join(format_number(v) for v in values)}\n')
    if model.init:
        lines.append('\n')
    for region in model.init:
        intervals = ', '.join(f'{format_number(lo)}:{format_number(hi)}'
                              for lo, hi in region.intervals)
        lines.append(f'INIT: {intervals}\n')
    text = lines[0] + '\n' + ''.join(lines[1:])
    if model.automaton is not None:
        text += '\n' + emit_property(model.automaton)
    return text
