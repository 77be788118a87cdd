"""Reaction networks and their mass-action compilation.

The .rxn format is line oriented:

    # comments run to the end of the line
    CONST: NH4ex = 1e-5
    SPECIES: AmtB, NH3in
    AmtB + NH4ex <-> AmtB:NH4 @ 5e8, 5e3
    AmtB:NH4 -> AmtB:NH3 + H_ex @ 50
    NH4in -> @ 80
    A -> 2 B @ 1
    TRES: NH3in: 0, 1e-6, 2e-6
    INIT: 0:1e-5, ...

Reactant coefficients must be 1; anything else would make the compiled
system leave the multi-affine class.
"""

import logging
from dataclasses import dataclass, field
import numpy as np
import pyparsing as pp
from scipy.linalg import null_space
from .errors import ModelError, ParseError
from .grammar import (digits, error_at, fail, format_number, keyword,
                      located_name, number, parse_text)
from .multiaffine import (Model, MultiAffineSystem, Term, line_keyword,
                          parse_init_line, parse_threshold_line)
from .partition import Partition
logger = logging.getLogger(__name__)


def _species_item(s, loc, toks):
    coefficient = int(toks[0]) if len(toks) == 2 else 1
    if coefficient < 1:
        fail(s, loc, f'coefficient of {toks[-1].text} must be positive')
    return [(toks[-1], coefficient)]


def _positive_rate(s, loc, toks):
    if not toks[0] > 0:
        fail(s, loc, f'rate must be positive, got {format_number(toks[0])}')


def _not_a_number(s, loc, toks):
    fail(s, loc, f'rate is not a number: {toks[0]!r}')


SPECIES_ITEM = (pp.Opt(digits + pp.Opt(pp.Suppress('*'))) +
                located_name).set_parse_action(_species_item)
SIDE = pp.Group(pp.Opt(pp.DelimitedList(SPECIES_ITEM, delim='+')))
RATE = (number.copy().add_parse_action(_positive_rate) |
        pp.Word(pp.printables, exclude_chars=',').set_parse_action(
            _not_a_number))
REACTION = (SIDE + pp.one_of('<-> ->') + SIDE + pp.Suppress('@') +
            pp.Group(pp.DelimitedList(RATE)))
CONST_LINE = keyword('CONST') + located_name + pp.Suppress('=') + number
SPECIES_LINE = keyword('SPECIES') + pp.DelimitedList(located_name)


@dataclass(frozen=True)
class Reaction:

    reactants: tuple
    products: tuple
    rate: float
    line: int = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'reactants', tuple(self.reactants))
        object.__setattr__(self, 'products',
                           tuple((name, int(c)) for name, c in self.products))
        if self.rate <= 0:
            raise ModelError(f'reaction rate must be positive, got '
                             f'{self.rate}')
        if len(set(self.reactants)) != len(self.reactants):
            raise ModelError(f'reactant coefficient above 1 in '
                             f'{" + ".join(self.reactants)}')

    def __str__(self):
        products = ' + '.join(name if c == 1 else f'{c} {name}'
                              for name, c in self.products)
        return f'{" + ".join(self.reactants)} -> {products} @ {self.rate:g}'


@dataclass(frozen=True)
class ReactionNetwork:

    species: tuple
    constants: dict
    reactions: tuple
    declared: tuple = ()
    thresholds: dict = field(default_factory=dict)
    init: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'species', tuple(self.species))
        object.__setattr__(self, 'reactions', tuple(self.reactions))
        object.__setattr__(self, 'declared', tuple(self.declared))
        overlap = set(self.species) & set(self.constants)
        if overlap:
            raise ModelError(f'species both constant and dynamic: '
                             f'{", ".join(sorted(overlap))}')
        if not self.species:
            raise ModelError('a network needs at least one dynamic species')

    def consumed(self):
        return {name for r in self.reactions for name in r.reactants}

    def produced(self):
        return {name for r in self.reactions for name, _ in r.products}

    def sinks(self):
        """Species that are produced, never consumed, not constant and not
        thresholded. Only meaningful when the file carries thresholds.
        """
        if not self.thresholds:
            return []
        consumed = self.consumed()
        produced = self.produced()
        return [name for name in self.species
                if name in produced and name not in consumed
                and name not in self.thresholds]

    def dynamic_species(self):
        sinks = set(self.sinks())
        return [name for name in self.species if name not in sinks]


def _reactants(items, raw, line, direction=''):
    names = [name.text for name, _ in items]
    for name, coefficient in items:
        total = names.count(name.text) * coefficient
        if total != 1:
            raise error_at(raw, name.loc, f'reactant coefficient {total} for '
                           f'{name.text}{direction}; reactant coefficients '
                           f'must be 1', line=line)
    return names


def _products(items):
    merged = {}
    for name, coefficient in items:
        merged[name.text] = merged.get(name.text, 0) + coefficient
    return list(merged.items())


def parse_reaction_line(raw, line=None):
    """Parse one reaction line into one or two Reaction records."""
    if '@' not in raw:
        raise ParseError('missing @ rate', line, len(raw.rstrip()) + 1)
    if '->' not in raw.partition('@')[0]:
        raise ParseError('missing -> or <->', line, 1)
    lhs, arrow, rhs, rates = parse_text(REACTION, raw, line=line)
    if not lhs and not rhs:
        raise ParseError('reaction has no species', line, 1)
    expected = 2 if arrow == '<->' else 1
    if expected == 2:
        # the backward direction consumes the products
        _reactants(rhs, raw, line, ' in the backward direction')
    if len(rates) != expected:
        raise error_at(raw, raw.index('@'), f'expected {expected} rate(s), '
                       f'found {len(rates)}', line=line)
    forward = Reaction(_reactants(lhs, raw, line), _products(rhs), rates[0],
                       line)
    if expected == 1:
        return [forward]
    backward = Reaction(_reactants(rhs, raw, line), _products(lhs), rates[1],
                        line)
    return [forward, backward]


def parse_reaction_file(text, source=None):
    species = []
    constants = {}
    constant_lines = {}
    declared = []
    reactions = []
    thresholds = {}
    init_lines = []

    def see(name):
        if name not in constants and name not in species:
            species.append(name)

    try:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            content = raw.split('#', 1)[0].rstrip()
            if not content.strip():
                continue
            kind = line_keyword(content)
            if kind == 'CONST':
                name, value = parse_text(CONST_LINE, content, line=lineno)
                if name.text in species:
                    raise error_at(content, name.loc, f'{name.text} is used '
                                   f'as a dynamic species before its CONST '
                                   f'line', line=lineno)
                constants[name.text] = value
                constant_lines[name.text] = lineno
            elif kind == 'SPECIES':
                for name in parse_text(SPECIES_LINE, content, line=lineno):
                    declared.append(name.text)
                    see(name.text)
            elif kind == 'TRES':
                name, values = parse_threshold_line(content, lineno)
                thresholds[name.text] = (values, lineno)
            elif kind == 'INIT':
                init_lines.append((content, lineno))
            else:
                for reaction in parse_reaction_line(content, lineno):
                    for name in reaction.reactants:
                        see(name)
                    for name, _ in reaction.products:
                        see(name)
                    reactions.append(reaction)
    except ParseError as e:
        raise ParseError(e.message, e.line, e.column, source) from None
    if not reactions:
        raise ParseError('no reactions', source=source)
    used = {name for r in reactions for name in r.reactants} | \
        {name for r in reactions for name, _ in r.products}
    if declared:
        for name in sorted(used - set(declared) - set(constants)):
            line = next(r.line for r in reactions
                        if name in r.reactants or
                        name in dict(r.products))
            raise ParseError(f'undeclared species {name}', line,
                             source=source)
    for name, lineno in constant_lines.items():
        if name not in used:
            raise ParseError(f'constant {name} is not used by any reaction',
                             lineno, source=source)
    for name, (values, lineno) in thresholds.items():
        if name not in species:
            raise ParseError(f'thresholds for unknown or constant species '
                             f'{name}', lineno, source=source)
    network = ReactionNetwork(
        species=species, constants=constants, reactions=reactions,
        declared=declared,
        thresholds={name: values for name, (values, _) in thresholds.items()})
    dynamic = network.dynamic_species()
    init = tuple(parse_init_line(content, dynamic, lineno, source)
                 for content, lineno in init_lines)
    network = ReactionNetwork(network.species, network.constants,
                              network.reactions, network.declared,
                              network.thresholds, init)
    for name in network.sinks():
        logger.warning(f'dropping {name}: produced but never consumed and '
                       f'not thresholded')
    logger.debug(f'parsed {len(reactions)} reactions over {len(species)} '
                 f'species')
    return network


def compile_mass_action(network):
    """Mass-action ODEs over the dynamic species. Constant species are folded
    into the coefficients.
    """
    dynamic = network.dynamic_species()
    index = {name: i for i, name in enumerate(dynamic)}
    equations = [[] for _ in dynamic]
    for reaction in network.reactions:
        coefficient = reaction.rate
        factors = []
        for name in reaction.reactants:
            if name in network.constants:
                coefficient *= network.constants[name]
            else:
                factors.append(index[name])
        for name in reaction.reactants:
            if name in index:
                equations[index[name]].append(Term(-coefficient, factors))
        for name, stoichiometry in reaction.products:
            if name in index:
                equations[index[name]].append(
                    Term(stoichiometry * coefficient, factors))
    return MultiAffineSystem(dynamic, equations).normalized()


def network_to_model(network):
    """Compile and attach the threshold and init sidecar. Returns None when
    some dynamic species has no thresholds.
    """
    system = compile_mass_action(network)
    missing = [name for name in system.variables
               if name not in network.thresholds]
    if missing:
        logger.debug(f'no thresholds for {", ".join(missing)}')
        return None
    partition = Partition(system.variables,
                          [network.thresholds[v] for v in system.variables])
    return Model(system, partition, network.init)


def stoichiometry_matrix(network, species=None):
    species = species or network.dynamic_species()
    index = {name: i for i, name in enumerate(species)}
    matrix = np.zeros((len(species), len(network.reactions)))
    for j, reaction in enumerate(network.reactions):
        for name in reaction.reactants:
            if name in index:
                matrix[index[name], j] -= 1
        for name, coefficient in reaction.products:
            if name in index:
                matrix[index[name], j] += coefficient
    return matrix


def conservation_laws(network):
    """Basis of linear combinations of dynamic species that the network
    leaves constant, each scaled so its largest entry is 1.
    """
    species = network.dynamic_species()
    basis = null_space(stoichiometry_matrix(network, species).T)
    laws = []
    for vector in basis.T:
        vector = vector / vector[np.argmax(np.abs(vector))]
        vector[np.abs(vector) < 1e-9] = 0.0
        laws.append({name: float(c) for name, c in zip(species, vector)
                     if c != 0.0})
    return laws


def _format_law(law):
    parts = []
    for name, c in law.items():
        if np.isclose(c, 1.0):
            parts.append(name)
        else:
            parts.append(f'{c:.3g}*{name}')
    return ' + '.join(parts)


def validate_network(network, conservation=False):
    """Human-readable diagnostics. Conservation hints are opt-in."""
    diagnostics = []
    used = network.consumed() | network.produced()
    for name in network.declared:
        if name not in used:
            diagnostics.append(f'unused species {name}')
    for reaction in network.reactions:
        folded = reaction.rate
        for name in reaction.reactants:
            folded *= network.constants.get(name, 1.0)
        if folded == 0.0:
            diagnostics.append(f'zero effective rate on line {reaction.line}: '
                               f'{reaction}')
    for name in network.sinks():
        diagnostics.append(f'{name} is produced but never consumed and not '
                           f'dynamic')
    if conservation:
        for law in conservation_laws(network):
            diagnostics.append(f'conservation law: {_format_law(law)}')
    return diagnostics
