"""Scalable benchmark models."""

import logging
import numpy as np
from .errors import ModelError
from .grammar import format_number
from .reaction_model import network_to_model, parse_reaction_file
logger = logging.getLogger(__name__)

INIT_MODES = ('corner', 'box')


def chain_reactions(k):
    """Catalytic chain S + E <-> ES1 <-> ... <-> ESk -> P + E."""
    if k < 1:
        raise ModelError(f'the chain needs at least one intermediate, got {k}')
    lines = ['S + E <-> ES1 @ 0.01, 1']
    for i in range(1, k):
        lines.append(f'ES{i} <-> ES{i + 1} @ 1, 1')
    lines.append(f'ES{k} -> P + E @ 1')
    return lines


def chain_text(k, levels=5, top=10.0, init='corner'):
    """The chain as a reaction file with uniform thresholds. ``corner``
    starts with substrate and enzyme in their top slab and no complexes;
    ``box`` starts anywhere.
    """
    if levels < 2:
        raise ModelError(f'need at least two threshold levels, got {levels}')
    if init not in INIT_MODES:
        raise ModelError(f'unknown init mode {init}, expected one of '
                         f'{", ".join(INIT_MODES)}')
    species = ['S', 'E'] + [f'ES{i}' for i in range(1, k + 1)]
    values = np.linspace(0.0, top, levels)
    tres = ', '.join(format_number(v) for v in values)
    lines = chain_reactions(k)
    lines += [f'TRES: {name}: {tres}' for name in species]
    if init == 'box':
        box = f'0:{format_number(top)}'
        lines.append('INIT: ' + ', '.join(box for _ in species))
    else:
        high = f'{format_number(values[-2])}:{format_number(top)}'
        low = f'0:{format_number(values[1])}'
        lines.append('INIT: ' + ', '.join([high, high] +
                                          [low] * k))
    return '\n'.join(lines) + '\n'


def gen_chain(k, levels=5, top=10.0, init='corner'):
    network = parse_reaction_file(chain_text(k, levels, top, init),
                                  f'chain-{k}')
    model = network_to_model(network)
    logger.debug(f'chain k={k}: {model.system.dim} variables, '
                 f'{model.partition.rectangle_count} rectangles')
    return model
