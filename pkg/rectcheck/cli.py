"""Command-line entry point.

Every subcommand writes its artifact to stdout and diagnostics to stderr.
``check`` exits with 0 when the property holds, 1 when it is violated and 2 on
errors; ``validate`` exits with 1 when a trajectory escapes the abstraction.
"""

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from . import __version__, settings
from .checker import ALGORITHMS, check, format_report
from .errors import ModelError, RectcheckError, StateLimitExceeded
from .generators import INIT_MODES, gen_chain
from .multiaffine import emit_bio, emit_system, parse_bio
from .partition import added_thresholds, refine_auto, refine_uniform
from .property import PATTERNS, ltl_template, parse_guard, parse_property
from .rats import (TRANSIENT_TESTS, AbstractionOptions, export_csv, export_dot,
                   format_stats, generate_parallel, generate_reachable,
                   prepare_model)
from .reaction_model import (compile_mass_action, network_to_model,
                             parse_reaction_file, validate_network)
from .simulate import (default_step, format_report as format_soundness,
                       integrate_rk4, scan_initial, trajectory_to_csv)
logger = logging.getLogger(__name__)

COMMANDS = ('compile', 'abstract', 'check', 'refine', 'simulate', 'validate',
            'gen-chain')
EXIT_HOLDS = 0
EXIT_VIOLATED = 1
EXIT_ERROR = 2


@dataclass(frozen=True)
class RunConfig:

    command: str
    path: str = None
    workers: int = settings['workers']
    sign_tolerance: float = settings['sign_tolerance']
    transient_test: str = settings['transient_test']
    max_states: int = None
    guard_thresholds: bool = True
    dot: str = None
    csv: str = None
    projection: tuple = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ModelError(f'unknown command {self.command}')
        if self.workers < 1:
            raise ModelError(f'--workers must be at least 1, got '
                             f'{self.workers}')

    @classmethod
    def from_args(cls, args):
        projection = getattr(args, 'projection', None)
        if projection is not None:
            projection = tuple(v.strip() for v in projection.split(','))
            if len(projection) != 2:
                raise ModelError('--projection expects two variables, as in '
                                 'A,B')
        return cls(
            command=args.command,
            path=getattr(args, 'path', None),
            workers=getattr(args, 'workers', settings['workers']),
            sign_tolerance=getattr(args, 'tolerance',
                                   settings['sign_tolerance']),
            transient_test=getattr(args, 'transient_test',
                                   settings['transient_test']),
            max_states=getattr(args, 'max_states', None),
            guard_thresholds=not getattr(args, 'no_guard_thresholds', False),
            dot=getattr(args, 'dot', None),
            csv=getattr(args, 'csv', None),
            projection=projection)

    @property
    def options(self):
        return AbstractionOptions(self.sign_tolerance, self.transient_test,
                                  self.max_states)


def _read(path):
    if path == '-':
        return sys.stdin.read()
    return Path(path).read_text()


def _load_model(config):
    return parse_bio(_read(config.path), config.path)


def _generate(model, config):
    if config.workers == 1:
        return generate_reachable(model, config.options)
    return generate_parallel(model, config.options, config.workers)


def cmd_compile(args, config):
    network = parse_reaction_file(_read(config.path), config.path)
    for diagnostic in validate_network(network, args.conservation):
        logger.warning(diagnostic)
    model = network_to_model(network)
    if model is None:
        logger.info('no thresholds for every species; emitting equations only')
        sys.stdout.write(emit_system(compile_mass_action(network)))
    else:
        sys.stdout.write(emit_bio(model))
    return EXIT_HOLDS


def cmd_abstract(args, config):
    model = prepare_model(_load_model(config),
                          auto_thresholds=config.guard_thresholds)
    rats = _generate(model, config)
    if config.dot:
        Path(config.dot).write_text(export_dot(rats, config.projection))
        logger.info(f'wrote {config.dot}')
    if config.csv:
        states, transitions = export_csv(rats)
        Path(f'{config.csv}-states.csv').write_text(states)
        Path(f'{config.csv}-transitions.csv').write_text(transitions)
        logger.info(f'wrote {config.csv}-states.csv and '
                    f'{config.csv}-transitions.csv')
    sys.stdout.write(format_stats(rats.stats))
    return EXIT_HOLDS


def _automaton(args, model):
    if args.template or args.guard:
        if not (args.template and args.guard):
            raise ModelError('--template and --guard go together')
        return ltl_template(args.template, parse_guard(args.guard))
    if args.property:
        return parse_property(_read(args.property), args.property)
    if model.automaton is None:
        raise ModelError(f'{args.path} has no property; pass a property file '
                         f'or --template and --guard')
    return model.automaton


def cmd_check(args, config):
    model = _load_model(config)
    automaton = _automaton(args, model)
    model = prepare_model(model, automaton,
                          auto_thresholds=config.guard_thresholds)
    verdict = check(model, None, args.algorithm, config.workers,
                    config.options)
    sys.stdout.write(format_report(verdict, model.partition, model.automaton))
    return EXIT_HOLDS if verdict.holds else EXIT_VIOLATED


def cmd_refine(args, config):
    model = _load_model(config)
    before = model.partition
    partition = before
    if args.mode == 'uniform':
        if args.var is None or args.width is None:
            raise ModelError('uniform refinement needs --var and --width')
        partition = refine_uniform(partition, args.var, args.width, args.lo,
                                   args.hi)
    else:
        for _ in range(args.iterations):
            partition = refine_auto(model.system, partition)
    for name, values in added_thresholds(before, partition).items():
        logger.info(f'added to {name}: '
                    f'{", ".join(f"{v:g}" for v in values)}')
    sys.stdout.write(emit_bio(model.replace(partition=partition)))
    return EXIT_HOLDS


def _start(args, model):
    if args.start is not None:
        try:
            return [float(v) for v in args.start.split(',')]
        except ValueError:
            raise ModelError(f'--start expects numbers, got '
                             f'{args.start!r}') from None
    if not model.init:
        raise ModelError(f'{args.path} has no INIT line; pass --start')
    return [lo for lo, _ in model.init[0].intervals]


def cmd_simulate(args, config):
    model = _load_model(config)
    start = _start(args, model)
    step = args.step or default_step(model.system, model.partition)
    trajectory = integrate_rk4(model.system, start, step, args.duration,
                               model.partition.bounds)
    if trajectory.escaped:
        logger.warning(f'trajectory left the bounding box at t = '
                       f'{trajectory.times[-1]:g}')
    sys.stdout.write(trajectory_to_csv(trajectory, model.variables))
    return EXIT_HOLDS


def cmd_validate(args, config):
    model = _load_model(config)
    prepared = prepare_model(model, auto_thresholds=config.guard_thresholds)
    rats = _generate(prepared, config)
    report = scan_initial(model, args.samples, args.step, args.duration,
                          rats=rats, seed=args.seed)
    sys.stdout.write(format_soundness(report))
    return EXIT_HOLDS if report.sound else EXIT_VIOLATED


def cmd_gen_chain(args, config):
    model = gen_chain(args.k, args.levels, args.top, args.init)
    sys.stdout.write(emit_bio(model))
    return EXIT_HOLDS


def _add_abstraction_flags(parser):
    parser.add_argument('--workers', type=int, default=settings['workers'],
                        help='number of worker processes')
    parser.add_argument('--tolerance', type=float,
                        default=settings['sign_tolerance'],
                        help='sign tolerance for vertex derivatives')
    parser.add_argument('--transient-test', choices=TRANSIENT_TESTS,
                        default=settings['transient_test'])
    parser.add_argument('--max-states', type=int, default=None)
    parser.add_argument('--no-guard-thresholds', action='store_true',
                        help='do not insert init bounds and guard constants '
                             'as thresholds')


def build_parser():
    parser = argparse.ArgumentParser(
        prog='rectcheck',
        description='Rectangular abstraction and LTL model checking of '
                    'multi-affine ODE models')
    parser.add_argument('--version', action='version',
                        version=f'%(prog)s {__version__}')
    parser.add_argument('--verbose', action='store_true',
                        help='log debug messages')
    commands = parser.add_subparsers(dest='command', required=True)

    compile_ = commands.add_parser('compile', help='reaction file to .bio')
    compile_.add_argument('path')
    compile_.add_argument('--conservation', action='store_true',
                          help='also report conservation laws')

    abstract = commands.add_parser('abstract',
                                   help='generate the reachable abstraction')
    abstract.add_argument('path')
    _add_abstraction_flags(abstract)
    abstract.add_argument('--dot', metavar='PATH')
    abstract.add_argument('--csv', metavar='PREFIX',
                          help='write PREFIX-states.csv and '
                               'PREFIX-transitions.csv')
    abstract.add_argument('--projection', metavar='VAR,VAR')

    check_ = commands.add_parser('check', help='model check a property')
    check_.add_argument('path')
    check_.add_argument('property', nargs='?')
    _add_abstraction_flags(check_)
    check_.add_argument('--template', choices=PATTERNS)
    check_.add_argument('--guard', help='for example "B<=3 && C>1"')
    check_.add_argument('--algorithm', choices=ALGORITHMS)

    refine = commands.add_parser('refine', help='add thresholds')
    refine.add_argument('path')
    refine.add_argument('mode', choices=('uniform', 'auto'))
    refine.add_argument('--var')
    refine.add_argument('--width', type=float)
    refine.add_argument('--lo', type=float)
    refine.add_argument('--hi', type=float)
    refine.add_argument('--iterations', type=int, default=1)

    simulate = commands.add_parser('simulate', help='RK4 trajectory as CSV')
    simulate.add_argument('path')
    simulate.add_argument('--start', metavar='X1,X2,...')
    simulate.add_argument('--step', type=float)
    simulate.add_argument('--duration', type=float, default=1.0)

    validate = commands.add_parser(
        'validate', help='check random trajectories against the abstraction')
    validate.add_argument('path')
    _add_abstraction_flags(validate)
    validate.add_argument('--samples', type=int, default=100)
    validate.add_argument('--step', type=float)
    validate.add_argument('--duration', type=float, default=1.0)
    validate.add_argument('--seed', type=int)

    chain = commands.add_parser('gen-chain',
                                help='catalytic chain benchmark model')
    chain.add_argument('k', type=int)
    chain.add_argument('--levels', type=int, default=5)
    chain.add_argument('--top', type=float, default=10.0)
    chain.add_argument('--init', choices=INIT_MODES, default='corner')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(levelname)s:%(name)s: %(message)s',
                        stream=sys.stderr, force=True)
    handler = globals()[f'cmd_{args.command.replace("-", "_")}']
    try:
        config = RunConfig.from_args(args)
        return handler(args, config)
    except StateLimitExceeded as e:
        logger.error(f'{e}; {e.stats.states if e.stats else "?"} states '
                     f'explored')
    except (RectcheckError, OSError) as e:
        logger.error(str(e))
    return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
