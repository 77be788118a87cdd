import itertools
from pathlib import Path
import pytest
from conftest import make_model, random_automaton, random_model
from rectcheck.checker import (ALGORITHMS, HOLDS_TEXT, FAILS_TEXT,
                               Counterexample, ProductState, check,
                               check_nested_dfs, check_owcty_parallel,
                               format_report, format_state, format_trace,
                               product_successors, rectangle_steps,
                               validate_counterexample)
from rectcheck.errors import ModelError, StateLimitExceeded
from rectcheck.property import (AutomatonTransition, BuchiAutomaton,
                                TRUE, guard_eval, ltl_template,
                                parse_guard)
from rectcheck.rats import (AbstractionOptions, generate_reachable,
                            prepare_model, successors)

BASELINES = Path(__file__).resolve().parent / 'baselines'


def run(model, automaton, **kwargs):
    prepared = prepare_model(model, automaton)
    return prepared, check(prepared, automaton, **kwargs)


@pytest.mark.parametrize('algorithm, workers', [('ndfs', 1), ('owcty', 1),
                                                ('owcty', 2)])
def test_demo_property2_holds(demo, prop2, algorithm, workers):
    _, verdict = run(demo, prop2, algorithm=algorithm, workers=workers)
    assert verdict.holds
    assert verdict.counterexample is None
    assert verdict.stats.states == 22
    assert verdict.stats.transitions == 62
    assert verdict.stats.state_size == 16
    if algorithm == 'owcty':
        assert verdict.stats.iterations == 1
        assert sum(verdict.stats.per_worker) == 22


def test_demo_property1_fails(demo, prop1):
    model, verdict = run(demo, prop1)
    assert not verdict.holds
    trace = verdict.counterexample
    assert validate_counterexample(model, prop1, trace) == []
    assert trace.cycle
    for state in trace.cycle:
        assert state.automaton_state == 'q2'
        assert state.rectangle[0] == 0
    _, again = run(demo, prop1)
    assert again.counterexample == trace


def test_owcty_counterexample_is_valid(demo, prop1):
    model, verdict = run(demo, prop1, algorithm='owcty', workers=3)
    assert not verdict.holds
    assert validate_counterexample(model, prop1,
                                   verdict.counterexample) == []
    bare = check_owcty_parallel(model, prop1, workers=2,
                                counterexample=False)
    assert not bare.holds
    assert bare.counterexample is None


def test_exchange_properties(exchange):
    stable = ltl_template('FG', parse_guard('B<=3'))
    _, verdict = run(exchange, stable)
    assert verdict.holds

    eventually = ltl_template('F', parse_guard('B>3'))
    model, verdict = run(exchange, eventually)
    assert not verdict.holds
    trace = verdict.counterexample
    assert validate_counterexample(model, eventually, trace) == []
    for state in trace.stem + trace.cycle:
        assert state.automaton_state == 'q1'
        assert state.rectangle[1] < 2


def test_pre_initial_step_reads_initial_rectangle(demo):
    # the init rectangle has A in [4, 6], so A<4 never lets the claim start
    def claim(guard):
        return BuchiAutomaton('start', ('q0', 'q1'), 'q0', ('q1',), [
            AutomatonTransition('q0', 'q1', parse_guard(guard)),
            AutomatonTransition('q1', 'q1')])

    _, verdict = run(demo, claim('A<4'))
    assert verdict.holds
    assert verdict.stats.states == 0
    _, verdict = run(demo, claim('A>=4'))
    assert not verdict.holds
    trace = verdict.counterexample
    first = (trace.stem + trace.cycle)[0]
    assert first == ProductState((1, 0, 1), 'q1')


def test_product_successors(demo, prop1):
    model = prepare_model(demo, prop1)
    rectangle = next(iter(generate_reachable(model).initial))
    found = product_successors(model, prop1, ProductState(rectangle, 'q1'))
    targets = [t.target for t in successors(model.system, model.partition,
                                            rectangle)]
    assert {s.rectangle for s in found} == set(targets)
    assert [s for s in found if s.automaton_state == 'q1'] == [
        ProductState(t, 'q1') for t in targets]
    assert product_successors(model, prop1,
                              ProductState(rectangle, 'q2')) == [
        ProductState(t, 'q2') for t in targets]


def test_validate_rejects_broken_trace(demo, prop1):
    model, verdict = run(demo, prop1)
    trace = verdict.counterexample
    assert validate_counterexample(model, prop1, Counterexample(
        trace.stem, [])) == ['cycle is empty']
    bogus = Counterexample(trace.stem, [ProductState((2, 3, 4), 'q1')])
    problems = validate_counterexample(model, prop1, bogus)
    assert 'cycle has no accepting state' in problems
    assert 'cycle does not close' in problems


def test_format_state(demo, prop1):
    state = ProductState((1, 0, 1), 'q1')
    assert format_state(state, demo.partition, prop1) == \
        '[4(1),0(0),2(1)-PP:0]'


def test_format_report(demo, prop1, prop2):
    model, verdict = run(demo, prop2)
    text = format_report(verdict, model.partition, prop2)
    assert '  --- No accepting cycle ---' in text
    assert 'states:            22' in text
    assert 'size of a state:   16' in text
    assert 'size of appendix:  8' in text
    assert text.rstrip().endswith(HOLDS_TEXT)

    model, verdict = run(demo, prop1, algorithm='owcty')
    text = format_report(verdict, model.partition, prop1)
    assert text.startswith('=======================\n'
                           '--- Accepting cycle ---\n')
    assert '[pre-initial]' in text
    assert '======= Cycle =======' in text
    assert 'size of appendix:  12' in text
    assert text.rstrip().endswith(FAILS_TEXT)


def test_errors(demo, prop2):
    model = prepare_model(demo, prop2)
    with pytest.raises(ModelError, match='unknown algorithm'):
        check(model, prop2, algorithm='scc')
    with pytest.raises(ModelError, match='no property'):
        check(prepare_model(demo))
    with pytest.raises(ModelError):
        check_owcty_parallel(model, prop2, workers=0)
    assert check(model.replace(automaton=prop2)).holds


def test_state_limit(demo, prop2):
    model = prepare_model(demo, prop2)
    options = AbstractionOptions(max_states=5)
    with pytest.raises(StateLimitExceeded):
        check_nested_dfs(model, prop2, options)
    with pytest.raises(StateLimitExceeded):
        check_owcty_parallel(model, prop2, workers=2, options=options)


@pytest.mark.parametrize('threshold, holds', [(1.1e-6, True), (6e-4, True),
                                              (1e-4, False)])
def test_ammonium_invariants(ammonium, threshold, holds):
    variable = 'NH3in' if threshold == 1.1e-6 else 'NH4in'
    automaton = ltl_template('G', parse_guard(f'{variable}<{threshold}'))
    model, verdict = run(ammonium, automaton)
    assert verdict.holds == holds
    if not holds:
        assert validate_counterexample(model, automaton,
                                       verdict.counterexample) == []


@pytest.mark.slow
def test_nested_dfs_agrees_with_owcty(rng):
    for workers in itertools.islice(itertools.cycle((1, 2, 4, 8)), 200):
        model = random_model(rng)
        automaton = random_automaton(rng, model.partition)
        model = prepare_model(model, automaton)
        sequential = check_nested_dfs(model, automaton)
        distributed = check_owcty_parallel(model, automaton, workers,
                                           counterexample=False)
        assert sequential.holds == distributed.holds
        if sequential.holds:
            assert sequential.stats.states == distributed.stats.states
        else:
            assert validate_counterexample(
                model, automaton, sequential.counterexample) == []


def test_g_template_matches_reachability_scan(rng):
    # G p fails iff some reachable rectangle violates p
    for _ in range(30):
        model = random_model(rng)
        i = int(rng.integers(model.system.dim))
        values = model.partition.thresholds[i]
        constant = values[int(rng.integers(1, len(values) - 1))] \
            if len(values) > 2 else values[-1]
        guard = parse_guard(f'{model.variables[i]}<{constant}')
        automaton = ltl_template('G', guard)
        model = prepare_model(model, automaton)
        rats = generate_reachable(model)
        violated = any(not guard_eval(guard, r, model.partition)
                       for r in rats.states)
        assert check_nested_dfs(model, automaton).holds != violated
        assert check_owcty_parallel(model, automaton,
                                    counterexample=False).holds != violated


def dead_end_model():
    # dA = 1 pushes A up into [5, 10], which has no exit and no self-loop
    return make_model(('A',), [[(1, [])]], [(0, 5, 10)], init=[[(0, 5)]])


@pytest.mark.parametrize('algorithm', ALGORITHMS)
def test_dead_end_rectangle_stutters(algorithm):
    model = dead_end_model()
    assert successors(model.system, model.partition, (1,)) == []
    automaton = ltl_template('G', parse_guard('A<5'))
    model, verdict = run(model, automaton, algorithm=algorithm)
    assert not verdict.holds
    trace = verdict.counterexample
    assert validate_counterexample(model, automaton, trace) == []
    assert trace.cycle == [ProductState((1,), 'q2')]


def test_dead_end_keeps_f_and_fg_sound():
    model = dead_end_model()
    _, verdict = run(model, ltl_template('F', parse_guard('A>=5')))
    assert verdict.holds
    _, verdict = run(model, ltl_template('FG', parse_guard('A>=5')))
    assert verdict.holds
    _, verdict = run(model, ltl_template('G', parse_guard('A>=5')))
    assert not verdict.holds


def test_rectangle_steps_follow_vertex_field(demo, rng):
    # the tolerance absorbs rounding noise between the two evaluation paths
    options = AbstractionOptions(sign_tolerance=1e-9)
    for model in [prepare_model(demo)] + [random_model(rng)
                                          for _ in range(10)]:
        system, partition = model.system, model.partition
        for rectangle in partition.rectangles():
            found = [t.target for t in successors(system, partition,
                                                  rectangle, options)]
            assert rectangle_steps(system, partition, rectangle,
                                   options) == (found or [tuple(rectangle)])
    model = dead_end_model()
    assert rectangle_steps(model.system, model.partition, (1,)) == [(1,)]
    assert rectangle_steps(model.system, model.partition, (0,)) == [(1,)]


def test_validate_rejects_missing_exit(demo, prop1):
    model, verdict = run(demo, prop1)
    trace = verdict.counterexample
    # (0, 0, 1) has no exit across the upper C face
    jump = [ProductState((0, 0, 1), 'q1'), ProductState((0, 0, 2), 'q1')]
    problems = validate_counterexample(model, prop1, Counterexample(
        jump, trace.cycle))
    assert f'no product step {jump[0]} -> {jump[1]}' in problems


def test_demo_property1_trace_baseline(demo, prop1):
    model, verdict = run(demo, prop1, algorithm='ndfs')
    text = format_trace(verdict.counterexample, model.partition, prop1)
    assert text == (BASELINES / 'demo-prop1.trace').read_text()


def test_true_invariant_never_fails(demo):
    automaton = ltl_template('G', TRUE)
    _, verdict = run(demo, automaton)
    assert verdict.holds


def test_owcty_history_shrinks(rng):
    for _ in range(20):
        model = random_model(rng)
        automaton = random_automaton(rng, model.partition)
        model = prepare_model(model, automaton)
        stats = check_owcty_parallel(model, automaton,
                                     counterexample=False).stats
        assert stats.history == sorted(stats.history, reverse=True)
        assert stats.iterations <= max(stats.states, 1)
