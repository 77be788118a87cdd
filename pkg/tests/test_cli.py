import io
import pytest
from conftest import MODELS
from rectcheck import __version__
from rectcheck.cli import RunConfig, build_parser, main
from rectcheck.errors import ModelError
from rectcheck.multiaffine import parse_bio


def model(name):
    return str(MODELS / name)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def counts(text):
    return [line for line in text.splitlines()
            if line.startswith(('states:', 'transitions:'))]


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(['--version'])
    assert __version__ in capsys.readouterr().out


def test_run_config():
    args = build_parser().parse_args(['abstract', 'x.bio', '--workers', '3',
                                      '--projection', 'A, C'])
    config = RunConfig.from_args(args)
    assert config.workers == 3
    assert config.projection == ('A', 'C')
    assert config.options.transient_test == 'per-dim'
    with pytest.raises(ModelError):
        RunConfig('abstract', workers=0)
    with pytest.raises(ModelError):
        RunConfig.from_args(build_parser().parse_args(
            ['abstract', 'x.bio', '--projection', 'A']))


def test_compile(capsys):
    code, out, _ = run(capsys, 'compile', model('demo.rxn'))
    assert code == 0
    assert parse_bio(out).system == parse_bio(
        (MODELS / 'demo.bio').read_text()).system


def test_compile_without_thresholds(capsys):
    code, out, _ = run(capsys, 'compile', model('binding.rxn'))
    assert code == 0
    assert out.startswith('VARS:A,B,C\n')
    assert 'TRES' not in out


def test_compile_diagnostics(capsys):
    code, out, err = run(capsys, 'compile', model('chain-k3.rxn'),
                         '--conservation')
    assert code == 0
    assert 'dropping P' in err
    assert 'conservation law' in err
    assert out.startswith('VARS:S,E,ES1,ES2,ES3\n')


def test_abstract(capsys, tmp_path):
    dot = tmp_path / 'demo.dot'
    prefix = tmp_path / 'demo'
    code, out, _ = run(capsys, 'abstract', model('demo.bio'), '--dot',
                       str(dot), '--csv', str(prefix))
    assert code == 0
    assert counts(out) == ['states:            10',
                           'transitions:       26']
    assert dot.read_text().startswith('digraph rats {')
    assert len((tmp_path / 'demo-states.csv').read_text().splitlines()) == 11
    assert (tmp_path / 'demo-transitions.csv').exists()


def test_abstract_in_parallel(capsys):
    _, sequential, _ = run(capsys, 'abstract', model('demo.bio'))
    code, parallel, _ = run(capsys, 'abstract', model('demo.bio'),
                            '--workers', '2')
    assert code == 0
    assert counts(parallel) == counts(sequential)
    assert '1: local states:' in parallel


def test_abstract_projection(capsys, tmp_path):
    dot = tmp_path / 'projection.dot'
    code, _, _ = run(capsys, 'abstract', model('demo.bio'), '--dot',
                     str(dot), '--projection', 'A,C')
    assert code == 0
    assert dot.read_text().count('fillcolor=') == 9


def test_state_limit(capsys):
    code, _, err = run(capsys, 'abstract', model('demo.bio'),
                       '--max-states', '5')
    assert code == 2
    assert 'state limit of 5 exceeded' in err


def test_read_from_stdin(capsys, monkeypatch):
    monkeypatch.setattr('sys.stdin',
                        io.StringIO((MODELS / 'demo.bio').read_text()))
    code, out, _ = run(capsys, 'abstract', '-')
    assert code == 0
    assert 'states:            10' in out


def test_check(capsys):
    code, out, _ = run(capsys, 'check', model('demo.bio'),
                       model('demo-prop2.prop'))
    assert code == 0
    assert '--- No accepting cycle ---' in out
    assert 'states:            22' in out
    code, out, _ = run(capsys, 'check', model('demo.bio'),
                       model('demo-prop1.prop'))
    assert code == 1
    assert '======= Cycle =======' in out


def test_check_owcty(capsys):
    code, out, _ = run(capsys, 'check', model('demo.bio'),
                       model('demo-prop1.prop'), '--algorithm', 'owcty',
                       '--workers', '2')
    assert code == 1
    assert 'size of appendix:  12' in out


def test_check_template(capsys):
    code, _, _ = run(capsys, 'check', model('exchange.bio'),
                     '--template', 'FG', '--guard', 'B<=3')
    assert code == 0
    code, _, _ = run(capsys, 'check', model('exchange.bio'),
                     '--template', 'F', '--guard', 'B>3')
    assert code == 1


def test_check_combined_listing(capsys, tmp_path):
    combined = tmp_path / 'combined.bio'
    combined.write_text((MODELS / 'demo.bio').read_text() + '\n' +
                        (MODELS / 'demo-prop2.prop').read_text())
    code, _, _ = run(capsys, 'check', str(combined))
    assert code == 0


@pytest.mark.parametrize('argv, message', [
    (['demo-prop.prop'], 'No such file'),
    ([], 'has no property'),
    (['--template', 'G'], 'go together'),
    (['--guard', 'D<1', '--template', 'G'], 'unknown variable D'),
])
def test_check_errors(capsys, argv, message):
    code, _, err = run(capsys, 'check', model('demo.bio'),
                       *[model(a) if a.endswith('.prop') else a
                         for a in argv])
    assert code == 2
    assert message in err


def test_refine_uniform(capsys):
    code, out, err = run(capsys, 'refine', model('demo.bio'), 'uniform',
                         '--var', 'B', '--width', '5')
    assert code == 0
    assert parse_bio(out).partition.thresholds[1] == (0, 2, 5, 10)
    assert 'added to B: 5' in err


def test_refine_errors(capsys):
    code, _, err = run(capsys, 'refine', model('demo.bio'), 'uniform',
                       '--var', 'B')
    assert code == 2
    assert '--var and --width' in err


def test_refine_auto(capsys):
    code, out, _ = run(capsys, 'refine', model('exchange.bio'), 'auto',
                       '--iterations', '2')
    assert code == 0
    refined = parse_bio(out)
    assert refined.system == parse_bio(
        (MODELS / 'exchange.bio').read_text()).system


def test_simulate(capsys):
    code, out, _ = run(capsys, 'simulate', model('demo.bio'), '--duration',
                       '1', '--step', '0.1')
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == 't,A,B,C'
    assert len(lines) == 12
    assert lines[1] == '0.0,4.0,0.0,2.0'


def test_simulate_start(capsys):
    code, out, _ = run(capsys, 'simulate', model('demo.bio'), '--start',
                       '5,1,3', '--duration', '0.5', '--step', '0.25')
    assert code == 0
    assert out.splitlines()[1] == '0.0,5.0,1.0,3.0'
    code, _, err = run(capsys, 'simulate', model('demo.bio'), '--start',
                       'five')
    assert code == 2
    assert '--start expects numbers' in err


def test_validate(capsys):
    code, out, _ = run(capsys, 'validate', model('demo.bio'), '--samples',
                       '20', '--seed', '1', '--duration', '5')
    assert code == 0
    assert 'violations:  0' in out


def test_gen_chain(capsys):
    code, out, _ = run(capsys, 'gen-chain', '2', '--levels', '3')
    assert code == 0
    generated = parse_bio(out)
    assert generated.variables == ('S', 'E', 'ES1', 'ES2')
    assert generated.partition.thresholds[0] == (0, 5, 10)


def test_parse_error_exit(capsys, tmp_path):
    broken = tmp_path / 'broken.bio'
    broken.write_text('VARS:A\nEQ:dB = 1\nTRES:A: 0, 1\n')
    code, _, err = run(capsys, 'abstract', str(broken))
    assert code == 2
    assert 'line 2' in err
