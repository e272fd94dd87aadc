import json

import pytest

from finsler import catalog, cli

FLAT = {'name': 'flat', 'model': 'minkowski', 'analyses': ['classify', 'validate'], 'validate': {'samples': 20}}
INSIDE_HORIZON = {'name': 'inside', 'model': 'schwarzschild', 'q': [0.0, 1.5, 1.5, 0.0], 'analyses': ['geodesic']}


@pytest.fixture
def scenario(tmp_path):
    def write(raw):
        path = tmp_path / f"{raw['name']}.json"
        path.write_text(json.dumps(raw))
        return str(path)
    return write


def test_models():
    assert cli.main(['models']) == 0


def test_no_command_prints_help():
    assert cli.main([]) == 2


def test_validate():
    assert cli.main(['validate', 'minkowski', '--samples', '20']) == 0
    assert cli.main(['validate', 'bogoslovsky', '--samples', '20', '--param', 'b=0.2']) == 0


@pytest.mark.parametrize('argv', [
    ['validate'],
    ['validate', 'kerr'],
    ['validate', 'minkowski', '--param', 'mass'],
    ['validate', 'minkowski', '--tol', 'rtol=-1'],
])
def test_validate_errors(argv):
    assert cli.main(argv) == 2


def test_run(tmp_path, scenario):
    out = tmp_path / 'out'
    assert cli.main(['run', scenario(FLAT), '--out', str(out), '--seed', '3']) == 0
    report = json.loads((out / 'flat' / 'report.json').read_text())
    assert report['scenario']['seed'] == 3
    assert report['analyses']['validate']['status'] == 'ok'


def test_run_with_failed_analysis(tmp_path, scenario):
    assert cli.main(['run', scenario(FLAT), scenario(INSIDE_HORIZON), '--out', str(tmp_path / 'out')]) == 1
    report = json.loads((tmp_path / 'out' / 'inside' / 'report.json').read_text())
    assert report['analyses']['geodesic']['error']['type'] == 'SingularPoint'


def test_run_tolerance_override(tmp_path, scenario):
    out = tmp_path / 'out'
    assert cli.main(['run', scenario(FLAT), '--out', str(out), '--tol', 'capture_radius=1e-8']) == 0
    report = json.loads((out / 'flat' / 'report.json').read_text())
    assert report['scenario']['tolerances']['capture_radius'] == 1e-8


@pytest.mark.parametrize('tail', [['--tol', 'rtol'], ['--tol', 'unknown=1']])
def test_run_bad_tolerance(scenario, tail):
    assert cli.main(['run', scenario(FLAT)] + tail) == 2


def test_run_input_errors(tmp_path):
    assert cli.main(['run']) == 2
    assert cli.main(['run', str(tmp_path / 'missing.json')]) == 2
    broken = tmp_path / 'broken.json'
    broken.write_text('{"model": ')
    assert cli.main(['run', str(broken)]) == 2


def test_run_exits_nonzero_on_failing_checks(tmp_path, scenario, monkeypatch):
    monkeypatch.setattr(catalog, 'verify_known_facts', lambda entry, tol=None: [catalog.FactResult('reversible', True, 0.5, False)])
    out = tmp_path / 'out'
    assert cli.main(['run', scenario(FLAT), '--out', str(out)]) == 1
    report = json.loads((out / 'flat' / 'report.json').read_text())
    assert report['analyses']['validate']['status'] == 'ok'
    assert report['analyses']['validate']['result']['failures'] == ['reversible']
