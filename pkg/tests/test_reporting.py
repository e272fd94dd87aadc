import io
import json
import math
import os

import numpy as np
import pytest
from rich.console import Console

from finsler import catalog, reporting
from finsler.config import from_dict
from finsler.errors import BadParameter

FLAT = {'name': 'flat', 'model': 'minkowski', 'analyses': ['classify', 'validate'], 'validate': {'samples': 20}}
LINE = {'name': 'line', 'model': 'minkowski', 'q': [0.0, 0.0, 0.0, 0.0], 'c': 1.0, 'analyses': ['geodesic'],
        'geodesic': {'y0': [1.0, 0.6, 0.0, 0.0]}}
INSIDE_HORIZON = {'name': 'inside', 'model': 'schwarzschild', 'q': [0.0, 1.5, 1.5, 0.0], 'analyses': ['geodesic']}


@pytest.fixture(scope='module')
def flat_report():
    return reporting.run(from_dict(FLAT))


def test_validate_scenario(flat_report):
    assert flat_report.ok
    assert list(flat_report.outcomes) == ['classify', 'validate']
    result = flat_report.outcomes['validate'].result
    assert all(fact['passed'] for fact in result['known_facts'])
    assert result['axioms']['passed']
    assert result['passed'] and result['failures'] == []
    assert flat_report.violations == []
    classes = [p['class'] for p in flat_report.outcomes['classify'].result['reference_points']]
    assert 'timelike' in classes


def test_json_is_byte_stable(flat_report):
    again = reporting.run(from_dict(FLAT))
    assert reporting.to_json(flat_report) == reporting.to_json(again)
    payload = json.loads(reporting.to_json(flat_report))
    assert payload['scenario']['name'] == 'flat'
    assert 'wall_time' not in reporting.to_json(flat_report)


def test_jsonable():
    out = reporting.jsonable({'a': np.array([1.0, math.inf]), 'b': np.int64(3), 'c': np.bool_(True), 1: (None, 'x')})
    assert out == {'a': [1.0, None], 'b': 3, 'c': True, '1': [None, 'x']}
    assert isinstance(out['c'], bool)


def test_csv_bundle_without_data_is_header_only(tmp_path, flat_report):
    written = reporting.emit(flat_report, 'csv', tmp_path)
    assert sorted(os.path.basename(p) for p in written) == sorted(reporting.CSV_FILES)
    assert (tmp_path / 'geodesic.csv').read_text().splitlines() == ['s,x0,x1,x2,x3,v0,v1,v2,v3,L']
    assert (tmp_path / 'conjugate_points.csv').read_text().splitlines() == ['s,mult']
    assert (tmp_path / 'tau_sweep.csv').read_text().splitlines() == ['eps,tau']


def test_geodesic_analysis(tmp_path):
    report = reporting.run(from_dict(LINE))
    assert report.ok
    result = report.outcomes['geodesic'].result
    assert result['L0'] == pytest.approx(-0.64)
    assert result['classes'] == ['timelike']
    assert result['constant_speed']
    np.testing.assert_allclose(result['end'], [1.0, 0.6, 0.0, 0.0], atol=1e-12)
    reporting.emit(report, 'csv', tmp_path)
    lines = (tmp_path / 'geodesic.csv').read_text().splitlines()
    assert len(lines) > 2
    assert float(lines[-1].split(',')[-1]) == pytest.approx(-0.64)


def test_failed_analysis_is_recorded():
    report = reporting.run(from_dict(INSIDE_HORIZON))
    assert not report.ok
    assert report.failed == ['geodesic']
    outcome = report.as_dict()['analyses']['geodesic']
    assert outcome['status'] == 'failed'
    assert outcome['error']['type'] == 'SingularPoint'
    assert 'result' not in outcome
    # failed outcomes still produce a valid report
    json.loads(reporting.to_json(report))


def test_emit_json(tmp_path, flat_report):
    target = tmp_path / 'nested' / 'flat.json'
    assert reporting.emit(flat_report, 'json', target) == [str(target)]
    assert target.read_text() == reporting.to_json(flat_report)
    assert reporting.emit(flat_report, 'json', tmp_path) == [os.path.join(str(tmp_path), 'report.json')]


def test_emit_rejects_unknown_format(tmp_path, flat_report):
    with pytest.raises(BadParameter):
        reporting.emit(flat_report, 'yaml', tmp_path)


def test_emit_outputs_under_directory(tmp_path, flat_report):
    written = reporting.emit_outputs(flat_report, str(tmp_path))
    assert os.path.join(str(tmp_path), 'flat', 'report.json') in written
    assert (tmp_path / 'flat' / 'tau_sweep.csv').exists()


def test_emit_outputs_next_to_source(tmp_path):
    source = tmp_path / 'flat.json'
    config = from_dict(dict(FLAT, outputs={'json': 'out/flat.report.json', 'csv_dir': 'out/csv'}), source=str(source))
    reporting.emit_outputs(reporting.run(config))
    assert (tmp_path / 'out' / 'flat.report.json').exists()
    assert (tmp_path / 'out' / 'csv' / 'geodesic.csv').exists()


def test_run_batch_keeps_order(tmp_path):
    configs = [from_dict(LINE), from_dict(INSIDE_HORIZON)]
    reports = reporting.run_batch(configs, out=str(tmp_path))
    assert [r.config.name for r in reports] == ['line', 'inside']
    assert reports[0].ok and not reports[1].ok
    assert (tmp_path / 'line' / 'report.json').exists()
    assert (tmp_path / 'inside' / 'report.json').exists()


def test_summary_and_metrics(flat_report):
    failed = reporting.run(from_dict(INSIDE_HORIZON))
    table = reporting.summarize([flat_report, failed], console=Console(file=io.StringIO()))
    assert table.row_count == 3
    assert reporting.metrics(flat_report)['failed'] == 0
    flat = reporting.metrics(failed)
    assert flat['failed'] == 1
    assert flat['geodesic/ok'] == 0


@pytest.mark.slow
def test_fermat_scenario(tmp_path):
    config = from_dict({
        'name': 'flat-fermat',
        'model': 'minkowski',
        'q': [0.0, 0.0, 0.0, 0.0],
        'observer': {'kind': 'static', 'point': [1.0, 0.0, 0.0]},
        'c': 1.0,
        'analyses': ['fermat', 'jacobi', 'index'],
        'fermat': {'generators': 2, 'modes': 1, 'sweep': [-0.02, 0.02, 5]},
        'index': {'fields': 2},
    })
    report = reporting.run(config)
    assert report.ok, report.failed
    result = report.outcomes['fermat'].result
    assert result['tau'] == pytest.approx(math.sqrt(2.0), abs=1e-10)
    assert result['character'] == 'local_min'
    assert report.outcomes['jacobi'].result['conjugate_points'] == []
    assert report.outcomes['index'].result['morse_index'] == 0
    reporting.emit(report, 'csv', tmp_path)
    sweep = np.loadtxt(tmp_path / 'tau_sweep.csv', delimiter=',', skiprows=1)
    assert sweep.shape == (5, 2)
    assert np.argmin(sweep[:, 1]) == 2
    metrics = reporting.metrics(report)
    assert metrics['fermat/tau'] == pytest.approx(math.sqrt(2.0), abs=1e-10)


def _failing_signature(entry, tol=None):
    return [catalog.FactResult('signature', (1, 3), (2, 2), False)]


def test_failing_checks_keep_measurements(monkeypatch):
    monkeypatch.setattr(catalog, 'verify_known_facts', _failing_signature)
    report = reporting.run(from_dict(FLAT))
    outcome = report.outcomes['validate']
    assert outcome.ok
    assert outcome.result['axioms']['max_violation'] >= 0.0
    assert outcome.result['reversibility']['reversible']
    assert outcome.result['known_facts'] == [{'kind': 'signature', 'measured': [2, 2], 'passed': False}]
    assert outcome.result['passed'] is False
    assert outcome.result['failures'] == ['signature']
    assert report.violations == ['validate']
    assert reporting.metrics(report)['violations'] == 1
