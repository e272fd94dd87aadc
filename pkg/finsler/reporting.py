# The MIT License (MIT)
# Copyright © 2024 finsler-fermat contributors

# Permission is hereby granted, free of charge, to any person obtaining a copy of this software and associated
# documentation files (the “Software”), to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense, and/or sell copies of the Software,
# and to permit persons to whom the Software is furnished to do so, subject to the following conditions:

# The above copyright notice and this permission notice shall be included in all copies or substantial portions of
# the Software.

# THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO
# THE WARRANTIES OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL
# THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION
# OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER
# DEALINGS IN THE SOFTWARE.

# Scenario execution and report emission.
#
# `run` executes the requested analyses of one scenario in dependency order and
# records each outcome; a failing analysis is logged and recorded while the
# remaining ones still run. `emit` writes the byte-stable JSON report and the
# CSV bundle used for plotting.

import collections
import concurrent.futures
import dataclasses
import json
import math
import os
import threading
import time
import traceback
import typing

import bittensor as bt
import jsonschema
import numpy as np
from rich.console import Console
from rich.table import Table

import finsler
from finsler import catalog, config as scenario, fermat, jacobi
from finsler.causal import classify, classify_curve, validate_observer
from finsler.connection import riemann_along_geodesic
from finsler.errors import BadParameter, FinslerError, IoError
from finsler.geodesic import GeodesicIVP, GeodesicPath, integrate
from finsler.vertical import PointedVector, check_axioms, check_reversibility

FORMATS = ('json', 'csv')
CSV_FILES = ('geodesic.csv', 'jacobi_determinant.csv', 'conjugate_points.csv', 'tau_sweep.csv')

# one lock per output path so concurrent scenarios never interleave writes
_path_locks: typing.Dict[str, threading.Lock] = collections.defaultdict(threading.Lock)
_path_locks_guard = threading.Lock()


def _lock_for(path: str) -> threading.Lock:
    with _path_locks_guard:
        return _path_locks[os.path.abspath(path)]


def jsonable(value):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if value is None or isinstance(value, str):
        return value
    return str(value)


@dataclasses.dataclass
class AnalysisOutcome:
    status: str
    result: typing.Any = None
    error: typing.Optional[typing.Dict[str, str]] = None
    trace: str = ''

    @property
    def ok(self) -> bool:
        return self.status == 'ok'

    def as_dict(self) -> dict:
        out = {'status': self.status}
        if self.ok:
            out['result'] = self.result
        else:
            out['error'] = self.error
        return out


@dataclasses.dataclass
class RunReport:
    """
    Outcome of one scenario. `artifacts` keeps the in-memory objects the CSV
    bundle is written from; `wall_time` is shown in summaries and kept out of
    the JSON report.
    """
    config: scenario.ScenarioConfig
    outcomes: typing.Dict[str, AnalysisOutcome] = dataclasses.field(default_factory=dict)
    artifacts: typing.Dict[str, typing.Any] = dataclasses.field(default_factory=dict)
    version: str = finsler.__version__
    wall_time: float = 0.0

    @property
    def failed(self) -> typing.List[str]:
        return [name for name, outcome in self.outcomes.items() if not outcome.ok]

    @property
    def violations(self) -> typing.List[str]:
        """Analyses that ran but measured a failing check."""
        return [name for name, outcome in self.outcomes.items()
                if outcome.ok and isinstance(outcome.result, dict) and outcome.result.get('passed') is False]

    @property
    def ok(self) -> bool:
        return not self.failed

    def as_dict(self) -> dict:
        return jsonable({
            'version': self.version,
            'scenario': self.config.as_dict(),
            'analyses': {name: outcome.as_dict() for name, outcome in self.outcomes.items()},
        })


# === Analyses ===
def _admissible(config: scenario.ScenarioConfig, state: dict) -> fermat.AdmissibleCurve:
    if 'admissible' not in state:
        state['admissible'] = fermat.shoot(config.build_model(), config.q, config.observer, config.c, config.orientation(),
                                           config.initial_guess, config.tolerances)
    return state['admissible']


def _frame(config: scenario.ScenarioConfig, state: dict):
    if 'frame' not in state:
        admissible = _admissible(config, state)
        state['frame'] = riemann_along_geodesic(config.build_model(), admissible.curve, tol=config.tolerances)
    return state['frame']


def _classify(config: scenario.ScenarioConfig, state: dict) -> dict:
    tol = config.tolerances
    entry = catalog.entry(config.model, **config.params)
    model = config.build_model()
    result = {'reference_points': [{'x': p.x, 'y': p.y, 'class': classify(entry.model, p, tol).value} for p in entry.reference_points]}
    if config.q is not None:
        T = config.orientation()
        result['time_orientation_at_q'] = classify(model, PointedVector(config.q, T(config.q)), tol).value
    if config.observer is not None:
        validate_observer(model, config.observer, config.orientation(), tol=tol)
        result['observer'] = 'timelike, future pointed'
    return result


def _geodesic(config: scenario.ScenarioConfig, state: dict) -> dict:
    tol = config.tolerances
    model = config.build_model()
    T = config.orientation()
    y0 = config.geodesic.get('y0')
    if y0 is None:
        y0 = T(config.q)
        if config.c > 0:
            y0 = fermat.energy_shell_project(model, config.q, y0, config.c, tol)
    span = tuple(float(s) for s in config.geodesic.get('span', (0.0, 1.0)))
    path = integrate(GeodesicIVP(model, config.q, y0, span), tol)
    state['geodesic'] = path
    classes = classify_curve(model, path, T, tol=tol)
    return {
        'y0': np.asarray(y0),
        'span': list(span),
        'stats': path.stats,
        'L0': float(path.energies[0]),
        'end': path.position(span[1]),
        'classes': sorted(set(c.value for c in classes.classes)),
        'constant_speed': classes.constant_speed,
    }


def _fermat(config: scenario.ScenarioConfig, state: dict) -> dict:
    options = config.fermat
    # three numbers read as (start, stop, count); any other list is the grid itself
    sweep = options.get('sweep', (-0.05, 0.05, 21))
    if len(sweep) == 3:
        grid = np.linspace(sweep[0], sweep[1], int(sweep[2]))
    else:
        grid = np.asarray(sweep, dtype=float) if len(sweep) else None
    report = fermat.analyze(config.build_model(), config.q, config.observer, config.c, T=config.orientation(),
                            initial_guess=config.initial_guess, generators=int(options.get('generators', 10)),
                            modes=int(options.get('modes', 5)), seed=config.seed, sweep=grid, tol=config.tolerances)
    state['admissible'] = report.solution
    state['frame'] = report.frame
    state['fermat'] = report
    return report.as_dict()


def _jacobi(config: scenario.ScenarioConfig, state: dict) -> dict:
    tol = config.tolerances
    frame = _frame(config, state)
    admissible = _admissible(config, state)
    T = admissible.T(admissible.q)
    field, lightlike = jacobi.jacobi_matrix(frame, T, tol)
    state['scan'] = jacobi.scan(field, lightlike)
    points = jacobi.locate_conjugate_points(field, state['scan'], tol)
    state['conjugate_points'] = points
    # one radial field with nabla Y(0) = lambda'(0) checks that g(Y, lambda') is affine in s
    s0 = frame.span[0]
    radial = jacobi.jacobi_integrate(frame, np.zeros(frame.n), frame.velocity(s0), tol)
    fit = jacobi.jacobi_pairing_fit(radial)
    return {
        'lightlike': lightlike,
        'conjugate_points': [p.as_dict() for p in points],
        'endpoint_conjugate': any(p.endpoint for p in points),
        'pairing_slope': fit.slope,
        'pairing_residual': fit.residual,
    }


def _index(config: scenario.ScenarioConfig, state: dict) -> dict:
    tol = config.tolerances
    frame = _frame(config, state)
    admissible = _admissible(config, state)
    points = state.get('conjugate_points')
    if points is None:
        points = jacobi.find_conjugate_points(frame, admissible.T(admissible.q), tol)
    count = int(config.index.get('fields', 3))
    basis = fermat.fourier_basis(admissible.curve, count)
    forms = [fermat.index_form(frame, A, A) for A in basis]
    negative, eigenvalues = fermat.hessian_negative_count(admissible, basis, tol=tol)
    try:
        index = fermat.morse_index(points)
    except FinslerError:
        index = None
    return {
        'index_form': forms,
        'hessian_eigenvalues': eigenvalues,
        'negative_count': negative,
        'morse_index': index,
        'character': fermat.classify_critical_point(points),
    }


def _validate(config: scenario.ScenarioConfig, state: dict) -> dict:
    tol = config.tolerances
    entry = catalog.entry(config.model, **config.params)
    samples = int(config.validate.get('samples', 200))
    points = catalog.sample_points(entry, samples, seed=config.seed, tol=tol)
    axioms = check_axioms(entry.model, points, tol)
    reversibility = check_reversibility(entry.model, points, tol)
    facts = catalog.verify_known_facts(entry, tol)
    result = {
        'axioms': axioms.as_dict(),
        'reversibility': dataclasses.asdict(reversibility),
        'known_facts': [{'kind': f.kind, 'measured': f.measured, 'passed': f.passed} for f in facts],
    }
    failures = (['axioms'] if not axioms.passed else []) + [f.kind for f in facts if not f.passed]
    if failures:
        bt.logging.warning(f'{config.model} fails {failures}')
    result['passed'] = not failures
    result['failures'] = failures
    return result


ANALYSES: typing.Dict[str, typing.Callable[[scenario.ScenarioConfig, dict], dict]] = {
    'classify': _classify,
    'geodesic': _geodesic,
    'fermat': _fermat,
    'jacobi': _jacobi,
    'index': _index,
    'validate': _validate,
}


def run(config: scenario.ScenarioConfig) -> RunReport:
    """
    Executes the requested analyses in dependency order
    (classify, geodesic, fermat, jacobi, index, validate). Every requested
    analysis appears once in the report, as ok or failed.
    """
    report = RunReport(config=config)
    state: typing.Dict[str, typing.Any] = {}
    start = time.perf_counter()
    for name in scenario.ANALYSES:
        if name not in config.analyses:
            continue
        bt.logging.info( f'{config.name}: running {name}' )
        try:
            result = ANALYSES[name](config, state)
            report.outcomes[name] = AnalysisOutcome(status='ok', result=jsonable(result))
            bt.logging.success( f'{config.name}: {name} done' )
        except Exception as e:
            trace = traceback.format_exc()
            bt.logging.error(f'{config.name}: {name} failed: {e}\n{trace}')
            report.outcomes[name] = AnalysisOutcome(status='failed', error={'type': type(e).__name__, 'message': str(e)}, trace=trace)
    report.artifacts = state
    report.wall_time = time.perf_counter() - start
    return report


# === Emission ===
def to_json(report: RunReport) -> str:
    """Sorted keys, shortest round-trip floats, no wall-time: identical bytes for identical runs."""
    payload = report.as_dict()
    jsonschema.validate(payload, scenario.load_schema('report'))
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + '\n'


def _write_csv(path: str, header: typing.Sequence[str], rows) -> str:
    rows = np.asarray(rows, dtype=float).reshape(-1, len(header))
    with _lock_for(path):
        try:
            np.savetxt(path, rows, delimiter=',', header=','.join(header), comments='', fmt='%.17g')
        except OSError as e:
            raise IoError(f"cannot write {path}: {e}", path=path)
    return path


def csv_tables(report: RunReport) -> typing.Dict[str, typing.Tuple[typing.List[str], np.ndarray]]:
    """The four plotting tables; missing data gives an empty table with its header."""
    state = report.artifacts
    n = report.config.n
    path = state.get('geodesic')
    if path is None and 'admissible' in state and isinstance(state['admissible'].curve, GeodesicPath):
        path = state['admissible'].curve
    if path is not None:
        geodesic = path.as_columns()
    else:
        geodesic = (['s'] + [f'x{i}' for i in range(n)] + [f'v{i}' for i in range(n)] + ['L'], np.empty((0, 2 * n + 2)))
    scan_table = state.get('scan') or (state['fermat'].scan if 'fermat' in state else None)
    if scan_table is not None:
        determinant = np.column_stack([scan_table.s, scan_table.sigma_min, scan_table.determinant])
    else:
        determinant = np.empty((0, 3))
    points = state.get('conjugate_points')
    if points is None and 'fermat' in state:
        points = state['fermat'].conjugate_points
    markers = np.asarray([[p.s, p.multiplicity] for p in points or []], dtype=float).reshape(-1, 2)
    sweep = state['fermat'].sweep if 'fermat' in state and state['fermat'].sweep is not None else np.empty((0, 2))
    return {
        'geodesic.csv': geodesic,
        'jacobi_determinant.csv': (['s', 'sigma_min', 'det'], determinant),
        'conjugate_points.csv': (['s', 'mult'], markers),
        'tau_sweep.csv': (['eps', 'tau'], sweep),
    }


def emit(report: RunReport, format: str, out: typing.Union[str, os.PathLike]) -> typing.List[str]:
    """
    Writes the report. 'json' writes `out` (a file path, or report.json inside
    a directory); 'csv' writes the bundle into the directory `out`.

    Raises:
        IoError: a file cannot be written.
    """
    out = os.fspath(out)
    if format not in FORMATS:
        raise BadParameter(f"unknown report format '{format}'", field='format', value=format)
    if format == 'json':
        path = os.path.join(out, 'report.json') if os.path.isdir(out) or out.endswith(os.sep) else out
        text = to_json(report)
        with _lock_for(path):
            try:
                os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
                with open(path, 'w', encoding='utf-8') as f:
                    f.write(text)
            except OSError as e:
                raise IoError(f"cannot write {path}: {e}", path=path)
        bt.logging.debug(f'wrote {path}')
        return [path]
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {out}: {e}", path=out)
    written = [_write_csv(os.path.join(out, name), header, rows) for name, (header, rows) in csv_tables(report).items()]
    bt.logging.debug(f'wrote csv bundle to {out}')
    return written


def emit_outputs(report: RunReport, out: typing.Optional[str] = None) -> typing.List[str]:
    """Writes the JSON report and CSV bundle to the scenario's outputs, or under `out`."""
    outputs = report.config.outputs
    if out is not None:
        base = os.path.join(out, report.config.name or report.config.model)
        json_path, csv_dir = os.path.join(base, 'report.json'), base
    else:
        base = os.path.dirname(report.config.source or '.')
        json_path = os.path.join(base, outputs.get('json', f'{report.config.name or report.config.model}.report.json'))
        csv_dir = os.path.join(base, outputs['csv_dir']) if 'csv_dir' in outputs else None
    written = emit(report, 'json', json_path)
    if csv_dir is not None:
        written += emit(report, 'csv', csv_dir)
    return written


# === Batch, summary and tracking ===
def run_batch(configs: typing.Sequence[scenario.ScenarioConfig], out: typing.Optional[str] = None, workers: typing.Optional[int] = None) -> typing.List[RunReport]:
    """Runs scenarios concurrently; each worker emits its own outputs. Reports keep the input order."""

    def one(config):
        report = run(config)
        try:
            emit_outputs(report, out)
        except FinslerError as e:
            bt.logging.error(f'{config.name}: emission failed: {e}')
            report.outcomes['emit'] = AnalysisOutcome(status='failed', error={'type': type(e).__name__, 'message': str(e)})
        return report

    if len(configs) == 1:
        return [one(configs[0])]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers or min(8, len(configs))) as pool:
        return list(pool.map(one, configs))


def _headline(name: str, outcome: AnalysisOutcome) -> str:
    if not outcome.ok:
        return f"{outcome.error['type']}: {outcome.error['message']}"
    result = outcome.result
    if name == 'fermat':
        return f"tau={result['tau']:.12g} residual={result['first_variation_residual']:.2e} index={result['morse_index']} {result['character']}"
    if name == 'geodesic':
        return f"drift={result['stats']['energy_drift']:.2e} steps={result['stats']['steps']}"
    if name == 'jacobi':
        return f"conjugate={[(round(p['s'], 9), p['mult']) for p in result['conjugate_points']]}"
    if name == 'index':
        return f"negative={result['negative_count']} morse={result['morse_index']}"
    if name == 'validate':
        return f"passed={result['passed']} max_violation={result['axioms']['max_violation']:.2e}"
    if name == 'classify':
        return f"{len(result['reference_points'])} reference points"
    return ''


def summarize(reports: typing.Sequence[RunReport], console: typing.Optional[Console] = None) -> Table:
    table = Table(title="Scenarios")
    table.add_column("scenario", justify="right", style="cyan", no_wrap=True)
    table.add_column("analysis", style="magenta")
    table.add_column("status", style="magenta")
    table.add_column("summary", style="magenta")
    table.add_column("wall_time", style="magenta")
    for report in reports:
        for name, outcome in report.outcomes.items():
            table.add_row(report.config.name, name, outcome.status, _headline(name, outcome), f'{report.wall_time:.2f}s')
    (console or Console()).print(table)
    return table


def metrics(report: RunReport) -> dict:
    """Flat scalars for experiment tracking."""
    out = {'failed': len(report.failed), 'violations': len(report.violations), 'wall_time': report.wall_time}
    for name, outcome in report.outcomes.items():
        out[f'{name}/ok'] = int(outcome.ok)
    fermat_outcome = report.outcomes.get('fermat')
    if fermat_outcome is not None and fermat_outcome.ok:
        result = fermat_outcome.result
        out['fermat/tau'] = result['tau']
        out['fermat/first_variation_residual'] = result['first_variation_residual']
        if result['second_variation']:
            out['fermat/max_second_variation_gap'] = max(s['gap'] for s in result['second_variation'])
    geodesic_outcome = report.outcomes.get('geodesic')
    if geodesic_outcome is not None and geodesic_outcome.ok:
        out['geodesic/energy_drift'] = geodesic_outcome.result['stats']['energy_drift']
    return out


def init_wandb(config=None):
    import wandb
    return wandb.init(project=finsler.WANDB_PROJECT, anonymous="allow", config={'version': finsler.__version__, **(config or {})},
                      allow_val_change=True)


def log_to_wandb(run, reports: typing.Sequence[RunReport]) -> None:
    for step, report in enumerate(reports):
        bt.logging.trace('Logging to Wandb')
        run.log({'scenario': report.config.name, **metrics(report), 'report_json': json.dumps(report.as_dict(), sort_keys=True)}, step=step)
