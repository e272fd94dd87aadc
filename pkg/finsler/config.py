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

# Scenario configuration: JSON scenario files validated against the shipped
# schema, plus `KEY=VAL` tolerance overrides from the command line.

import dataclasses
import importlib.resources
import json
import os
import typing

import bittensor as bt
import jsonschema
import numpy as np

import finsler
from finsler import catalog
from finsler.causal import Observer, TimeOrientation
from finsler.errors import BadParameter, IoError, ParseError, UnknownModel
from finsler.models import LagrangianModel
from finsler.tolerances import DEFAULT, Tolerances

ANALYSES = ('classify', 'geodesic', 'fermat', 'jacobi', 'index', 'validate')
# analyses that need a source event and an observer
NEEDS_TARGET = ('fermat', 'jacobi', 'index')


def load_schema(name: str = 'scenario') -> dict:
    text = importlib.resources.files('finsler').joinpath('schema', f'{name}.schema.json').read_text(encoding='utf-8')
    return json.loads(text)


@dataclasses.dataclass
class ScenarioConfig:
    model: str
    params: typing.Dict[str, typing.Any] = dataclasses.field(default_factory=dict)
    q: typing.Optional[np.ndarray] = None
    observer: typing.Optional[Observer] = None
    c: float = 0.0
    time_orientation: typing.Optional[np.ndarray] = None
    initial_guess: typing.Optional[np.ndarray] = None
    tolerances: Tolerances = DEFAULT
    analyses: typing.Tuple[str, ...] = ('classify', 'validate')
    geodesic: typing.Dict[str, typing.Any] = dataclasses.field(default_factory=dict)
    fermat: typing.Dict[str, typing.Any] = dataclasses.field(default_factory=dict)
    validate: typing.Dict[str, typing.Any] = dataclasses.field(default_factory=dict)
    index: typing.Dict[str, typing.Any] = dataclasses.field(default_factory=dict)
    outputs: typing.Dict[str, str] = dataclasses.field(default_factory=dict)
    seed: int = finsler.default_seed
    name: str = ''
    source: typing.Optional[str] = None
    _model: typing.Optional[LagrangianModel] = dataclasses.field(default=None, repr=False, compare=False)

    def build_model(self) -> LagrangianModel:
        if self._model is None:
            self._model = catalog.build(self.model, **self.params)
        return self._model

    @property
    def n(self) -> int:
        return self.build_model().n

    def orientation(self) -> TimeOrientation:
        if self.time_orientation is None:
            return TimeOrientation.of(self.build_model())
        T = np.array(self.time_orientation, dtype=float)
        return TimeOrientation.of(self.build_model(), lambda x: T)

    def with_overrides(self, seed: typing.Optional[int] = None, tolerances: typing.Optional[typing.Dict[str, typing.Any]] = None) -> "ScenarioConfig":
        config = dataclasses.replace(self)
        if seed is not None:
            config.seed = int(seed)
        if tolerances:
            config.tolerances = config.tolerances.replace(**tolerances)
        return config

    def as_dict(self) -> dict:
        """Echo of the scenario as it was resolved, for the report."""
        out = {
            'name': self.name,
            'model': self.model,
            'params': _plain(self.params),
            'c': self.c,
            'analyses': list(self.analyses),
            'seed': self.seed,
            'tolerances': self.tolerances.as_dict(),
        }
        if self.q is not None:
            out['q'] = self.q.tolist()
        if self.observer is not None:
            out['observer'] = self.observer.as_dict()
        if self.time_orientation is not None:
            out['time_orientation'] = self.time_orientation.tolist()
        if self.initial_guess is not None:
            out['initial_guess'] = self.initial_guess.tolist()
        for key in ('geodesic', 'fermat', 'validate', 'index'):
            if getattr(self, key):
                out[key] = _plain(getattr(self, key))
        return out


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def _vector(raw, n: int, field: str) -> np.ndarray:
    v = np.asarray(raw, dtype=float)
    if v.shape != (n,):
        raise BadParameter(f"'{field}' must have {n} components", field=field, value=list(raw))
    return v


def _observer(raw: dict, n: int) -> Observer:
    interval = tuple(raw.get('interval', (-1e3, 1e3)))
    if raw['kind'] == 'static':
        if 'point' not in raw:
            raise BadParameter("static observer needs 'point'", field='observer.point')
        return Observer.static(_vector(raw['point'], n - 1, 'observer.point'), interval)
    if 'coefficients' not in raw:
        raise BadParameter("polynomial observer needs 'coefficients'", field='observer.coefficients')
    coefficients = np.asarray(raw['coefficients'], dtype=float)
    if coefficients.ndim != 2 or coefficients.shape[1] != n:
        raise BadParameter(f"observer coefficients must be rows of {n} numbers", field='observer.coefficients', value=coefficients.shape)
    return Observer.polynomial(coefficients, interval)


def from_dict(raw: dict, source: typing.Optional[str] = None) -> ScenarioConfig:
    """Validates a decoded scenario and fills in defaults."""
    try:
        jsonschema.validate(raw, load_schema('scenario'))
    except jsonschema.ValidationError as e:
        field = '.'.join(str(p) for p in e.absolute_path) or '<root>'
        raise BadParameter(f"invalid scenario: {e.message}", field=field, source=source)
    if raw['model'] not in catalog.REGISTRY:
        raise UnknownModel(f"unknown model '{raw['model']}'", name=raw['model'], known=catalog.names())
    config = ScenarioConfig(model=raw['model'], params=dict(raw.get('params', {})), source=source, name=raw.get('name', raw['model']))
    n = config.n
    if 'q' in raw:
        config.q = _vector(raw['q'], n, 'q')
    if 'observer' in raw:
        config.observer = _observer(raw['observer'], n)
    if 'time_orientation' in raw:
        config.time_orientation = _vector(raw['time_orientation'], n, 'time_orientation')
    if 'initial_guess' in raw:
        config.initial_guess = _vector(raw['initial_guess'], n, 'initial_guess')
    config.c = float(raw.get('c', 0.0))
    config.tolerances = DEFAULT.replace(**raw.get('tolerances', {}))
    config.analyses = tuple(a for a in ANALYSES if a in raw.get('analyses', config.analyses))
    config.geodesic = dict(raw.get('geodesic', {}))
    config.fermat = dict(raw.get('fermat', {}))
    config.validate = dict(raw.get('validate', {}))
    config.index = dict(raw.get('index', {}))
    config.outputs = dict(raw.get('outputs', {}))
    config.seed = int(raw.get('seed', finsler.default_seed))
    if any(a in config.analyses for a in NEEDS_TARGET) and (config.q is None or config.observer is None):
        raise BadParameter("fermat, jacobi and index analyses need 'q' and 'observer'", field='analyses')
    if 'geodesic' in config.analyses and config.q is None:
        raise BadParameter("geodesic analysis needs 'q'", field='q')
    if 'y0' in config.geodesic:
        config.geodesic['y0'] = _vector(config.geodesic['y0'], n, 'geodesic.y0')
    return config


def load_config(path: typing.Union[str, os.PathLike]) -> ScenarioConfig:
    """
    Reads and validates a scenario file.

    Raises:
        IoError: the file cannot be read.
        ParseError: the file is not JSON; carries line and column.
        UnknownModel: the model is not in the catalog.
        BadParameter: schema violation or inconsistent values; carries the field path.
    """
    try:
        with open(path, encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise IoError(f"cannot read scenario: {e}", path=str(path))
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"scenario is not valid JSON: {e.msg}", path=str(path), line=e.lineno, column=e.colno)
    if not isinstance(raw, dict):
        raise ParseError("scenario must be a JSON object", path=str(path), line=1, column=1)
    config = from_dict(raw, source=str(path))
    bt.logging.debug(f'loaded scenario {config.name} from {path}: analyses {list(config.analyses)}')
    return config


def parse_tol_overrides(items: typing.Optional[typing.Sequence[str]]) -> typing.Dict[str, str]:
    """['rtol=1e-9', 'capture_radius=1e-8'] -> dict; values are checked by Tolerances.replace."""
    overrides = {}
    for item in items or ():
        key, sep, value = item.partition('=')
        if not sep or not key.strip():
            raise BadParameter(f"tolerance override must be KEY=VAL, got '{item}'", field='tol')
        overrides[key.strip()] = value.strip()
    DEFAULT.replace(**overrides)
    return overrides
