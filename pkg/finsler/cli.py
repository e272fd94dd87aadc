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

# Command line entry point:
#   finsler-fermat run <config.json> [more.json ...] [--out DIR] [--seed N] [--tol KEY=VAL]
#   finsler-fermat validate <model> [--samples N] [--param KEY=VAL]
#   finsler-fermat models

import argparse
import json
import sys
import typing

import bittensor as bt
from rich.console import Console
from rich.table import Table

import finsler
from finsler import catalog, reporting
from finsler.config import load_config, parse_tol_overrides
from finsler.errors import BadParameter, FinslerError
from finsler.tolerances import DEFAULT
from finsler.vertical import check_axioms, check_reversibility


def get_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='finsler-fermat', description='Fermat principle checks on time-oriented Finsler spacetimes.')
    parser.add_argument('--wandb.on', dest='wandb.on', action='store_true', help='Log run metrics to wandb.')
    commands = parser.add_subparsers(dest='command')
    # positionals stay optional: bt.config reparses the bare command for its defaults

    run = commands.add_parser('run', help='Run scenario files.')
    run.add_argument('configs', nargs='*', help='Scenario JSON files.')
    run.add_argument('--out', type=str, default=None, help='Output directory; defaults to the outputs named in each scenario.')
    run.add_argument('--seed', type=int, default=None, help='Overrides the scenario seed.')
    run.add_argument('--tol', action='append', default=[], metavar='KEY=VAL', help='Tolerance override, repeatable.')
    run.add_argument('--workers', type=int, default=None, help='Scenarios run concurrently.')

    validate = commands.add_parser('validate', help='Check the axioms and known facts of a catalog model.')
    validate.add_argument('model', type=str, nargs='?', default=None, help='Catalog model name.')
    validate.add_argument('--samples', type=int, default=200, help='Number of sampled points.')
    validate.add_argument('--seed', type=int, default=finsler.default_seed, help='Sampling seed.')
    validate.add_argument('--param', action='append', default=[], metavar='KEY=VAL', help='Model parameter, repeatable; values are JSON.')
    validate.add_argument('--tol', action='append', default=[], metavar='KEY=VAL', help='Tolerance override, repeatable.')

    commands.add_parser('models', help='List the model catalog.')
    bt.logging.add_args(parser)
    return parser


def config(argv: typing.Optional[typing.Sequence[str]] = None):
    return bt.config(get_parser(), args=list(sys.argv[1:] if argv is None else argv))


def _params(items: typing.Sequence[str]) -> dict:
    params = {}
    for item in items:
        key, sep, value = item.partition('=')
        if not sep:
            raise BadParameter(f"parameter must be KEY=VAL, got '{item}'", field='param')
        try:
            params[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            params[key.strip()] = value
    return params


def cmd_models(console: Console) -> int:
    table = Table(title="Models")
    table.add_column("name", justify="right", style="cyan", no_wrap=True)
    table.add_column("description", style="magenta")
    for name in catalog.names():
        table.add_row(name, catalog.DESCRIPTIONS.get(name, ''))
    console.print(table)
    return 0


def cmd_validate(cfg, console: Console) -> int:
    if not cfg.model:
        raise BadParameter('validate needs a model name', field='model')
    tol = DEFAULT.replace(**parse_tol_overrides(cfg.tol))
    entry = catalog.entry(cfg.model, **_params(cfg.param))
    points = catalog.sample_points(entry, cfg.samples, seed=cfg.seed, tol=tol)
    axioms = check_axioms(entry.model, points, tol)
    reversibility = check_reversibility(entry.model, points, tol)
    facts = catalog.verify_known_facts(entry, tol)

    table = Table(title=f"Axioms: {entry.model!r}")
    table.add_column("check", justify="right", style="cyan", no_wrap=True)
    table.add_column("value", style="magenta")
    for key, value in axioms.as_dict().items():
        table.add_row(key, str(value))
    table.add_row('reversible', str(reversibility.reversible))
    table.add_row('reversal_deviation', f'{reversibility.max_deviation:.3e}')
    console.print(table)

    table = Table(title="Known facts")
    table.add_column("fact", justify="right", style="cyan", no_wrap=True)
    table.add_column("measured", style="magenta")
    table.add_column("passed", style="magenta")
    for fact in facts:
        table.add_row(fact.kind, str(fact.measured), str(fact.passed))
    console.print(table)
    return 0 if axioms.passed and all(f.passed for f in facts) else 1


def cmd_run(cfg, console: Console) -> int:
    if not cfg.configs:
        raise BadParameter('run needs at least one scenario file', field='configs')
    overrides = parse_tol_overrides(cfg.tol)
    scenarios = [load_config(path).with_overrides(seed=cfg.seed, tolerances=overrides) for path in cfg.configs]
    reports = reporting.run_batch(scenarios, out=cfg.out, workers=cfg.workers)
    reporting.summarize(reports, console)
    if cfg.wandb.on:
        run = reporting.init_wandb({'scenarios': [s.name for s in scenarios]})
        reporting.log_to_wandb(run, reports)
        run.finish()
    failed = sum(len(r.failed) for r in reports)
    violations = sum(len(r.violations) for r in reports)
    if failed:
        bt.logging.warning(f'{failed} analyses failed')
    if violations:
        bt.logging.warning(f'{violations} analyses measured failing checks')
    return 0 if failed == 0 and violations == 0 else 1


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    cfg = config(argv)
    bt.logging( config = cfg )
    console = Console()
    try:
        if cfg.command == 'models':
            return cmd_models(console)
        if cfg.command == 'validate':
            return cmd_validate(cfg, console)
        if cfg.command == 'run':
            return cmd_run(cfg, console)
    except FinslerError as e:
        bt.logging.error(f'{type(e).__name__}: {e}')
        return 2
    get_parser().print_help()
    return 2


if __name__ == '__main__':
    sys.exit(main())
