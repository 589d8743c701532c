"""
Command-line interface

    bpcalc eval PSI S              closed form next to the Levy quadrature
    bpcalc apply PSI MATRIX_FILE   psi(A) for a single generator read from a file
    bpcalc verify CONFIG           run a checker campaign and write the report
    bpcalc report-schema           report fields and CSV column order

Exit codes: 0 success, 1 a bound was violated, 2 malformed input or configuration,
3 a matrix that is not a bounded generator.
"""

import logging
import sys

import click
from dotenv import load_dotenv
import numpy as np

from bpcalc import create_runner
from bpcalc.bernstein import CatalogError, DomainError, evaluate_with_diagnostics, get_psi
from bpcalc.calculus import apply
from bpcalc.campaign import CHECKER_NAMES, ConfigError, load_config
from bpcalc.operators import NORM_KINDS, GeneratorError, GeneratorTuple
from bpcalc.quadrature import DEFAULT_SPEC, QuadratureError
from bpcalc.utils import (
    CSV_COLUMNS, RECORD_FIELDS, REPORT_FORMATS, format_matrix, read_matrix_file, write_matrix_file,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2
EXIT_SPECTRUM = 3


def _fail(message: str, code: int):
    click.echo(f"Error: {message}", err=True)
    sys.exit(code)


def _parse_point(text: str) -> list:
    try:
        return [float(part) for part in text.split(',')]
    except ValueError:
        _fail(f"Expected comma-separated numbers, got {text!r}", EXIT_INPUT)


def _spec(tol):
    try:
        return DEFAULT_SPEC if tol is None else DEFAULT_SPEC.with_overrides(target_tol=tol)
    except ValueError as e:
        _fail(str(e), EXIT_INPUT)


@click.group()
@click.option('-v', '--verbose', is_flag=True, help='Log progress at INFO level.')
@click.pass_context
def cli(ctx, verbose):
    """Bochner-Phillips functional calculus: evaluation, operator functions and bound checks."""
    try:
        runner = create_runner(verbose=verbose)
    except ValueError as e:
        _fail(str(e), EXIT_INPUT)
    ctx.obj = runner


@cli.command('eval')
@click.argument('psi_name')
@click.argument('point')
def eval_command(psi_name, point):
    """Evaluate PSI at POINT (comma-separated negatives, e.g. `eval sqrt -- -4`)."""
    s = _parse_point(point)
    try:
        psi = get_psi(psi_name)
        report = evaluate_with_diagnostics(psi, s)
    except (CatalogError, DomainError) as e:
        _fail(str(e), EXIT_INPUT)
    except QuadratureError as e:
        _fail(f"Quadrature failed: {str(e)}", EXIT_INPUT)
    click.echo(repr(report.closed_form))
    click.echo(f"quadrature {report.quadrature!r} gap {report.gap:.3g} "
               f"(truncation error {report.truncation_error:.3g})")


def _generator_from_matrix(matrix: np.ndarray, bound) -> GeneratorTuple:
    """Diagonal input is exact (bound 1, certified); anything else uses a grid estimate."""
    if np.count_nonzero(matrix - np.diag(np.diag(matrix))) == 0:
        tuple_ = GeneratorTuple.diagonal(np.diag(matrix), label='file')
        tuple_.validate()
        return tuple_
    return GeneratorTuple.from_matrices([matrix], bound_m=bound, label='file')


@cli.command('apply')
@click.argument('psi_name')
@click.argument('matrix_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--bound', type=float, default=None, help='Semigroup bound M (default: grid estimate).')
@click.option('--tol', type=float, default=None, help='Quadrature target tolerance.')
@click.option('--out', type=click.Path(dir_okay=False), default=None, help='Write psi(A) to this file.')
def apply_command(psi_name, matrix_file, bound, tol, out):
    """Compute psi(A) for the generator in MATRIX_FILE (first line d, then d rows of a+bi entries)."""
    spec = _spec(tol)
    try:
        psi = get_psi(psi_name)
        matrix = read_matrix_file(matrix_file)
    except (CatalogError, ValueError) as e:
        _fail(str(e), EXIT_INPUT)
    if psi.n != 1:
        _fail(f"{psi_name} takes {psi.n} variables; matrix files hold a single generator", EXIT_INPUT)
    try:
        A = _generator_from_matrix(matrix, bound)
    except GeneratorError as e:
        _fail(str(e), EXIT_SPECTRUM)
    try:
        result = apply(psi, A, spec)
    except (QuadratureError, DomainError) as e:
        _fail(str(e), EXIT_INPUT)

    if out:
        write_matrix_file(result.value, out)
        logger.info(f"Wrote psi(A) to {out}")
    click.echo(format_matrix(result.value), nl=False)
    click.echo(f"certified: {str(A.certified).lower()}", err=True)
    click.echo(f"truncation error: {result.truncation_error:.3g}", err=True)
    if result.oracle_residual is not None:
        click.echo(f"oracle residual: {result.oracle_residual:.3g}", err=True)


@cli.command('verify')
@click.argument('config_file', type=click.Path(dir_okay=False))
@click.option('--seed', type=int, default=None, help='Base seed (overrides the config).')
@click.option('--trials', type=int, default=None, help='Trials per checker (overrides the config).')
@click.option('--tol', type=float, default=None, help='Quadrature target tolerance.')
@click.option('--norm', 'norms', multiple=True,
              help=f"Ideal norm, repeatable: {', '.join(NORM_KINDS)} (schatten:<p>).")
@click.option('--out', type=click.Path(dir_okay=False), default=None, help='Report path.')
@click.option('--format', 'fmt', type=click.Choice(REPORT_FORMATS), default=None, help='Report format.')
@click.pass_obj
def verify_command(runner, config_file, seed, trials, tol, norms, out, fmt):
    """
    Run the checker campaign in CONFIG_FILE (.json, or flat key = value lines).

    \b
    CSV columns, in order:
      checker,name,parent,seed,instance,norm,lhs,rhs,margin,passed,hypotheses_met,hypotheses
    """
    try:
        config = load_config(config_file)
        overrides = {'seed': seed, 'trials': trials, 'output': out, 'format': fmt,
                     'norms': list(norms) or None}
        if tol is not None:
            overrides['quadrature'] = {**config.quadrature, 'target_tol': tol}
        config = config.with_overrides(**overrides)
    except ConfigError as e:
        _fail(str(e), EXIT_INPUT)

    result = runner.run(config)
    if config.output:
        runner.write(result, config.output, config.format)

    totals = result.totals
    click.echo(f"reports: {totals['reports']}  passed: {totals['passed']}  "
               f"failed: {totals['failed']}  gated: {totals['gated']}")
    click.echo(f"config digest: {result.digest}")
    if not result.ok:
        for checker, seed_, report in result.entries:
            for row in report.flatten():
                if row.hypotheses_met and not row.passed:
                    click.echo(f"VIOLATION {checker} seed={seed_} {row.name}: "
                               f"lhs={row.lhs:.6g} rhs={row.rhs:.6g}", err=True)
        sys.exit(EXIT_VIOLATION)


@cli.command('report-schema')
def report_schema_command():
    """Print the record fields, the CSV column order and the checker names."""
    click.echo(f"records: {','.join(RECORD_FIELDS)}")
    click.echo(f"csv: {','.join(CSV_COLUMNS)}")
    click.echo(f"formats: {','.join(REPORT_FORMATS)}")
    click.echo(f"checkers: {','.join(CHECKER_NAMES)}")


def main():
    load_dotenv()
    cli(prog_name='bpcalc')


if __name__ == '__main__':
    main()
