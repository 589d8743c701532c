"""Utility functions for bochner-calc: settings, logging, matrix files and report writers"""

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from openpyxl import Workbook
from openpyxl.styles import Font

logger = logging.getLogger(__name__)

LOGS_DIR = Path(__file__).parent.parent / 'logs'

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'

REPORT_FORMATS = ('records', 'csv', 'xlsx')

# Fixed column order of CSV and XLSX reports
CSV_COLUMNS = (
    'checker', 'name', 'parent', 'seed', 'instance', 'norm',
    'lhs', 'rhs', 'margin', 'passed', 'hypotheses_met', 'hypotheses',
)

RECORD_FIELDS = CSV_COLUMNS + ('details',)

_SPEC_VARIABLES = {
    'BPCALC_NODES_PER_PANEL': ('nodes_per_panel', int),
    'BPCALC_PANELS_PER_DECADE': ('panels_per_decade', int),
    'BPCALC_TARGET_TOL': ('target_tol', float),
}


@dataclass
class Settings:
    """Runtime settings read from the environment (and .env through python-dotenv)."""
    log_level: str = 'WARNING'
    log_dir: Optional[Path] = None
    workers: int = 1
    quadrature: dict = field(default_factory=dict)


def load_settings(environ: Optional[dict] = None) -> Settings:
    """
    Read BPCALC_* variables.

    Raises:
        ValueError: Naming the variable whose value is malformed
    """
    env = os.environ if environ is None else environ
    settings = Settings()

    level = env.get('BPCALC_LOG_LEVEL', settings.log_level).strip().upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ValueError(f"BPCALC_LOG_LEVEL: unknown level {level!r}")
    settings.log_level = level

    if env.get('BPCALC_LOG_DIR'):
        settings.log_dir = Path(env['BPCALC_LOG_DIR']).expanduser()

    if env.get('BPCALC_WORKERS'):
        try:
            settings.workers = int(env['BPCALC_WORKERS'])
        except ValueError:
            raise ValueError(f"BPCALC_WORKERS: expected an integer, got {env['BPCALC_WORKERS']!r}")
        if settings.workers < 1:
            raise ValueError(f"BPCALC_WORKERS: must be at least 1, got {settings.workers}")

    for variable, (key, kind) in _SPEC_VARIABLES.items():
        if env.get(variable):
            try:
                settings.quadrature[key] = kind(env[variable])
            except ValueError:
                raise ValueError(f"{variable}: expected {kind.__name__}, got {env[variable]!r}")

    return settings


def setup_logging(level: str = 'WARNING', log_dir: Optional[Path] = None) -> logging.Logger:
    """Configure the package logger with a console handler and a date-named file handler

    All runs of the same day append to one bpcalc_YYYYMMDD.log. Calling it again only
    updates levels, so handlers are never duplicated.
    """
    package_logger = logging.getLogger('bpcalc')
    package_logger.setLevel(level)
    package_logger.propagate = False

    if package_logger.handlers:
        for handler in package_logger.handlers:
            handler.setLevel(level)
        return package_logger

    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    package_logger.addHandler(console_handler)

    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        log_file = log_dir / f"bpcalc_{datetime.now().strftime('%Y%m%d')}.log"
        file_handler = logging.FileHandler(log_file, mode='a', encoding='utf-8')
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        package_logger.addHandler(file_handler)

    return package_logger


def reset_logging():
    """Drop the package handlers (used by tests and repeated CLI invocations)."""
    package_logger = logging.getLogger('bpcalc')
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
        handler.close()


# ---------------------------------------------------------------------------
# Matrix files
# ---------------------------------------------------------------------------

def parse_complex(token: str) -> complex:
    """Parse an "a+bi" token (also plain reals and "a+bj")."""
    text = token.strip().replace('i', 'j')
    if not text:
        raise ValueError("Empty matrix entry")
    try:
        return complex(text)
    except ValueError:
        raise ValueError(f"Malformed matrix entry {token!r}")


def format_complex(z: complex) -> str:
    z = complex(z)
    if z.imag == 0.0:
        return f'{z.real:.17g}'
    sign = '-' if z.imag < 0 else '+'
    return f'{z.real:.17g}{sign}{abs(z.imag):.17g}i'


def parse_matrix(text: str) -> np.ndarray:
    """
    Matrix file format: first line d, then d rows of d whitespace-separated entries.

    Raises:
        ValueError: On a malformed header, a wrong row count or a wrong row length
    """
    lines = [line.strip() for line in text.splitlines() if line.strip() and not line.lstrip().startswith('#')]
    if not lines:
        raise ValueError("Matrix file is empty")
    try:
        d = int(lines[0])
    except ValueError:
        raise ValueError(f"First line must be the dimension d, got {lines[0]!r}")
    if d < 1:
        raise ValueError(f"Dimension must be positive, got {d}")
    rows = lines[1:]
    if len(rows) != d:
        raise ValueError(f"Expected {d} rows, got {len(rows)}")
    matrix = np.empty((d, d), dtype=complex)
    for i, row in enumerate(rows):
        tokens = row.split()
        if len(tokens) != d:
            raise ValueError(f"Row {i + 1} has {len(tokens)} entries, expected {d}")
        matrix[i] = [parse_complex(t) for t in tokens]
    return matrix


def read_matrix_file(path) -> np.ndarray:
    with open(path, 'r') as f:
        return parse_matrix(f.read())


def format_matrix(matrix) -> str:
    matrix = np.asarray(matrix)
    lines = [str(matrix.shape[0])]
    lines.extend(' '.join(format_complex(z) for z in row) for row in matrix)
    return '\n'.join(lines) + '\n'


def write_matrix_file(matrix, path):
    with open(path, 'w') as f:
        f.write(format_matrix(matrix))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def format_number(x) -> str:
    """17 significant digits; nan and inf spelled out."""
    x = float(x)
    if math.isnan(x):
        return 'nan'
    if math.isinf(x):
        return 'inf' if x > 0 else '-inf'
    return format(x, '.17g')


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else format_number(value)
    if isinstance(value, (complex, np.complexfloating)):
        return format_complex(value)
    return str(value)


def report_rows(entries: Iterable) -> list:
    """
    Flatten (checker, seed, BoundReport) entries into report rows.

    Subchecks follow their parent with `parent` set to the parent's name.
    """
    rows = []
    for checker, seed, report in entries:
        stack = [(report, '')]
        while stack:
            current, parent = stack.pop(0)
            rows.append({
                'checker': checker,
                'name': current.name,
                'parent': parent,
                'seed': seed,
                'instance': current.instance,
                'norm': current.norm,
                'lhs': current.lhs,
                'rhs': current.rhs,
                'margin': current.margin,
                'passed': current.passed,
                'hypotheses_met': current.hypotheses_met,
                'hypotheses': ';'.join(f"{label}={'yes' if met else 'no'}" for label, met in current.hypotheses),
                'details': current.details,
            })
            stack.extend((sub, current.name) for sub in current.subchecks)
    return rows


def write_records(rows: list, header: dict, path):
    """One JSON object per line: the campaign header first, then one record per row."""
    with open(path, 'w') as f:
        f.write(json.dumps({'header': _jsonable(header)}, sort_keys=True) + '\n')
        for row in rows:
            f.write(json.dumps({k: _jsonable(row[k]) for k in RECORD_FIELDS}, sort_keys=True) + '\n')


def _csv_cell(row: dict, column: str) -> str:
    value = row[column]
    if column in ('lhs', 'rhs', 'margin'):
        return format_number(value)
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return str(value)


def write_csv(rows: list, header: dict, path):
    """CSV in CSV_COLUMNS order; the header goes into leading '#' comment lines."""
    buffer = io.StringIO()
    for key in sorted(header):
        buffer.write(f"# {key}: {_jsonable(header[key])}\n")
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_csv_cell(row, c) for c in CSV_COLUMNS])
    with open(path, 'w', newline='') as f:
        f.write(buffer.getvalue())


def write_xlsx(rows: list, header: dict, path):
    """Workbook with a 'reports' sheet in CSV_COLUMNS order and a 'campaign' sheet for the header."""
    wb = Workbook()
    ws = wb.active
    ws.title = 'reports'
    ws.append(list(CSV_COLUMNS))
    for cell in ws[1]:
        cell.font = Font(bold=True)
    for row in rows:
        ws.append([row[c] if c == 'seed' else _csv_cell(row, c) for c in CSV_COLUMNS])
    ws.freeze_panes = 'A2'

    info = wb.create_sheet('campaign')
    for key in sorted(header):
        info.append([key, json.dumps(_jsonable(header[key]), sort_keys=True)])
    wb.save(path)


_WRITERS = {
    'records': write_records,
    'csv': write_csv,
    'xlsx': write_xlsx,
}


def write_report(rows: list, header: dict, path, fmt: str = 'records'):
    if fmt not in _WRITERS:
        raise ValueError(f"Unknown report format {fmt!r}. Valid formats: {', '.join(REPORT_FORMATS)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _WRITERS[fmt](rows, header, path)
    logger.info(f"Wrote {len(rows)} report rows to {path} ({fmt})")


# ---------------------------------------------------------------------------
# Run history
# ---------------------------------------------------------------------------

def log_campaign(summary: dict, log_dir: Optional[Path] = None):
    """
    Append a campaign summary to campaign_history.json.

    History is bookkeeping: write failures are logged and swallowed.
    """
    log_dir = Path(log_dir) if log_dir is not None else LOGS_DIR
    history_file = log_dir / 'campaign_history.json'
    try:
        log_dir.mkdir(parents=True, exist_ok=True)
        history = []
        if history_file.exists():
            with open(history_file, 'r') as f:
                history = json.load(f)
        entry = {'timestamp': datetime.now().strftime('%Y-%m-%d %H:%M:%S'), **_jsonable(summary)}
        history.append(entry)
        with open(history_file, 'w') as f:
            json.dump(history, f, indent=2)
    except (OSError, ValueError) as e:
        logger.warning(f"Could not update campaign history {history_file}: {str(e)}")


def get_campaign_history(log_dir: Optional[Path] = None) -> list:
    history_file = (Path(log_dir) if log_dir is not None else LOGS_DIR) / 'campaign_history.json'
    if not history_file.exists():
        return []
    try:
        with open(history_file, 'r') as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        logger.error(f"Error reading campaign history: {str(e)}")
        return []
