"""
Campaign Orchestration Module

Parses campaign configurations, builds seeded instances for every checker, runs the
trials on a worker pool and collects the reports in a deterministic order.
"""

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from bpcalc import verify
from bpcalc.bernstein import BASE_NAMES, NAME_FORMS, CatalogError, DomainError, get_psi, lift
from bpcalc.operators import (
    NORM_KINDS, ExpmOverflowError, GeneratorTuple, HermitianPerturbation, IdealNorm,
    codiagonal_partner, codiagonal_path, make_commuting_tuple, operator_norm, perturbed_partner,
)
from bpcalc.quadrature import DEFAULT_SPEC, QuadratureError, QuadratureSpec
from bpcalc.utils import REPORT_FORMATS, Settings, log_campaign, report_rows, write_report

logger = logging.getLogger(__name__)

VERSION = '0.1.0'

LEMMA_TIMES = (-2.0, -0.5, 0.5, 2.0)
STABILITY_STEPS = 6
MAX_WORKERS = 32


class ConfigError(ValueError):
    """Malformed campaign configuration."""


@dataclass
class Trial:
    checker: str
    seed: int
    psi_name: str
    n: int
    d: int
    norm: str = 'operator'

    @property
    def order(self) -> tuple:
        return (CHECKER_NAMES.index(self.checker), self.seed, self.norm)


# ---------------------------------------------------------------------------
# Instance builders
# ---------------------------------------------------------------------------

def _kappa(seed: int, kappa_max: float) -> float:
    """Even seeds draw unitary similarities (M = 1), odd seeds well conditioned ones."""
    return 1.0 if seed % 2 == 0 else kappa_max


def _instance_psi(trial: Trial):
    """Catalog entry for a trial; 1-d entries are lifted by axis sum (even seeds) or diagonally."""
    psi = get_psi(trial.psi_name)
    if psi.n == 1 and trial.n > 1:
        psi = lift(psi, trial.n, 'sum' if trial.seed % 2 == 0 else 'diag')
    return psi


def _factory(n: int, d: int, seed: int, kappa_max: float) -> GeneratorTuple:
    return make_commuting_tuple(n, d, seed, _kappa(seed, kappa_max))


def _pair(n: int, d: int, seed: int, kappa_max: float):
    """
    (A, B) rotating through independent tuples, codiagonal partners (cross commuting)
    and perturbed partners (close, not cross commuting).
    """
    A = _factory(n, d, 2 * seed, kappa_max)
    mode = seed % 3
    if mode == 0:
        return A, _factory(n, d, 2 * seed + 1, kappa_max)
    if mode == 1:
        return A, codiagonal_partner(A, seed)
    return A, perturbed_partner(A, seed)


def _unit_vector(d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return x / np.linalg.norm(x)


def _matrix_direction(A: GeneratorTuple, seed: int) -> np.ndarray:
    """Random direction small enough that A + t dA keeps its spectrum in Re < 0 for t in [0, 1]."""
    rng = np.random.default_rng(seed)
    d = A.d
    X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    size = 0.4 * abs(A.omega[0]) / A.bound_m
    return size * X / operator_norm(X)


def _diagonal_pair(d: int, seed: int):
    rng = np.random.default_rng(seed)
    a = -rng.uniform(0.1, 4.0, d)
    b = -rng.uniform(0.1, 4.0, d)
    return GeneratorTuple.diagonal(a, label='diagA'), GeneratorTuple.diagonal(b, label='diagB')


def _run_thm1(trial, spec, config):
    psi = _instance_psi(trial)
    A, B = _pair(psi.n, trial.d, trial.seed, config.kappa_max)
    return [verify.check_thm1(psi, A, B, spec, seed=trial.seed)]


def _run_example1_power(trial, spec, config):
    alpha = config.alphas[trial.seed % len(config.alphas)]
    A, B = _pair(1, trial.d, trial.seed, config.kappa_max)
    return [verify.check_example1_power(alpha, A, B, spec, seed=trial.seed)]


def _run_example1_log(trial, spec, config):
    A, B = _pair(1, trial.d, trial.seed, config.kappa_max)
    return [verify.check_example1_log(A, B, spec, seed=trial.seed)]


def _run_cor1(trial, spec, config):
    psi = _instance_psi(trial)
    B = _factory(psi.n, trial.d, trial.seed, config.kappa_max)
    partner = codiagonal_partner(B, trial.seed)
    sequence = [codiagonal_path(B, partner, 2.0 ** -k) for k in range(STABILITY_STEPS)]
    return [verify.check_cor1_stability(psi, B, sequence, spec, seed=trial.seed)]


def _run_cor2(trial, spec, config):
    psi = _instance_psi(trial)
    A, B = _pair(psi.n, trial.d, trial.seed, config.kappa_max)
    return [verify.check_cor2_lipschitz(psi, A, B, IdealNorm.parse(trial.norm), spec, seed=trial.seed)]


def _run_cor3(trial, spec, config):
    psi = _instance_psi(trial)
    A, B = _pair(psi.n, trial.d, trial.seed, config.kappa_max)
    return [verify.check_cor3_stable(psi, A, B, IdealNorm.parse(trial.norm), spec, seed=trial.seed)]


def _run_thm2(trial, spec, config):
    psi = _instance_psi(trial)
    A = _factory(psi.n, trial.d, trial.seed, config.kappa_max)
    B = codiagonal_partner(A, trial.seed)
    x = _unit_vector(trial.d, trial.seed)
    return [verify.check_thm2_pointwise(psi, A, B, x, spec, seed=trial.seed)]


def _run_cor4(trial, spec, config):
    psi = _instance_psi(trial)
    A = _factory(psi.n, trial.d, trial.seed, config.kappa_max)
    x = _unit_vector(trial.d, trial.seed)
    return [verify.check_thm2_pointwise(psi, A, None, x, spec, seed=trial.seed)]


def _run_cor5(trial, spec, config):
    psi = _instance_psi(trial)
    A = _factory(psi.n, trial.d, trial.seed, config.kappa_max)
    B = codiagonal_partner(A, trial.seed)
    x = _unit_vector(trial.d, trial.seed)
    return [verify.check_cor5_pointwise(psi, A, B, x, spec, seed=trial.seed)]


def _commutator_instance(trial, config):
    A = _factory(1, trial.d, trial.seed, config.kappa_max)
    H = HermitianPerturbation.random(trial.d, trial.seed)
    s = LEMMA_TIMES[trial.seed % len(LEMMA_TIMES)]
    return A, H, s


def _run_lemma1(trial, spec, config):
    A, H, s = _commutator_instance(trial, config)
    return [verify.check_lemma1(A, H, s, spec, IdealNorm.parse(trial.norm), seed=trial.seed)]


def _run_cor9(trial, spec, config):
    A, H, s = _commutator_instance(trial, config)
    return [verify.check_cor9_commutator(A, H, s, IdealNorm.parse(trial.norm), seed=trial.seed)]


def _run_thm5(trial, spec, config, stable=False):
    psi = _instance_psi(trial)
    A = _factory(psi.n, trial.d, trial.seed, config.kappa_max)
    H = HermitianPerturbation.random(trial.d, trial.seed)
    return [verify.check_thm5_commutator(psi, A, H, IdealNorm.parse(trial.norm), spec,
                                         stable=stable, seed=trial.seed)]


def _run_thm5_stable(trial, spec, config):
    return _run_thm5(trial, spec, config, stable=True)


def _run_conjugation(trial, spec, config):
    psi = _instance_psi(trial)
    A = _factory(psi.n, trial.d, trial.seed, config.kappa_max)
    H = HermitianPerturbation.random(trial.d, trial.seed)
    s = LEMMA_TIMES[trial.seed % len(LEMMA_TIMES)]
    return [verify.check_conjugation(psi, A, H, s, spec, seed=trial.seed)]


def _run_thm6(trial, spec, config):
    psi = _instance_psi(trial)
    A = _factory(1, trial.d, trial.seed, config.kappa_max)
    deltas = [codiagonal_partner(A, trial.seed), _matrix_direction(A, trial.seed)]
    return verify.check_thm6_frechet(psi, A, deltas, IdealNorm.parse(trial.norm), spec, seed=trial.seed)


def _run_eq9(trial, spec, config):
    psi = _instance_psi(trial)
    A1 = _factory(1, trial.d, trial.seed, config.kappa_max)
    A2 = codiagonal_partner(A1, trial.seed) if trial.seed % 2 == 0 else perturbed_partner(A1, trial.seed)
    return [verify.check_eq9_identity(psi, A1, A2, spec, seed=trial.seed)]


def _run_trace_kernel(trial, spec, config):
    A, B = _pair(1, trial.d, trial.seed, config.kappa_max)
    return [verify.check_trace_kernel(A, B, spec=spec, seed=trial.seed)]


def _run_thm8(trial, spec, config):
    psi = _instance_psi(trial)
    A, B = _pair(1, trial.d, trial.seed, config.kappa_max)
    return [verify.check_thm8_trace(psi, A, B, spec, seed=trial.seed)]


def _run_shift(trial, spec, config):
    psi = _instance_psi(trial)
    A, B = _diagonal_pair(trial.d, trial.seed)
    return [verify.check_cor14_shift(psi, A, B, spec, seed=trial.seed)]


_RUNNERS = {
    'thm1': _run_thm1,
    'example1_power': _run_example1_power,
    'example1_log': _run_example1_log,
    'cor1': _run_cor1,
    'cor2': _run_cor2,
    'cor3': _run_cor3,
    'thm2': _run_thm2,
    'cor4': _run_cor4,
    'cor5': _run_cor5,
    'lemma1': _run_lemma1,
    'cor9': _run_cor9,
    'thm5': _run_thm5,
    'thm5_stable': _run_thm5_stable,
    'conjugation': _run_conjugation,
    'thm6': _run_thm6,
    'eq9': _run_eq9,
    'trace_kernel': _run_trace_kernel,
    'thm8': _run_thm8,
    'shift': _run_shift,
}

CHECKER_NAMES = tuple(_RUNNERS)

# Checkers that take an ideal norm; the others always report in the operator norm
NORMED_CHECKERS = ('cor2', 'cor3', 'lemma1', 'cor9', 'thm5', 'thm5_stable', 'thm6')

# Checkers defined for single generators only
SINGLE_GENERATOR_CHECKERS = (
    'example1_power', 'example1_log', 'lemma1', 'cor9', 'thm6', 'eq9', 'trace_kernel', 'thm8', 'shift',
)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_LIST_KEYS = ('checkers', 'psis', 'dims', 'arities', 'norms', 'alphas')
_SCALAR_KEYS = ('trials', 'seed', 'kappa_max', 'output', 'format')
QUADRATURE_PREFIX = 'quadrature.'


@dataclass
class CampaignConfig:
    """
    A deterministic checker campaign.

    Attributes:
        checkers: Checker names (CHECKER_NAMES)
        psis: Catalog names
        dims: Matrix dimensions d
        arities: Numbers of variables n
        trials: Trials per checker
        seed: Base seed; trial k uses seed + k
        norms: Ideal norm kinds for normed checkers
        quadrature: QuadratureSpec overrides
        kappa_max: Similarity condition cap for odd seeds
        alphas: Exponents for the fractional power bound
        output: Report path (None for no report file)
        format: One of REPORT_FORMATS
    """
    checkers: list = field(default_factory=lambda: list(CHECKER_NAMES))
    psis: list = field(default_factory=lambda: list(BASE_NAMES))
    dims: list = field(default_factory=lambda: [2, 4, 8])
    arities: list = field(default_factory=lambda: [1, 2, 3])
    trials: int = 100
    seed: int = 0
    norms: list = field(default_factory=lambda: ['operator'])
    quadrature: dict = field(default_factory=dict)
    kappa_max: float = 5.0
    alphas: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    output: Optional[str] = None
    format: str = 'records'

    def __post_init__(self):
        self.validate()

    def validate(self):
        """
        Raises:
            ConfigError: Listing the valid names for every rejected entry
        """
        unknown = [c for c in self.checkers if c not in CHECKER_NAMES]
        if unknown:
            raise ConfigError(f"Unknown checkers {unknown}. Valid checkers: {', '.join(CHECKER_NAMES)}")
        for name in self.psis:
            try:
                get_psi(name)
            except (CatalogError, DomainError) as e:
                raise ConfigError(f"{str(e)}. Valid names: {', '.join(NAME_FORMS)}")
        for norm in self.norms:
            try:
                IdealNorm.parse(norm)
            except ValueError:
                raise ConfigError(f"Unknown norm {norm!r}. Valid norms: {', '.join(NORM_KINDS)} "
                                  f"(schatten as schatten:<p>)")
        if self.format not in REPORT_FORMATS:
            raise ConfigError(f"Unknown format {self.format!r}. Valid formats: {', '.join(REPORT_FORMATS)}")
        if self.trials < 0:
            raise ConfigError(f"trials must be >= 0, got {self.trials}")
        if not self.psis or not self.dims or not self.arities or not self.norms:
            raise ConfigError("psis, dims, arities and norms must not be empty")
        if any(d < 1 for d in self.dims) or any(n < 1 for n in self.arities):
            raise ConfigError("dims and arities must be positive")
        if not self.kappa_max >= 1.0:
            raise ConfigError(f"kappa_max must be >= 1, got {self.kappa_max}")
        if any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ConfigError(f"alphas must lie in (0, 1), got {self.alphas}")
        try:
            DEFAULT_SPEC.with_overrides(**self.quadrature)
        except ValueError as e:
            raise ConfigError(str(e))

    @classmethod
    def from_mapping(cls, data: dict) -> 'CampaignConfig':
        """Build from a parsed mapping; list keys accept a scalar or a list."""
        known = set(_LIST_KEYS) | set(_SCALAR_KEYS) | {'quadrature'}
        unknown = sorted(k for k in data if k not in known and not k.startswith(QUADRATURE_PREFIX))
        if unknown:
            raise ConfigError(f"Unknown keys {unknown}. Valid keys: {', '.join(sorted(known))}")
        kwargs = {}
        try:
            for key in _LIST_KEYS:
                if key in data:
                    values = data[key] if isinstance(data[key], list) else [data[key]]
                    kwargs[key] = [_coerce_list_item(key, v) for v in values]
            for key in ('trials', 'seed'):
                if key in data:
                    kwargs[key] = int(data[key])
            if 'kappa_max' in data:
                kwargs['kappa_max'] = float(data['kappa_max'])
            for key in ('output', 'format'):
                if key in data:
                    kwargs[key] = str(data[key])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Malformed value: {str(e)}")
        quadrature = dict(data.get('quadrature', {}))
        quadrature.update({k[len(QUADRATURE_PREFIX):]: v for k, v in data.items()
                           if k.startswith(QUADRATURE_PREFIX)})
        kwargs['quadrature'] = quadrature
        return cls(**kwargs)

    def spec(self, base: QuadratureSpec = DEFAULT_SPEC) -> QuadratureSpec:
        return base.with_overrides(**self.quadrature)

    def with_overrides(self, **overrides) -> 'CampaignConfig':
        data = asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return CampaignConfig(**data)

    def digest(self) -> str:
        """sha256 of the canonical JSON form (output location excluded)."""
        data = asdict(self)
        data.pop('output')
        canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _coerce_list_item(key: str, value):
    if key in ('dims', 'arities'):
        return int(value)
    if key == 'alphas':
        return float(value)
    return str(value).strip()


def parse_flat(text: str) -> dict:
    """
    Flat "key = value" text; repeated keys collect into lists, '#' starts a comment.

    Raises:
        ConfigError: On lines without '='
    """
    data = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"Line {number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        if key in data:
            previous = data[key]
            data[key] = (previous if isinstance(previous, list) else [previous]) + [value]
        else:
            data[key] = value
    return data


def load_config(path) -> CampaignConfig:
    """
    Load a campaign config: JSON for .json files, the flat format otherwise.

    Raises:
        ConfigError: On unreadable or invalid configuration
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {str(e)}")
    if path.suffix.lower() == '.json':
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON in {path}: {str(e)}")
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a JSON object")
    else:
        data = parse_flat(text)
    return CampaignConfig.from_mapping(data)


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def plan_trials(config: CampaignConfig) -> list:
    """Trial k of every checker uses seed + k with psi, d and n taken round-robin."""
    trials = []
    for checker in config.checkers:
        norms = config.norms if checker in NORMED_CHECKERS else ['operator']
        for k in range(config.trials):
            n = 1 if checker in SINGLE_GENERATOR_CHECKERS else config.arities[k % len(config.arities)]
            for norm in norms:
                trials.append(Trial(
                    checker=checker,
                    seed=config.seed + k,
                    psi_name=config.psis[k % len(config.psis)],
                    n=n,
                    d=config.dims[k % len(config.dims)],
                    norm=norm,
                ))
    return trials


def run_trial(trial: Trial, spec: QuadratureSpec, config: CampaignConfig) -> list:
    """
    Run one trial. Unmet hypotheses give gated reports; numerical breakdowns give
    failing reports carrying the error message.
    """
    tag = verify.digest(trial.psi_name, trial.n, trial.d, trial.seed)
    try:
        return _RUNNERS[trial.checker](trial, spec, config)
    except verify.HypothesisError as e:
        logger.info(f"{trial.checker} seed {trial.seed}: gated ({str(e)})")
        return [verify.gated_report(trial.checker, e, tag, trial.norm)]
    except (QuadratureError, ExpmOverflowError, ValueError, np.linalg.LinAlgError) as e:
        logger.error(f"{trial.checker} seed {trial.seed}: {type(e).__name__}: {str(e)}")
        return [verify.BoundReport(trial.checker, math.inf, 0.0, (('numerics', True),), tag, trial.norm,
                                   {'error': f'{type(e).__name__}: {str(e)}'})]


@dataclass
class CampaignResult:
    entries: list
    digest: str
    totals: dict

    @property
    def rows(self) -> list:
        return report_rows(self.entries)

    @property
    def header(self) -> dict:
        return {'config_digest': self.digest, 'version': VERSION, 'totals': self.totals}

    @property
    def ok(self) -> bool:
        return self.totals['failed'] == 0


def tally(entries: list) -> dict:
    """Counts over all rows, subchecks included; gated rows count neither way."""
    totals = {'reports': 0, 'passed': 0, 'failed': 0, 'gated': 0}
    for _, _, report in entries:
        for row in report.flatten():
            totals['reports'] += 1
            if not row.hypotheses_met:
                totals['gated'] += 1
            elif row.passed:
                totals['passed'] += 1
            else:
                totals['failed'] += 1
    return totals


class CampaignRunner:
    """Runs campaigns with the worker count and quadrature settings of a Settings object"""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or Settings()
        self.last_result: Optional[CampaignResult] = None

    def spec_for(self, config: CampaignConfig) -> QuadratureSpec:
        base = DEFAULT_SPEC.with_overrides(**self.settings.quadrature)
        return config.spec(base)

    def run(self, config: CampaignConfig) -> CampaignResult:
        """
        Run every planned trial and sort the reports by (checker, seed, norm).

        Trials are independent and run on a thread pool; the order of the result does
        not depend on the worker count.
        """
        spec = self.spec_for(config)
        trials = plan_trials(config)
        workers = max(1, min(self.settings.workers, MAX_WORKERS))
        logger.info(f"Campaign {config.digest()[:12]}: {len(trials)} trials on {workers} worker(s)")

        if workers == 1:
            outcomes = [run_trial(t, spec, config) for t in trials]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(lambda t: run_trial(t, spec, config), trials))

        ordered = sorted(zip(trials, outcomes), key=lambda pair: pair[0].order)
        entries = [(t.checker, t.seed, report) for t, reports in ordered for report in reports]
        result = CampaignResult(entries, config.digest(), tally(entries))
        self.last_result = result

        totals = result.totals
        if totals['failed']:
            logger.warning(f"Campaign finished with {totals['failed']} violation(s) "
                           f"out of {totals['reports']} reports")
        else:
            logger.info(f"Campaign finished: {totals['passed']} passed, {totals['gated']} gated")
        return result

    def write(self, result: CampaignResult, path, fmt: str = 'records'):
        write_report(result.rows, result.header, path, fmt)
        log_campaign({'config_digest': result.digest, 'totals': result.totals,
                      'output': str(path), 'format': fmt}, self.settings.log_dir)
