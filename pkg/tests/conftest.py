"""Pytest configuration and fixtures for bochner-calc tests"""

import logging

import numpy as np
import pytest
from click.testing import CliRunner

from bpcalc import utils as bp_utils
from bpcalc.bernstein import psi_log, psi_poisson, psi_rat, psi_sqrt
from bpcalc.operators import GeneratorTuple, HermitianPerturbation, make_commuting_tuple
from bpcalc.quadrature import QuadratureSpec


@pytest.fixture(autouse=True)
def isolate_logs_dir(tmp_path, monkeypatch):
    """Redirect run history and log files to a throwaway directory.

    log_campaign() writes to the module-level LOGS_DIR unless a log directory is
    configured, so without this tests would append to the project's
    logs/campaign_history.json.
    """
    monkeypatch.setattr(bp_utils, 'LOGS_DIR', tmp_path / 'logs')
    for variable in ('BPCALC_LOG_LEVEL', 'BPCALC_LOG_DIR', 'BPCALC_WORKERS', 'BPCALC_NODES_PER_PANEL',
                     'BPCALC_PANELS_PER_DECADE', 'BPCALC_TARGET_TOL'):
        monkeypatch.delenv(variable, raising=False)
    yield
    bp_utils.reset_logging()
    # setup_logging() turns propagation off; restore it so pytest's log capture
    # does not attach its handlers to the package logger in later tests.
    logging.getLogger('bpcalc').propagate = True


@pytest.fixture
def sqrt_psi():
    return psi_sqrt()


@pytest.fixture
def log_psi():
    return psi_log()


@pytest.fixture
def rat_psi():
    return psi_rat()


@pytest.fixture
def poisson_psi():
    return psi_poisson()


@pytest.fixture
def catalog():
    """The four base catalog entries"""
    return [psi_sqrt(), psi_log(), psi_rat(), psi_poisson()]


@pytest.fixture
def fast_spec():
    """Coarser panels for tests that run many applies"""
    return QuadratureSpec(nodes_per_panel=24)


@pytest.fixture
def diag_pair():
    """A = diag(-1, -3), B = diag(-2, -1) as single certified generators"""
    return GeneratorTuple.diagonal([-1.0, -3.0]), GeneratorTuple.diagonal([-2.0, -1.0])


@pytest.fixture
def scalar_pair():
    """A = diag(-1), B = diag(-2)"""
    return GeneratorTuple.diagonal([-1.0]), GeneratorTuple.diagonal([-2.0])


@pytest.fixture
def factory_tuple():
    """Seeded 4x4 single generator with a unitary similarity (M = 1)"""
    return make_commuting_tuple(1, 4, seed=11)


@pytest.fixture
def swap_hermitian():
    """H = [[0, 1], [1, 0]]"""
    return HermitianPerturbation(np.array([[0.0, 1.0], [1.0, 0.0]]))


@pytest.fixture
def cli_runner():
    """Create CLI test runner"""
    return CliRunner()
