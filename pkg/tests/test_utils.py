"""Tests for settings, logging and matrix files"""

import logging

import numpy as np
import pytest

from bpcalc import create_runner
from bpcalc import utils as bp_utils
from bpcalc.utils import (
    Settings, format_complex, format_number, load_settings, parse_complex, parse_matrix, setup_logging,
)


class TestSettings:
    """Test environment settings"""

    def test_defaults(self):
        """Test settings with an empty environment"""
        settings = load_settings({})
        assert settings.log_level == 'WARNING'
        assert settings.workers == 1
        assert settings.quadrature == {}

    def test_values(self, tmp_path):
        """Test every variable"""
        settings = load_settings({
            'BPCALC_LOG_LEVEL': 'debug', 'BPCALC_LOG_DIR': str(tmp_path), 'BPCALC_WORKERS': '4',
            'BPCALC_NODES_PER_PANEL': '16', 'BPCALC_TARGET_TOL': '1e-8'})
        assert settings.log_level == 'DEBUG'
        assert settings.log_dir == tmp_path
        assert settings.workers == 4
        assert settings.quadrature == {'nodes_per_panel': 16, 'target_tol': 1e-8}

    @pytest.mark.parametrize('variable,value', [
        ('BPCALC_LOG_LEVEL', 'loud'), ('BPCALC_WORKERS', '0'), ('BPCALC_WORKERS', 'x'),
        ('BPCALC_PANELS_PER_DECADE', '2.5')])
    def test_malformed_values_name_the_variable(self, variable, value):
        """Test that errors name the offending variable"""
        with pytest.raises(ValueError, match=variable):
            load_settings({variable: value})


class TestLogging:
    """Test logger setup"""

    def test_handlers_not_duplicated(self, tmp_path):
        """Test that repeated setup keeps one console and one file handler"""
        setup_logging('INFO', tmp_path)
        package_logger = setup_logging('DEBUG', tmp_path)
        assert len(package_logger.handlers) == 2
        assert package_logger.level == logging.DEBUG
        assert not package_logger.propagate
        assert len(list(tmp_path.glob('bpcalc_*.log'))) == 1

    def test_create_runner_verbose(self):
        """Test that verbose raises the level to INFO"""
        runner = create_runner(Settings(), verbose=True)
        assert runner.settings.log_level == 'INFO'
        assert logging.getLogger('bpcalc').level == logging.INFO

    def test_logs_dir_is_isolated(self, tmp_path):
        """Test that the autouse fixture redirects the history directory"""
        assert bp_utils.LOGS_DIR == tmp_path / 'logs'


class TestMatrixFiles:
    """Test the matrix file format"""

    def test_parse_complex(self):
        """Test a+bi tokens"""
        assert parse_complex('-1+2i') == complex(-1, 2)
        assert parse_complex('3') == 3
        with pytest.raises(ValueError):
            parse_complex('x')

    def test_format_complex(self):
        """Test the 17-digit rendering"""
        assert format_complex(-0.5) == '-0.5'
        assert format_complex(complex(1, -2)) == '1-2i'
        assert parse_complex(format_complex(complex(0.1, 1 / 3))) == complex(0.1, 1 / 3)

    def test_parse_matrix(self):
        """Test a complete file with a comment line"""
        matrix = parse_matrix('# generator\n2\n-1 1\n0 -1+1i\n')
        assert np.array_equal(matrix, np.array([[-1, 1], [0, -1 + 1j]]))

    @pytest.mark.parametrize('text', ['', 'x\n', '2\n-1 0\n', '2\n-1 0\n0\n', '0\n'])
    def test_malformed_matrices(self, text):
        """Test header, row count and row length errors"""
        with pytest.raises(ValueError):
            parse_matrix(text)

    def test_format_number(self):
        """Test nan and inf spellings"""
        assert format_number(float('nan')) == 'nan'
        assert format_number(float('-inf')) == '-inf'
        assert format_number(0.1) == '0.10000000000000001'
