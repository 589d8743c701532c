"""Tests for campaign configuration, planning, running and report writing"""

import csv
import json

import numpy as np
import pytest
from openpyxl import load_workbook

from bpcalc import campaign
from bpcalc.campaign import (
    CHECKER_NAMES, CampaignConfig, CampaignRunner, ConfigError, Trial, load_config, parse_flat,
    plan_trials, run_trial, tally,
)
from bpcalc.utils import CSV_COLUMNS, RECORD_FIELDS, Settings, get_campaign_history
from bpcalc.verify import BoundReport


@pytest.fixture
def small_config():
    """Two checkers, two entries, two trials: sqrt on seed 0, rat on seed 1"""
    return CampaignConfig(checkers=['thm1', 'cor2'], psis=['sqrt', 'rat'], dims=[2], arities=[1],
                          trials=2, seed=0, quadrature={'nodes_per_panel': 24})


class TestCampaignConfig:
    """Test configuration parsing and validation"""

    def test_defaults(self):
        """Test the default campaign"""
        config = CampaignConfig()
        assert config.checkers == list(CHECKER_NAMES)
        assert config.trials == 100
        assert config.format == 'records'

    def test_unknown_checker_lists_valid_names(self):
        """Test that unknown checkers are rejected with the valid names"""
        with pytest.raises(ConfigError, match='Valid checkers'):
            CampaignConfig(checkers=['thm99'])

    def test_invalid_entries(self):
        """Test rejection of bad catalog names, norms, formats and counts"""
        with pytest.raises(ConfigError, match='Valid names'):
            CampaignConfig(psis=['cosh'])
        with pytest.raises(ConfigError, match='Valid norms'):
            CampaignConfig(norms=['nuclear'])
        with pytest.raises(ConfigError, match='Valid formats'):
            CampaignConfig(format='pdf')
        with pytest.raises(ConfigError):
            CampaignConfig(trials=-1)
        with pytest.raises(ConfigError):
            CampaignConfig(quadrature={'panels': 3})

    def test_from_mapping_accepts_scalars(self):
        """Test that list keys accept scalars and quadrature keys accept the prefix form"""
        config = CampaignConfig.from_mapping({'checkers': 'thm1', 'dims': '3', 'trials': '5',
                                              'quadrature.nodes_per_panel': '24'})
        assert config.checkers == ['thm1']
        assert config.dims == [3]
        assert config.trials == 5
        assert config.quadrature == {'nodes_per_panel': '24'}
        assert config.spec().nodes_per_panel == 24

    def test_unknown_key(self):
        """Test that unknown keys are rejected"""
        with pytest.raises(ConfigError, match='Valid keys'):
            CampaignConfig.from_mapping({'checker': 'thm1'})

    def test_parse_flat(self):
        """Test repeated keys and comments in the flat format"""
        data = parse_flat("# comment\ncheckers = thm1\ncheckers = cor2  # trailing\n\ntrials = 3\n")
        assert data == {'checkers': ['thm1', 'cor2'], 'trials': '3'}
        with pytest.raises(ConfigError, match='Line 1'):
            parse_flat('trials 3')

    def test_load_json_and_flat(self, tmp_path):
        """Test both file formats"""
        json_path = tmp_path / 'campaign.json'
        json_path.write_text(json.dumps({'checkers': ['shift'], 'trials': 1, 'psis': ['log']}))
        assert load_config(json_path).checkers == ['shift']

        flat_path = tmp_path / 'campaign.cfg'
        flat_path.write_text('checkers = shift\npsis = log\ntrials = 1\nformat = csv\n')
        config = load_config(flat_path)
        assert config.format == 'csv'
        assert config.psis == ['log']

    def test_load_errors(self, tmp_path):
        """Test unreadable and malformed files"""
        with pytest.raises(ConfigError):
            load_config(tmp_path / 'missing.json')
        bad = tmp_path / 'bad.json'
        bad.write_text('{not json')
        with pytest.raises(ConfigError, match='Invalid JSON'):
            load_config(bad)

    def test_digest_ignores_output(self, small_config):
        """Test that the digest depends on the campaign, not on where it is written"""
        moved = small_config.with_overrides(output='elsewhere.jsonl')
        assert moved.digest() == small_config.digest()
        assert small_config.with_overrides(seed=1).digest() != small_config.digest()


class TestPlanning:
    """Test trial planning"""

    def test_round_robin(self, small_config):
        """Test seeds and catalog entries per trial"""
        trials = plan_trials(small_config)
        assert [(t.checker, t.seed, t.psi_name) for t in trials] == [
            ('thm1', 0, 'sqrt'), ('thm1', 1, 'rat'), ('cor2', 0, 'sqrt'), ('cor2', 1, 'rat')]

    def test_norms_only_for_normed_checkers(self):
        """Test that norms multiply only the checkers that take an ideal"""
        config = CampaignConfig(checkers=['thm1', 'cor2'], psis=['rat'], trials=1,
                                norms=['operator', 'trace'])
        trials = plan_trials(config)
        assert [(t.checker, t.norm) for t in trials] == [
            ('thm1', 'operator'), ('cor2', 'operator'), ('cor2', 'trace')]

    def test_single_generator_checkers(self):
        """Test that single-generator checkers always plan n = 1"""
        config = CampaignConfig(checkers=['thm8'], arities=[3], trials=2)
        assert {t.n for t in plan_trials(config)} == {1}

    def test_zero_trials(self):
        """Test that a campaign with no trials has no reports"""
        result = CampaignRunner().run(CampaignConfig(trials=0))
        assert result.entries == []
        assert result.totals == {'reports': 0, 'passed': 0, 'failed': 0, 'gated': 0}
        assert result.ok


class TestRunning:
    """Test trial execution and result ordering"""

    def test_gated_trial(self):
        """Test that sqrt with the Lipschitz checker is gated, not failed"""
        trial = Trial('cor2', 0, 'sqrt', 1, 2)
        reports = run_trial(trial, CampaignConfig().spec(), CampaignConfig(trials=1))
        assert len(reports) == 1
        assert not reports[0].hypotheses_met
        assert 'finite_moments' in reports[0].details['reason']

    def test_small_campaign(self, small_config):
        """Test totals of a small campaign"""
        result = CampaignRunner().run(small_config)
        assert result.totals['reports'] == 4
        assert result.totals['gated'] == 1
        assert result.totals['failed'] == 0
        assert result.ok
        assert result.header['config_digest'] == small_config.digest()

    def test_worker_count_does_not_change_order(self, small_config):
        """Test that parallel runs give the same rows in the same order"""
        serial = CampaignRunner(Settings(workers=1)).run(small_config).rows
        parallel = CampaignRunner(Settings(workers=3)).run(small_config).rows
        assert [(r['checker'], r['seed'], r['name']) for r in serial] == \
            [(r['checker'], r['seed'], r['name']) for r in parallel]
        for a, b in zip(serial, parallel):
            assert a['passed'] == b['passed']
            if a['hypotheses_met']:
                assert a['lhs'] == pytest.approx(b['lhs'], rel=1e-12)

    def test_numerical_breakdown_is_a_failure(self, monkeypatch):
        """Test that quadrature errors become failing reports"""
        def broken(trial, spec, config):
            raise campaign.QuadratureError('no convergence')

        monkeypatch.setitem(campaign._RUNNERS, 'thm1', broken)
        reports = run_trial(Trial('thm1', 0, 'rat', 1, 2), CampaignConfig().spec(), CampaignConfig())
        assert reports[0].hypotheses_met
        assert not reports[0].passed
        assert 'no convergence' in reports[0].details['error']

    @pytest.mark.parametrize('error', [ValueError('array must not contain infs or NaNs'),
                                       np.linalg.LinAlgError('Singular matrix')])
    def test_library_errors_are_failures(self, monkeypatch, error):
        """Test that numpy and scipy errors fail the trial instead of aborting the campaign"""
        def broken(trial, spec, config):
            raise error

        monkeypatch.setitem(campaign._RUNNERS, 'cor2', broken)
        reports = run_trial(Trial('cor2', 0, 'rat', 1, 2, 'trace'), CampaignConfig().spec(), CampaignConfig())
        assert not reports[0].passed
        assert reports[0].hypotheses_met
        assert type(error).__name__ in reports[0].details['error']

    def test_tally_counts_subchecks(self):
        """Test that subchecks are counted as rows"""
        child = BoundReport('child', 2.0, 1.0, (('x', True),))
        parent = BoundReport('parent', 0.0, 1.0, (('x', True),), subchecks=(child,))
        assert tally([('thm1', 0, parent)]) == {'reports': 2, 'passed': 1, 'failed': 1, 'gated': 0}


class TestReports:
    """Test report writers through the runner"""

    def test_records(self, small_config, tmp_path):
        """Test the JSON-lines report and the run history"""
        runner = CampaignRunner()
        result = runner.run(small_config)
        path = tmp_path / 'out' / 'report.jsonl'
        runner.write(result, path, 'records')

        lines = path.read_text().splitlines()
        header = json.loads(lines[0])['header']
        assert header['config_digest'] == small_config.digest()
        assert header['totals']['reports'] == 4
        records = [json.loads(line) for line in lines[1:]]
        assert len(records) == 4
        assert set(records[0]) == set(RECORD_FIELDS)
        gated = [r for r in records if not r['hypotheses_met']]
        assert gated[0]['lhs'] == 'nan'

        history = get_campaign_history()
        assert history[-1]['config_digest'] == small_config.digest()

    def test_records_are_reproducible(self, small_config, tmp_path):
        """Test that two runs of one config give identical files"""
        runner = CampaignRunner()
        first, second = tmp_path / 'a.jsonl', tmp_path / 'b.jsonl'
        runner.write(runner.run(small_config), first)
        runner.write(runner.run(small_config), second)
        assert first.read_text() == second.read_text()

    def test_csv(self, small_config, tmp_path):
        """Test the CSV column order and the header comments"""
        runner = CampaignRunner()
        path = tmp_path / 'report.csv'
        runner.write(runner.run(small_config), path, 'csv')
        lines = path.read_text().splitlines()
        comments = [line for line in lines if line.startswith('#')]
        assert any(line.startswith('# config_digest') for line in comments)
        rows = list(csv.reader(line for line in lines if not line.startswith('#')))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) == 5
        assert {row[CSV_COLUMNS.index('passed')] for row in rows[1:]} <= {'true', 'false'}

    def test_xlsx(self, small_config, tmp_path):
        """Test the workbook sheets"""
        runner = CampaignRunner()
        path = tmp_path / 'report.xlsx'
        runner.write(runner.run(small_config), path, 'xlsx')
        wb = load_workbook(path)
        assert wb.sheetnames == ['reports', 'campaign']
        header_row = [cell.value for cell in wb['reports'][1]]
        assert tuple(header_row) == CSV_COLUMNS
        assert wb['reports'].max_row == 5
