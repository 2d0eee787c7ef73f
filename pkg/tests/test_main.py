"""
Unit tests for the command-line entry point.
Tests argument parsing, config-file merging and exit codes.
"""

import io
import os
import shutil
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
import main as cli
from modules.market_session import TraderPopulationSpec
from modules.order_flow import ScheduleError


class TestArguments(unittest.TestCase):
    """Test cases for parsing and config merging."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()
        self.parser = cli.build_parser()

    def tearDown(self):
        """Clean up test fixtures."""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def write_config(self, text):
        path = os.path.join(self.temp_dir, 'experiment.yaml')
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_command_required(self):
        """Test running without a subcommand is a usage error."""
        with patch('sys.stderr', new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                self.parser.parse_args([])

    def test_repeatable_segments(self):
        """Test --demand can be given more than once."""
        args = self.parser.parse_args(['session', '--demand', '0:60:50:150', '--demand', '60:120:200:300'])
        self.assertEqual(args.demand, ['0:60:50:150', '60:120:200:300'])
        self.assertIsNone(args.dump_tape)

    def test_flag_beats_file(self):
        """Test CLI flags override the config file, which overrides defaults."""
        path = self.write_config("duration: 90\nseed: 4\ninterval: 15\n")
        args = self.parser.parse_args(['session', '--config', path, '--seed', '9'])
        file_cfg = cli.load_experiment_file(args.config)

        self.assertEqual(cli.resolve(args, file_cfg, 'seed', 0), 9)
        self.assertEqual(cli.resolve(args, file_cfg, 'duration', 300), 90)
        self.assertEqual(cli.resolve(args, file_cfg, 'trials', 1), 1)

    def test_schedule_from_file(self):
        """Test a nested schedule section builds the session template."""
        path = self.write_config(
            "duration: 180\n"
            "schedule:\n"
            "  timemode: drip-fixed\n"
            "  demand:\n"
            "    - [0, 60, 50, 150]\n"
            "    - [60, 180, 200, 300, linear, {slope: 0.5}]\n"
            "  supply:\n"
            "    - [0, 180, 50, 150]\n"
        )
        args = self.parser.parse_args(['session', '--config', path, '--stepmode', 'random'])
        template = cli.build_template(args, cli.load_experiment_file(args.config))

        self.assertEqual(template.end_time, 180.0)
        self.assertEqual(template.schedule.timemode, 'drip-fixed')
        self.assertEqual(template.schedule.stepmode, 'random')
        self.assertEqual(len(template.schedule.demand), 2)
        self.assertEqual(template.schedule.demand[1].offset_name, 'linear')

    def test_default_schedule_spans_session(self):
        """Test missing segments default to one range over the whole session."""
        args = self.parser.parse_args(['session', '--duration', '45'])
        template = cli.build_template(args, {})
        self.assertEqual(template.schedule.demand[0].t_end, 45.0)
        self.assertEqual(template.schedule.supply[0].t_start, 0.0)

    def test_price_band_flags(self):
        """Test --sys-max narrows the band and the file can set sys_min."""
        path = self.write_config("sys_min: 5\nsys_max: 500\n")
        args = self.parser.parse_args(['session', '--config', path, '--sys-max', '200'])
        template = cli.build_template(args, cli.load_experiment_file(args.config))

        self.assertEqual((template.sys_min, template.sys_max), (5, 200))
        cfg = template.session_config('trial0000001', TraderPopulationSpec.symmetric([('ZIC', 1)]), 1)
        self.assertEqual(cfg.sys_max, 200)

    def test_default_price_band(self):
        """Test the band falls back to the .env limits."""
        template = cli.build_template(self.parser.parse_args(['session']), {})
        self.assertEqual((template.sys_min, template.sys_max), (config.LOB_SYS_MIN_PRICE, config.LOB_SYS_MAX_PRICE))

    def test_bad_segment(self):
        """Test a malformed segment surfaces as a ScheduleError."""
        args = self.parser.parse_args(['session', '--demand', '0:60:50'])
        with self.assertRaises(ScheduleError):
            cli.build_template(args, {})

    def test_non_mapping_config(self):
        """Test a config file that is not a mapping is rejected."""
        path = self.write_config("- 1\n- 2\n")
        with self.assertRaises(ValueError):
            cli.load_experiment_file(path)


class TestMain(unittest.TestCase):
    """Test cases for main() end to end."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test fixtures."""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_session_command(self):
        """Test a session run writes one balances row per trial."""
        code = cli.main(['session', '--buyers', 'GVWY:2,ZIC:2', '--duration', '5', '--trials', '2',
                         '--output-dir', self.temp_dir, '--dump-prices'])
        self.assertEqual(code, 0)

        with open(os.path.join(self.temp_dir, 'balances_session.csv')) as f:
            rows = f.read().splitlines()
        self.assertEqual(len(rows), 2)
        self.assertTrue(rows[0].startswith('trial0000001,5.000000,GVWY,'))
        self.assertTrue(os.path.exists(os.path.join(self.temp_dir, 'prices_trial0000002.csv')))

    def test_sweep_command(self):
        """Test a sweep run names its balances file by the equal-ratio count."""
        code = cli.main(['sweep', '--types', 'GVWY,ZIC', '--n-per-side', '4', '--duration', '3',
                         '--output-dir', self.temp_dir])
        self.assertEqual(code, 0)

        with open(os.path.join(self.temp_dir, 'balances_002.csv')) as f:
            self.assertEqual(len(f.read().splitlines()), 3)

    def test_invalid_input_exit_code(self):
        """Test malformed input exits nonzero."""
        self.assertEqual(cli.main(['session', '--buyers', 'GVWY4', '--output-dir', self.temp_dir]), 1)
        self.assertEqual(cli.main(['sweep', '--types', 'GVWY,ZIC', '--n-per-side', '1',
                                   '--output-dir', self.temp_dir]), 1)

    def test_failed_trial_reported(self):
        """Test a failing trial prints its id and exits nonzero."""
        stderr = io.StringIO()
        with patch('modules.experiment_runner.market_session', side_effect=RuntimeError('boom')), \
                patch('sys.stderr', stderr):
            code = cli.main(['session', '--buyers', 'ZIC:1', '--duration', '2', '--output-dir', self.temp_dir])

        self.assertEqual(code, 1)
        self.assertIn('FAILED trial0000001', stderr.getvalue())

    def test_plot_command(self):
        """Test plotting a prices file writes an image."""
        prices = os.path.join(self.temp_dir, 'prices_trial0000001.csv')
        with open(prices, 'w') as f:
            f.write('1.000000,100\n2.500000,104\n61.000000,248\n')
        out = os.path.join(self.temp_dir, 'prices.png')

        code = cli.main(['plot', prices, '--out', out, '--epoch', '0:60:100', '--epoch', '60:120:250'])
        self.assertEqual(code, 0)
        self.assertGreater(os.path.getsize(out), 0)

    @patch('main.config.validate_config', return_value=False)
    def test_invalid_configuration(self, mock_validate):
        """Test a bad .env configuration stops before running anything."""
        self.assertEqual(cli.main(['session', '--output-dir', self.temp_dir]), 1)
        self.assertFalse(os.path.exists(os.path.join(self.temp_dir, 'balances_session.csv')))


if __name__ == '__main__':
    unittest.main()
