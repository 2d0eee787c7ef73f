#!/usr/bin/env python3
"""
LOB Exchange Simulator - Main Entry Point

Command-line interface with three subcommands:
- session: run one trader population for one or more seeded trials
- sweep:   run every trader-ratio composition (ratio sweep)
- plot:    render a prices CSV as a transaction-price scatter
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent))

import yaml

import config
from modules.experiment_runner import (
    SWEEP_TYPES,
    SessionTemplate,
    SweepSpec,
    run_sweep,
    run_trials,
)
from modules.market_session import DumpFlags, TraderPopulationSpec, parse_population_arg
from modules.order_flow import (
    OrderSchedule,
    ScheduleSegment,
    parse_segment_arg,
    segment_from_config,
)
from modules.price_plot import load_price_series, plot_price_series
from utils.logger import setup_logger

logger = logging.getLogger(__name__)

SCHEDULE_KEYS = ('demand', 'supply', 'interval', 'timemode', 'stepmode')


def load_experiment_file(path: Optional[str]) -> Dict[str, Any]:
    """
    Load a YAML experiment config. Keys mirror the CLI flags with
    underscores; a nested 'schedule' section is flattened.
    """
    if not path:
        return {}
    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"Config file {path} must contain a mapping")
    schedule = data.pop('schedule', None) or {}
    for key in SCHEDULE_KEYS:
        if key in schedule and key not in data:
            data[key] = schedule[key]
    logger.info(f"Loaded experiment config from {path}")
    return data


def resolve(args: argparse.Namespace, file_cfg: Dict[str, Any], name: str, default: Any) -> Any:
    """CLI flag, else config file, else default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return file_cfg.get(name, default)


def _segments(items: Sequence[Any]) -> List[ScheduleSegment]:
    return [parse_segment_arg(item) if isinstance(item, str) else segment_from_config(item)
            for item in items]


def build_schedule(args: argparse.Namespace, file_cfg: Dict[str, Any], duration: float) -> OrderSchedule:
    """Schedule from flags and file; a side with no segments gets the default range over the whole session."""
    demand = resolve(args, file_cfg, 'demand', None)
    supply = resolve(args, file_cfg, 'supply', None)
    return OrderSchedule(
        demand=_segments(demand) if demand else [ScheduleSegment(0.0, duration, *config.DEFAULT_DEMAND_RANGE)],
        supply=_segments(supply) if supply else [ScheduleSegment(0.0, duration, *config.DEFAULT_SUPPLY_RANGE)],
        interval=float(resolve(args, file_cfg, 'interval', config.DEFAULT_ORDER_INTERVAL)),
        timemode=resolve(args, file_cfg, 'timemode', config.DEFAULT_TIMEMODE),
        stepmode=resolve(args, file_cfg, 'stepmode', config.DEFAULT_STEPMODE),
    )


def build_template(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> SessionTemplate:
    duration = float(resolve(args, file_cfg, 'duration', config.DEFAULT_SESSION_DURATION))
    output_dir = Path(resolve(args, file_cfg, 'output_dir', config.OUTPUT_DIR))
    dump = DumpFlags(
        tape=bool(resolve(args, file_cfg, 'dump_tape', False)),
        blotters=bool(resolve(args, file_cfg, 'dump_blotters', False)),
        lob_frames=bool(resolve(args, file_cfg, 'dump_lob_frames', False)),
        prices=bool(resolve(args, file_cfg, 'dump_prices', False)),
    )
    return SessionTemplate(
        schedule=build_schedule(args, file_cfg, duration),
        start_time=0.0,
        end_time=duration,
        dump=dump,
        output_dir=output_dir,
        sys_min=int(resolve(args, file_cfg, 'sys_min', config.LOB_SYS_MIN_PRICE)),
        sys_max=int(resolve(args, file_cfg, 'sys_max', config.LOB_SYS_MAX_PRICE)),
    )


def _population_spec(value: Any) -> List:
    if isinstance(value, str):
        return parse_population_arg(value)
    return [(str(ttype).upper(), int(count)) for ttype, count in value]


def run_session_command(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> Dict[str, Any]:
    template = build_template(args, file_cfg)
    buyers = _population_spec(resolve(args, file_cfg, 'buyers', 'ZIC:16'))
    sellers_value = resolve(args, file_cfg, 'sellers', None)
    sellers = _population_spec(sellers_value) if sellers_value else buyers
    population = TraderPopulationSpec(buyers=tuple(buyers), sellers=tuple(sellers))

    return run_trials(
        [population],
        int(resolve(args, file_cfg, 'trials', 1)),
        template,
        template.output_dir,
        tag='session',
        base_seed=int(resolve(args, file_cfg, 'seed', config.DEFAULT_SEED)),
        parallelism=int(resolve(args, file_cfg, 'parallelism', config.DEFAULT_PARALLELISM)),
    )


def run_sweep_command(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> Dict[str, Any]:
    template = build_template(args, file_cfg)
    types = resolve(args, file_cfg, 'types', ','.join(SWEEP_TYPES))
    if isinstance(types, str):
        types = [t.strip().upper() for t in types.split(',') if t.strip()]
    spec = SweepSpec(
        trader_types=tuple(types),
        n_per_side=int(resolve(args, file_cfg, 'n_per_side', 16)),
        min_n=int(resolve(args, file_cfg, 'min_n', 1)),
        trials_per_ratio=int(resolve(args, file_cfg, 'trials', 1)),
        base_seed=int(resolve(args, file_cfg, 'seed', config.DEFAULT_SEED)),
    )
    return run_sweep(
        spec,
        template,
        template.output_dir,
        parallelism=int(resolve(args, file_cfg, 'parallelism', config.DEFAULT_PARALLELISM)),
    )


def _parse_epoch(text: str):
    t0, t1, p0 = text.split(':')
    return float(t0), float(t1), int(p0)


def run_plot_command(args: argparse.Namespace) -> Dict[str, Any]:
    prices = load_price_series(args.prices)
    out = args.out or str(Path(args.prices).with_suffix('.png'))
    epochs = [_parse_epoch(e) for e in (args.epoch or [])]
    path = plot_price_series(prices, out, epochs, title=args.title)
    return {'success': True, 'plot_file': path, 'errors': []}


def add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags shared by session and sweep; every one can also come from --config."""
    parser.add_argument('--config', help='YAML experiment config (flags override it)')
    parser.add_argument('--duration', type=float, help='Session length in simulated seconds')
    parser.add_argument('--demand', action='append',
                        help='Demand segment T0:T1:LO:HI[:OFFSET[:K=V;K=V]] (repeatable)')
    parser.add_argument('--supply', action='append',
                        help='Supply segment T0:T1:LO:HI[:OFFSET[:K=V;K=V]] (repeatable)')
    parser.add_argument('--timemode', choices=['periodic', 'drip-fixed', 'drip-jittered', 'drip-poisson'])
    parser.add_argument('--stepmode', choices=['fixed', 'jittered', 'random'])
    parser.add_argument('--interval', type=float, help='Replenishment interval in seconds')
    parser.add_argument('--sys-min', dest='sys_min', type=int, help='Lowest allowable price in pennies')
    parser.add_argument('--sys-max', dest='sys_max', type=int,
                        help='Highest allowable price; ZIC quotes are drawn up to it, so keep it near the schedule')
    parser.add_argument('--seed', type=int, help='Base seed; trial N uses seed + N')
    parser.add_argument('--trials', type=int, help='Trials per composition')
    parser.add_argument('--output-dir', dest='output_dir', help='Directory for CSV outputs')
    parser.add_argument('--parallelism', type=int, help='Worker processes')
    parser.add_argument('--dump-tape', dest='dump_tape', action='store_true', default=None)
    parser.add_argument('--dump-blotters', dest='dump_blotters', action='store_true', default=None)
    parser.add_argument('--dump-lob-frames', dest='dump_lob_frames', action='store_true', default=None)
    parser.add_argument('--dump-prices', dest='dump_prices', action='store_true', default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description=f"{config.APP_NAME} - continuous double auction experiments with robot traders"
    )
    parser.add_argument('--debug', action='store_true', help='Enable debug logging')
    parser.add_argument('--log-dir', dest='log_dir', help='Also write a daily log file here')
    subparsers = parser.add_subparsers(dest='command', required=True)

    session = subparsers.add_parser('session', help='Run one population for one or more trials')
    add_experiment_arguments(session)
    session.add_argument('--buyers', help='Buyer spec TYPE:COUNT[,TYPE:COUNT...]')
    session.add_argument('--sellers', help='Seller spec (defaults to the buyer spec)')

    sweep = subparsers.add_parser('sweep', help='Run every trader-ratio composition')
    add_experiment_arguments(sweep)
    sweep.add_argument('--types', help='Comma-separated trader types, in loop order')
    sweep.add_argument('--n-per-side', dest='n_per_side', type=int, help='Traders per side')
    sweep.add_argument('--min-n', dest='min_n', type=int, help='Minimum traders of each type')

    plot = subparsers.add_parser('plot', help='Plot a prices CSV')
    plot.add_argument('prices', help='prices_<trial_id>.csv')
    plot.add_argument('--out', help='Image path (defaults to the CSV name with .png)')
    plot.add_argument('--epoch', action='append', help='Equilibrium step T0:T1:P0 (repeatable)')
    plot.add_argument('--title', default='Transaction prices')

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the application."""
    args = build_parser().parse_args(argv)

    # Setup logging
    log_level = logging.DEBUG if args.debug else getattr(logging, config.LOG_LEVEL.upper(), logging.INFO)
    setup_logger('', log_level, Path(args.log_dir) if args.log_dir else None)

    logger.info(f"{config.APP_NAME} v{config.VERSION}")
    logger.info("=" * 60)

    if not config.validate_config():
        logger.error("Configuration validation failed. Please check your .env file.")
        return 1

    try:
        if args.command == 'plot':
            results = run_plot_command(args)
        else:
            file_cfg = load_experiment_file(args.config)
            if args.command == 'session':
                results = run_session_command(args, file_cfg)
            else:
                results = run_sweep_command(args, file_cfg)
    except (ValueError, OSError, yaml.YAMLError) as e:
        logger.error(f"Cannot run {args.command}: {e}")
        return 1

    if not results.get('success', False):
        if results.get('failed_trial_id'):
            logger.error(f"Failed trial: {results['failed_trial_id']}")
            print(f"FAILED {results['failed_trial_id']}", file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
