"""
Experiment Runner Module

Batch harness for many independent market sessions:
1. Enumerate trader-ratio compositions (or take a single population)
2. Run every (composition, trial) pair as its own seeded session
3. Write one balances row per trial, in trial-number order
4. Summarize mean profit per trader type per composition

Each trial's seed is base_seed + trial_number, so results do not depend on
how many workers run them.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import pandas as pd
from joblib import Parallel, delayed

import config
from modules.csv_exports import write_balances
from modules.market_session import (
    DumpFlags,
    SessionConfig,
    SessionStats,
    TraderPopulationSpec,
    market_session,
)
from modules.market_metrics import MetricUndefinedError, session_alpha, session_efficiency
from modules.order_flow import OrderSchedule

logger = logging.getLogger(__name__)

SWEEP_TYPES = ('GVWY', 'SHVR', 'ZIC', 'ZIP')
SUMMARY_COLUMNS = ['composition', 'ttype', 'count', 'trials', 'mean_total_balance', 'mean_profit_per_trader']
METRICS_COLUMNS = ['trial_id', 'composition', 'n_trades', 'efficiency', 'alpha']


class SweepSpecError(ValueError):
    """Raised for a sweep that cannot be enumerated."""


class TrialFailedError(RuntimeError):
    """A session inside a batch failed; carries the failing trial id."""

    def __init__(self, trial_id: str, reason: str):
        super().__init__(trial_id, reason)
        self.trial_id = trial_id
        self.reason = reason

    def __str__(self) -> str:
        return f"Trial {self.trial_id} failed: {self.reason}"


def trial_id_for(trial_number: int) -> str:
    return 'trial%07d' % trial_number


def composition_label(population: TraderPopulationSpec) -> str:
    """Buyer-side composition as TYPE:COUNT,..."""
    return ','.join(f"{ttype}:{count}" for ttype, count in population.buyers)


@dataclass
class SessionTemplate:
    """Session parameters shared by every trial of a batch."""
    schedule: OrderSchedule
    start_time: float = 0.0
    end_time: float = config.DEFAULT_SESSION_DURATION
    timestep: Optional[float] = None
    sys_min: int = config.LOB_SYS_MIN_PRICE
    sys_max: int = config.LOB_SYS_MAX_PRICE
    dump: DumpFlags = field(default_factory=DumpFlags)
    output_dir: Optional[Path] = None

    def session_config(self, trial_id: str, population: TraderPopulationSpec, seed: int) -> SessionConfig:
        return SessionConfig(
            session_id=trial_id,
            start_time=self.start_time,
            end_time=self.end_time,
            population=population,
            schedule=self.schedule,
            seed=seed,
            timestep=self.timestep,
            sys_min=self.sys_min,
            sys_max=self.sys_max,
            dump=self.dump,
            output_dir=self.output_dir,
        )


@dataclass
class SweepSpec:
    """A trader-ratio sweep: every composition of n_per_side over trader_types."""
    trader_types: Tuple[str, ...] = SWEEP_TYPES
    n_per_side: int = 16
    min_n: int = 1
    trials_per_ratio: int = 1
    base_seed: int = config.DEFAULT_SEED

    def validate(self) -> None:
        if not self.trader_types:
            raise SweepSpecError("A sweep needs at least one trader type")
        if self.min_n < 1:
            raise SweepSpecError(f"min_n must be at least 1, got {self.min_n}")
        if self.trials_per_ratio < 0:
            raise SweepSpecError(f"trials_per_ratio must be >= 0, got {self.trials_per_ratio}")
        if self.n_per_side < self.min_n * len(self.trader_types):
            raise SweepSpecError(
                f"n_per_side {self.n_per_side} cannot give each of {len(self.trader_types)} "
                f"types at least {self.min_n} traders"
            )

    @property
    def equal_ratio_n(self) -> int:
        """Per-type count of the equal-ratio composition; names the balances file."""
        return self.n_per_side // len(self.trader_types)


@dataclass
class TrialResult:
    trial_id: str
    trial_number: int
    population: TraderPopulationSpec
    stats: SessionStats
    metrics: Dict[str, Any] = field(default_factory=dict)


def trial_metrics(stats: SessionStats) -> Dict[str, Any]:
    """Whole-session market quality; undefined metrics become NaN."""
    metrics: Dict[str, Any] = {'n_trades': stats.n_trades}
    for name, fn in (('efficiency', session_efficiency), ('alpha', session_alpha)):
        try:
            metrics[name] = fn(stats)
        except MetricUndefinedError:
            metrics[name] = float('nan')
    return metrics


def _compositions(k: int, total: int, min_n: int) -> Iterator[Tuple[int, ...]]:
    """Nested-loop order: the first type's count varies slowest; the last type takes the remainder."""
    if k == 1:
        if total >= min_n:
            yield (total,)
        return
    for first in range(min_n, total - min_n * (k - 1) + 1):
        for rest in _compositions(k - 1, total - first, min_n):
            yield (first,) + rest


def enumerate_ratio_sweep(spec: SweepSpec) -> List[TraderPopulationSpec]:
    """
    Every composition of the sweep, sellers mirroring buyers

    Args:
        spec: Sweep specification

    Returns:
        Population specs in nested-loop lexicographic order
    """
    spec.validate()
    return [
        TraderPopulationSpec.symmetric(list(zip(spec.trader_types, counts)))
        for counts in _compositions(len(spec.trader_types), spec.n_per_side, spec.min_n)
    ]


def plan_trials(
    populations: Sequence[TraderPopulationSpec],
    trials_per_ratio: int
) -> List[Tuple[int, TraderPopulationSpec]]:
    """Trial numbers start at 1 and run densely across compositions."""
    plan = []
    trial_number = 1
    for population in populations:
        for _ in range(trials_per_ratio):
            plan.append((trial_number, population))
            trial_number += 1
    return plan


def run_trial(
    trial_number: int,
    population: TraderPopulationSpec,
    template: SessionTemplate,
    base_seed: int
) -> TrialResult:
    """Run one seeded session, wrapping any failure with its trial id."""
    trial_id = trial_id_for(trial_number)
    try:
        cfg = template.session_config(trial_id, population, base_seed + trial_number)
        stats = market_session(cfg)
    except Exception as e:
        raise TrialFailedError(trial_id, f"{type(e).__name__}: {e}") from e
    return TrialResult(trial_id, trial_number, population, stats, trial_metrics(stats))


def summarize_trials(records: List[Dict[str, Any]]) -> pd.DataFrame:
    """Mean balance per trader type per composition, averaged over trials."""
    if not records:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    df = pd.DataFrame.from_records(records)
    summary = (
        df.groupby(['composition', 'ttype'], sort=False)
        .agg(count=('count', 'first'),
             trials=('trial_id', 'count'),
             mean_total_balance=('total_balance', 'mean'))
        .reset_index()
    )
    summary['mean_profit_per_trader'] = summary['mean_total_balance'] / summary['count']
    return summary[SUMMARY_COLUMNS]


def run_trials(
    populations: Sequence[TraderPopulationSpec],
    trials_per_ratio: int,
    template: SessionTemplate,
    output_dir: Path,
    tag: str,
    base_seed: int = config.DEFAULT_SEED,
    parallelism: int = 1
) -> Dict[str, Any]:
    """
    Run every (population, trial) pair and write balances and summary files

    Args:
        populations: Compositions to run, in order
        trials_per_ratio: Trials per composition
        template: Shared session parameters
        output_dir: Directory for balances_<tag>.csv and summary_<tag>.csv
        tag: File name tag
        base_seed: Trial seeds are base_seed + trial number
        parallelism: Worker processes

    Returns:
        Dictionary with batch results
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    balances_file = output_dir / f"balances_{tag}.csv"
    summary_file = output_dir / f"summary_{tag}.csv"
    metrics_file = output_dir / f"metrics_{tag}.csv"

    results: Dict[str, Any] = {
        'success': False,
        'trials_planned': 0,
        'trials_run': 0,
        'balances_file': balances_file,
        'summary_file': summary_file,
        'metrics_file': metrics_file,
        'failed_trial_id': None,
        'errors': []
    }

    plan = plan_trials(populations, trials_per_ratio)
    results['trials_planned'] = len(plan)

    logger.info("=" * 60)
    logger.info(f"Starting batch: {len(populations)} compositions x {trials_per_ratio} trials "
                f"= {len(plan)} sessions, parallelism {parallelism}")
    logger.info("=" * 60)

    summary_records: List[Dict[str, Any]] = []
    metrics_records: List[Dict[str, Any]] = []
    with open(balances_file, 'w', newline='', encoding='utf-8') as balances:
        if not plan:
            logger.warning("Nothing to run: no trials planned")
        try:
            outputs = Parallel(n_jobs=parallelism, return_as='generator')(
                delayed(run_trial)(trial_number, population, template, base_seed)
                for trial_number, population in plan
            ) if plan else []
            # generator yields in submission order, whatever order workers finish in
            for result in outputs:
                write_balances([result.stats.balances_row()], balances)
                label = composition_label(result.population)
                for ts in result.stats.type_stats.values():
                    summary_records.append({
                        'trial_id': result.trial_id,
                        'composition': label,
                        'ttype': ts.ttype,
                        'count': ts.count,
                        'total_balance': ts.total_balance,
                    })
                metrics_records.append({'trial_id': result.trial_id, 'composition': label, **result.metrics})
                results['trials_run'] += 1
                if results['trials_run'] % config.SWEEP_PROGRESS_EVERY == 0:
                    logger.info(f"Progress: {results['trials_run']}/{len(plan)} trials")
                    balances.flush()
        except TrialFailedError as e:
            logger.error(str(e))
            results['failed_trial_id'] = e.trial_id
            results['errors'].append(str(e))

    if not results['errors']:
        summarize_trials(summary_records).to_csv(summary_file, index=False)
        pd.DataFrame(metrics_records, columns=METRICS_COLUMNS).to_csv(metrics_file, index=False)
        results['success'] = True

    logger.info("=" * 60)
    logger.info("Batch Complete" if results['success'] else "Batch Failed")
    logger.info("-" * 60)
    logger.info(f"Trials run: {results['trials_run']}/{results['trials_planned']}")
    logger.info(f"Balances: {balances_file}")
    if results['success']:
        logger.info(f"Summary: {summary_file}")
    for error in results['errors']:
        logger.info(f"Error: {error}")
    logger.info("=" * 60)

    return results


def run_sweep(
    spec: SweepSpec,
    template: SessionTemplate,
    output_dir: Path,
    parallelism: int = 1
) -> Dict[str, Any]:
    """
    Run a trader-ratio sweep; balances go to balances_<NNN>.csv with
    NNN the equal-ratio count per type

    Returns:
        Dictionary with batch results plus the number of compositions
    """
    populations = enumerate_ratio_sweep(spec)
    results = run_trials(
        populations,
        spec.trials_per_ratio,
        template,
        output_dir,
        tag='%03d' % spec.equal_ratio_n,
        base_seed=spec.base_seed,
        parallelism=parallelism
    )
    results['compositions'] = len(populations)
    return results
