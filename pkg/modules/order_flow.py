"""
Order Flow Module

Customer-order generation. Limit prices come from supply and demand
schedules (piecewise in time, optionally shifted by an offset function of
time); issue times come from periodic or drip-feed arrival processes.

Schedules can be built in code, loaded from a YAML file, or parsed from
CLI segment strings of the form T0:T1:LO:HI[:OFFSET[:K=V;K=V]].
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type, Union

import numpy as np
import yaml

import config
from modules.exchange import Side
from modules.traders import Assignment, Trader
from utils.csv_format import round_half_up

logger = logging.getLogger(__name__)

TIMEMODES = ('periodic', 'drip-fixed', 'drip-jittered', 'drip-poisson')
STEPMODES = ('fixed', 'jittered', 'random')


class ScheduleError(ValueError):
    """Raised for malformed schedules or times no schedule segment covers."""


# ---------------------------------------------------------------------------
# Offset functions: seconds since segment start -> signed pennies
# ---------------------------------------------------------------------------

class OffsetFunction:
    """Maps seconds since a segment's start to a penny offset. Subclasses are picklable."""

    name = 'none'

    def __init__(self, params: Optional[Mapping[str, Any]] = None):
        self.params = dict(params or {})

    def __call__(self, elapsed: float) -> float:
        return 0.0


class LinearOffset(OffsetFunction):
    name = 'linear'

    def __init__(self, params=None):
        super().__init__(params)
        self.slope = float(self.params.get('slope', 1.0))

    def __call__(self, elapsed):
        return self.slope * elapsed


class SineOffset(OffsetFunction):
    name = 'sine'

    def __init__(self, params=None):
        super().__init__(params)
        self.amplitude = float(self.params.get('amplitude', 10.0))
        self.period = float(self.params.get('period', 60.0))
        if self.period <= 0:
            raise ScheduleError(f"sine offset needs a positive period, got {self.period}")

    def __call__(self, elapsed):
        return self.amplitude * math.sin(2.0 * math.pi * elapsed / self.period)


class RandomWalkOffset(OffsetFunction):
    """One step in {-step, 0, +step} per elapsed second, drawn from its own seeded stream."""

    name = 'random_walk'
    CHUNK = 1024

    def __init__(self, params=None):
        super().__init__(params)
        self.seed = int(self.params.get('seed', 0))
        self.step = float(self.params.get('step', 1.0))
        self._rng = np.random.default_rng(self.seed)
        self._walk = np.zeros(1)

    def __call__(self, elapsed):
        k = int(math.floor(elapsed))
        while k >= len(self._walk):
            # whole chunks, so values never depend on the order of queries
            extra = self._rng.integers(-1, 2, size=self.CHUNK) * self.step
            self._walk = np.concatenate([self._walk, self._walk[-1] + np.cumsum(extra)])
        return float(self._walk[k])


class TableOffset(OffsetFunction):
    """Tabulated (time, offset) pairs, linearly interpolated and held flat beyond the ends."""

    name = 'table'

    def __init__(self, params=None):
        super().__init__(params)
        self.times = np.asarray(self.params.get('times', ()), dtype=float)
        self.offsets = np.asarray(self.params.get('offsets', ()), dtype=float)
        if len(self.times) == 0 or len(self.times) != len(self.offsets):
            raise ScheduleError("table offset needs equal-length, non-empty 'times' and 'offsets'")
        if np.any(np.diff(self.times) <= 0):
            raise ScheduleError("table offset 'times' must be strictly increasing")

    def __call__(self, elapsed):
        return float(np.interp(elapsed, self.times, self.offsets))


OFFSET_FUNCTIONS: Dict[str, Type[OffsetFunction]] = {
    cls.name: cls
    for cls in (OffsetFunction, LinearOffset, SineOffset, RandomWalkOffset, TableOffset)
}


def create_offset_fn(name: Optional[str], params: Optional[Mapping[str, Any]] = None) -> OffsetFunction:
    """
    Factory function to build a named offset function

    Args:
        name: One of none, linear, sine, random_walk, table (None means none)
        params: Constructor parameters, e.g. {'slope': 0.5}

    Returns:
        Callable mapping seconds since the segment start to a penny offset
    """
    cls = OFFSET_FUNCTIONS.get((name or 'none').lower())
    if cls is None:
        raise ScheduleError(f"Unknown offset function: {name}")
    return cls(params)


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleSegment:
    """A price range [price_lo, price_hi] active over [t_start, t_end)."""
    t_start: float
    t_end: float
    price_lo: int
    price_hi: int
    offset_name: str = 'none'
    offset_params: Mapping[str, Any] = field(default_factory=dict)
    _offset_fn: OffsetFunction = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ScheduleError(f"Segment start {self.t_start} must precede end {self.t_end}")
        if not self.price_lo <= self.price_hi:
            raise ScheduleError(f"Segment range [{self.price_lo}, {self.price_hi}] is empty")
        object.__setattr__(self, '_offset_fn', create_offset_fn(self.offset_name, self.offset_params))

    def covers(self, time: float) -> bool:
        return self.t_start <= time < self.t_end


def offset_at(seg: ScheduleSegment, time: float) -> int:
    """
    Penny offset applied to the segment's range at the given time

    Args:
        seg: Active schedule segment
        time: Session time inside the segment

    Returns:
        Signed offset in pennies, rounded half-up
    """
    if not seg.covers(time):
        raise ScheduleError(f"Time {time} is outside segment [{seg.t_start}, {seg.t_end})")
    return round_half_up(seg._offset_fn(time - seg.t_start))


def effective_range(
    seg: ScheduleSegment,
    time: float,
    sys_min: Optional[int] = None,
    sys_max: Optional[int] = None
) -> Tuple[int, int]:
    """Segment range shifted by its offset at time, clamped to the price band."""
    sys_min = config.LOB_SYS_MIN_PRICE if sys_min is None else sys_min
    sys_max = config.LOB_SYS_MAX_PRICE if sys_max is None else sys_max
    offset = offset_at(seg, time)
    lo = max(seg.price_lo + offset, sys_min)
    hi = min(seg.price_hi + offset, sys_max)
    if lo > hi:
        raise ScheduleError(
            f"Range [{seg.price_lo}, {seg.price_hi}] shifted by {offset} at t={time} "
            f"falls outside [{sys_min}, {sys_max}]"
        )
    return lo, hi


def limit_price_for_trader(
    seg: ScheduleSegment,
    index: int,
    n_traders: int,
    stepmode: str,
    time: float,
    rng: np.random.Generator,
    sys_min: Optional[int] = None,
    sys_max: Optional[int] = None
) -> int:
    """
    Limit price for the index-th of n_traders on one side of the market

    Args:
        seg: Segment active at time
        index: Position of the trader on its side, 0-based
        n_traders: Number of traders on the side
        stepmode: fixed, jittered or random
        time: Issue time of the assignment
        rng: Session random generator

    Returns:
        Limit price in pennies
    """
    if n_traders < 1:
        raise ScheduleError("n_traders must be at least 1")
    lo, hi = effective_range(seg, time, sys_min, sys_max)

    if stepmode == 'random':
        return int(rng.integers(lo, hi + 1))

    if n_traders == 1:
        price = round_half_up((lo + hi) / 2.0)
        step = float(hi - lo)
    else:
        step = (hi - lo) / (n_traders - 1)
        price = lo + round_half_up(index * step)

    if stepmode == 'jittered':
        half = int(math.floor(step / 2.0))
        price += int(rng.integers(-half, half + 1))
    elif stepmode != 'fixed':
        raise ScheduleError(f"Unknown stepmode: {stepmode}")

    return max(lo, min(hi, price))


def limit_prices_for_side(
    seg: ScheduleSegment,
    n_traders: int,
    stepmode: str,
    time: float,
    rng: np.random.Generator,
    sys_min: Optional[int] = None,
    sys_max: Optional[int] = None
) -> List[int]:
    """Limit prices for every trader on one side, by trader index."""
    if n_traders < 1:
        raise ScheduleError(f"n_traders must be at least 1, got {n_traders}")
    return [
        limit_price_for_trader(seg, i, n_traders, stepmode, time, rng, sys_min, sys_max)
        for i in range(n_traders)
    ]


def _check_tiling(segments: Sequence[ScheduleSegment], label: str) -> None:
    if not segments:
        raise ScheduleError(f"{label} schedule has no segments")
    ordered = sorted(segments, key=lambda s: s.t_start)
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.t_start < prev.t_end:
            raise ScheduleError(
                f"{label} segments [{prev.t_start}, {prev.t_end}) and "
                f"[{nxt.t_start}, {nxt.t_end}) overlap"
            )


@dataclass
class OrderSchedule:
    """Supply and demand schedules plus the replenishment process."""
    demand: List[ScheduleSegment]
    supply: List[ScheduleSegment]
    interval: float = config.DEFAULT_ORDER_INTERVAL
    timemode: str = config.DEFAULT_TIMEMODE
    stepmode: str = config.DEFAULT_STEPMODE

    def __post_init__(self):
        if self.interval <= 0:
            raise ScheduleError(f"interval must be positive, got {self.interval}")
        if self.timemode not in TIMEMODES:
            raise ScheduleError(f"Unknown timemode {self.timemode!r}; expected one of {TIMEMODES}")
        if self.stepmode not in STEPMODES:
            raise ScheduleError(f"Unknown stepmode {self.stepmode!r}; expected one of {STEPMODES}")
        self.demand = sorted(self.demand, key=lambda s: s.t_start)
        self.supply = sorted(self.supply, key=lambda s: s.t_start)
        _check_tiling(self.demand, 'demand')
        _check_tiling(self.supply, 'supply')

    def segments(self, side: Side) -> List[ScheduleSegment]:
        """Buyers draw from demand segments, sellers from supply segments."""
        return self.demand if side is Side.BID else self.supply

    def segment_at(self, side: Side, time: float) -> ScheduleSegment:
        for seg in self.segments(side):
            if seg.covers(time):
                return seg
        label = 'demand' if side is Side.BID else 'supply'
        raise ScheduleError(f"Time {time} is not covered by any {label} segment")

    def to_dict(self) -> Dict[str, Any]:
        def seg_dict(seg: ScheduleSegment) -> Dict[str, Any]:
            return {
                't_start': seg.t_start, 't_end': seg.t_end,
                'lo': seg.price_lo, 'hi': seg.price_hi,
                'offset': seg.offset_name, 'params': dict(seg.offset_params),
            }
        return {
            'interval': self.interval,
            'timemode': self.timemode,
            'stepmode': self.stepmode,
            'demand': [seg_dict(s) for s in self.demand],
            'supply': [seg_dict(s) for s in self.supply],
        }


def constant_schedule(
    t_start: float,
    t_end: float,
    demand_range: Tuple[int, int] = config.DEFAULT_DEMAND_RANGE,
    supply_range: Tuple[int, int] = config.DEFAULT_SUPPLY_RANGE,
    **kwargs
) -> OrderSchedule:
    """Single-segment schedule over [t_start, t_end) with no offset."""
    return OrderSchedule(
        demand=[ScheduleSegment(t_start, t_end, *demand_range)],
        supply=[ScheduleSegment(t_start, t_end, *supply_range)],
        **kwargs
    )


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def segment_from_config(item: Union[Sequence[Any], Mapping[str, Any]]) -> ScheduleSegment:
    """
    Build a segment from a YAML list [t_start, t_end, lo, hi, offset?, params?]
    or a mapping with keys t_start, t_end, lo, hi, offset, params.
    """
    try:
        if isinstance(item, Mapping):
            return ScheduleSegment(
                float(item['t_start']), float(item['t_end']),
                int(item['lo']), int(item['hi']),
                item.get('offset') or 'none', dict(item.get('params') or {})
            )
        values = list(item)
        if not 4 <= len(values) <= 6:
            raise ScheduleError(f"Segment needs 4 to 6 fields, got {len(values)}: {item}")
        offset = values[4] if len(values) > 4 and values[4] else 'none'
        params = dict(values[5]) if len(values) > 5 and values[5] else {}
        return ScheduleSegment(float(values[0]), float(values[1]), int(values[2]), int(values[3]),
                               offset, params)
    except (KeyError, TypeError) as e:
        raise ScheduleError(f"Malformed segment {item!r}: {e}") from e


def _parse_param_value(text: str) -> Any:
    if ',' in text:
        return [yaml.safe_load(part) for part in text.split(',')]
    return yaml.safe_load(text)


def parse_segment_arg(text: str) -> ScheduleSegment:
    """
    Parse a CLI segment string, T0:T1:LO:HI[:OFFSET[:K=V;K=V]]

    Example: 0:60:50:150:sine:amplitude=20;period=30
    """
    parts = text.split(':', 5)
    if len(parts) < 4:
        raise ScheduleError(f"Segment {text!r} must look like T0:T1:LO:HI[:OFFSET[:K=V;K=V]]")
    params: Dict[str, Any] = {}
    if len(parts) == 6 and parts[5]:
        for pair in parts[5].split(';'):
            key, sep, value = pair.partition('=')
            if not sep:
                raise ScheduleError(f"Offset parameter {pair!r} in {text!r} is not K=V")
            params[key.strip()] = _parse_param_value(value.strip())
    try:
        return ScheduleSegment(
            float(parts[0]), float(parts[1]), int(parts[2]), int(parts[3]),
            parts[4] if len(parts) > 4 and parts[4] else 'none', params
        )
    except ValueError as e:
        if isinstance(e, ScheduleError):
            raise
        raise ScheduleError(f"Malformed segment {text!r}: {e}") from e


def schedule_from_config(data: Mapping[str, Any]) -> OrderSchedule:
    """Build an OrderSchedule from a parsed config mapping."""
    try:
        demand = [segment_from_config(item) for item in data['demand']]
        supply = [segment_from_config(item) for item in data['supply']]
    except KeyError as e:
        raise ScheduleError(f"Schedule config is missing {e}") from e
    return OrderSchedule(
        demand=demand,
        supply=supply,
        interval=float(data.get('interval', config.DEFAULT_ORDER_INTERVAL)),
        timemode=str(data.get('timemode', config.DEFAULT_TIMEMODE)),
        stepmode=str(data.get('stepmode', config.DEFAULT_STEPMODE)),
    )


def load_schedule(path: Union[str, Path]) -> OrderSchedule:
    """
    Load a schedule from a YAML file. The schedule may sit at the top level
    or under a 'schedule' key of a full experiment config.
    """
    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}
    if 'schedule' in data:
        data = data['schedule']
    logger.info(f"Loaded order schedule from {path}")
    return schedule_from_config(data)


# ---------------------------------------------------------------------------
# Customer order generation
# ---------------------------------------------------------------------------

@dataclass
class _SideFlow:
    side: Side
    tids: List[str]
    pending: List[Tuple[float, int]] = field(default_factory=list)  # (issue_time, trader index), time-ordered
    cycle: int = 0
    last_arrival: float = 0.0


class OrderFlow:
    """
    Issues customer orders to traders as the session clock advances.

    Every timemode starts with a full allocation at the first call. After
    that, periodic mode reissues to everyone at each interval boundary; the
    drip modes issue to one trader at a time, n per interval on average.
    """

    def __init__(
        self,
        schedule: OrderSchedule,
        sys_min: Optional[int] = None,
        sys_max: Optional[int] = None
    ):
        self.schedule = schedule
        self.sys_min = config.LOB_SYS_MIN_PRICE if sys_min is None else sys_min
        self.sys_max = config.LOB_SYS_MAX_PRICE if sys_max is None else sys_max
        self.origin: Optional[float] = None
        self._next_id = 1
        self._sides: Dict[Side, _SideFlow] = {}

    def _new_assignment(self, side: Side, index: int, n: int, issue_time: float,
                        rng: np.random.Generator) -> Assignment:
        seg = self.schedule.segment_at(side, issue_time)
        limit = limit_price_for_trader(seg, index, n, self.schedule.stepmode, issue_time, rng,
                                       self.sys_min, self.sys_max)
        assignment = Assignment(self._next_id, side, limit, issue_time)
        self._next_id += 1
        return assignment

    def _refill(self, flow: _SideFlow, rng: np.random.Generator) -> None:
        """Schedule the next replenishment cycle for one side."""
        n = len(flow.tids)
        interval = self.schedule.interval
        slot = interval / n
        cycle_start = self.origin + flow.cycle * interval
        timemode = self.schedule.timemode

        if timemode == 'periodic':
            times = [cycle_start + interval] * n
            order = list(range(n))
        elif timemode == 'drip-fixed':
            times = [cycle_start + (i + 1) * slot for i in range(n)]
            order = [int(i) for i in rng.permutation(n)]
        elif timemode == 'drip-jittered':
            times = [cycle_start + i * slot + float(rng.uniform(0.0, slot)) for i in range(n)]
            order = [int(i) for i in rng.permutation(n)]
        else:  # drip-poisson
            gaps = rng.exponential(slot, size=n)
            times = list(flow.last_arrival + np.cumsum(gaps))
            order = [int(i) for i in rng.permutation(n)]
            flow.last_arrival = float(times[-1])

        flow.pending = list(zip((float(t) for t in times), order))
        flow.cycle += 1

    def _issue(
        self,
        flow: _SideFlow,
        index: int,
        issue_time: float,
        traders: Mapping[str, Trader],
        rng: np.random.Generator,
        issued: List[Tuple[str, Assignment]],
        cancellations: List[str]
    ) -> None:
        tid = flow.tids[index]
        assignment = self._new_assignment(flow.side, index, len(flow.tids), issue_time, rng)
        if traders[tid].assign_order(assignment):
            cancellations.append(tid)
        issued.append((tid, assignment))
        logger.debug(f"Customer order t={issue_time:.3f} {tid} {flow.side.value}@{assignment.limit}")

    def customer_orders(
        self,
        time: float,
        traders: Mapping[str, Trader],
        rng: np.random.Generator
    ) -> Tuple[List[Tuple[str, Assignment]], List[str]]:
        """
        Issue every customer order that is due by `time`

        Args:
            time: Current session time
            traders: Trader population keyed by tid (buyers hold demand, sellers supply)
            rng: Session random generator (demand side is drawn before supply side)

        Returns:
            Tuple of (issued [(tid, Assignment)], tids whose live exchange order must be cancelled)
        """
        issued: List[Tuple[str, Assignment]] = []
        cancellations: List[str] = []

        if self.origin is None:
            self.origin = time
            for side in (Side.BID, Side.ASK):
                tids = [tid for tid, trader in traders.items() if trader.side is side]
                self._sides[side] = _SideFlow(side, tids, last_arrival=time)
            # full allocation at the open
            for flow in self._sides.values():
                for index in range(len(flow.tids)):
                    self._issue(flow, index, time, traders, rng, issued, cancellations)
                if flow.tids:
                    self._refill(flow, rng)
            return issued, cancellations

        for flow in self._sides.values():
            if not flow.tids:
                continue
            while flow.pending[0][0] <= time:
                issue_time, index = flow.pending.pop(0)
                self._issue(flow, index, issue_time, traders, rng, issued, cancellations)
                if not flow.pending:
                    self._refill(flow, rng)

        return issued, cancellations
