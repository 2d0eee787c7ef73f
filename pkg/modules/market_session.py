"""
Market Session Module

Runs one market session: populate the traders, run the main loop against
the simulated clock, then collect statistics.

Each step of the loop:
1. Issue any customer orders that are due (cancelling replaced exchange orders)
2. Pick one trader uniformly at random and ask it for a quote
3. If it quotes: process the order, bookkeep both parties of any trade,
   then let every trader respond to the event
4. Advance the clock by one timestep
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
from modules.csv_exports import write_session_dumps
from modules.exchange import Exchange, MarketEvent, Side, TapeEntry
from modules.order_flow import OrderFlow, OrderSchedule
from modules.traders import Assignment, BlotterEntry, Trader, create_trader
from utils.csv_format import fmt_money, fmt_optional_price, fmt_time

logger = logging.getLogger(__name__)


class PopulationError(ValueError):
    """Raised for a trader population that cannot make a market."""


class SessionConfigError(ValueError):
    """Raised for an invalid session configuration."""


def parse_population_arg(text: str) -> List[Tuple[str, int]]:
    """
    Parse TYPE:COUNT[,TYPE:COUNT...], e.g. 'GVWY:4,ZIC:4'

    Returns:
        List of (ttype, count) pairs
    """
    spec: List[Tuple[str, int]] = []
    for part in text.split(','):
        part = part.strip()
        if not part:
            continue
        ttype, sep, count = part.partition(':')
        if not sep:
            raise PopulationError(f"Trader spec {part!r} must look like TYPE:COUNT")
        try:
            spec.append((ttype.strip().upper(), int(count)))
        except ValueError as e:
            raise PopulationError(f"Trader count in {part!r} is not an integer") from e
    return spec


@dataclass(frozen=True)
class TraderPopulationSpec:
    """How many traders of each type sit on each side of the market."""
    buyers: Tuple[Tuple[str, int], ...]
    sellers: Tuple[Tuple[str, int], ...]

    @classmethod
    def symmetric(cls, spec: Sequence[Tuple[str, int]]) -> 'TraderPopulationSpec':
        """Sellers mirror buyers."""
        spec = tuple((ttype, int(count)) for ttype, count in spec)
        return cls(buyers=spec, sellers=spec)

    @property
    def n_buyers(self) -> int:
        return sum(count for _, count in self.buyers)

    @property
    def n_sellers(self) -> int:
        return sum(count for _, count in self.sellers)

    def validate(self) -> None:
        for ttype, count in self.buyers + self.sellers:
            if count < 0:
                raise PopulationError(f"Negative count {count} for {ttype}")
        if self.n_buyers < 1 or self.n_sellers < 1:
            raise PopulationError(
                f"A market needs at least one buyer and one seller "
                f"(got {self.n_buyers} buyers, {self.n_sellers} sellers)"
            )


@dataclass(frozen=True)
class DumpFlags:
    """Optional per-session files."""
    tape: bool = False
    blotters: bool = False
    lob_frames: bool = False
    prices: bool = False

    @property
    def any(self) -> bool:
        return self.tape or self.blotters or self.lob_frames or self.prices


@dataclass
class SessionConfig:
    """Everything one market session needs."""
    session_id: str
    start_time: float
    end_time: float
    population: TraderPopulationSpec
    schedule: OrderSchedule
    seed: int = config.DEFAULT_SEED
    timestep: Optional[float] = None  # defaults to 1 / number of traders
    sys_min: int = config.LOB_SYS_MIN_PRICE
    sys_max: int = config.LOB_SYS_MAX_PRICE
    dump: DumpFlags = field(default_factory=DumpFlags)
    output_dir: Optional[Path] = None

    def validate(self) -> None:
        if not self.start_time < self.end_time:
            raise SessionConfigError(f"start_time {self.start_time} must precede end_time {self.end_time}")
        if self.timestep is not None and self.timestep <= 0:
            raise SessionConfigError(f"timestep must be positive, got {self.timestep}")
        if self.sys_min > self.sys_max:
            raise SessionConfigError(f"Empty price band [{self.sys_min}, {self.sys_max}]")
        if self.dump.any and self.output_dir is None:
            raise SessionConfigError("Dump files requested without an output directory")
        self.population.validate()

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time


@dataclass(frozen=True)
class TradeRecord:
    """A trade with both counterparties' limits, captured before bookkeeping."""
    time: float
    price: int
    buyer: str
    seller: str
    buyer_limit: int
    seller_limit: int

    @property
    def surplus(self) -> int:
        return self.buyer_limit - self.seller_limit


@dataclass(frozen=True)
class TypeStats:
    """Balance summary for one trader type."""
    ttype: str
    total_balance: int
    count: int

    @property
    def mean_balance(self) -> float:
        return self.total_balance / self.count if self.count else 0.0


@dataclass
class SessionStats:
    """Results of one market session."""
    session_id: str
    end_time: float
    type_stats: Dict[str, TypeStats]
    best_bid: Optional[int]
    best_ask: Optional[int]
    tape: Tuple[TapeEntry, ...]
    trade_records: List[TradeRecord] = field(default_factory=list)
    issued: List[Assignment] = field(default_factory=list)
    balances: Dict[str, int] = field(default_factory=dict)
    ttypes: Dict[str, str] = field(default_factory=dict)
    blotters: Dict[str, List[BlotterEntry]] = field(default_factory=dict)
    lob_frames: List[Tuple[float, str]] = field(default_factory=list)

    @property
    def n_trades(self) -> int:
        return len(self.tape)

    def balances_row(self) -> str:
        """
        One comma-separated line:
        <session_id>,<time>,{<ttype>,<total>,<count>,<mean>}*,<best_bid>,<best_ask>
        """
        fields = [self.session_id, fmt_time(self.end_time)]
        for ttype in sorted(self.type_stats):
            ts = self.type_stats[ttype]
            fields.extend([ttype, str(ts.total_balance), str(ts.count), fmt_money(ts.mean_balance)])
        fields.append(fmt_optional_price(self.best_bid))
        fields.append(fmt_optional_price(self.best_ask))
        return ','.join(fields)


def populate_market(
    spec: TraderPopulationSpec,
    rng: np.random.Generator,
    sys_min: Optional[int] = None,
    sys_max: Optional[int] = None
) -> Dict[str, Trader]:
    """
    Create the trader population

    Args:
        spec: Buyer and seller (ttype, count) lists
        rng: Session random generator (ZIP traders draw their parameters from it)

    Returns:
        Traders keyed by tid: buyers B00, B01, ... then sellers S00, S01, ...
    """
    spec.validate()
    traders: Dict[str, Trader] = {}
    for prefix, side, side_spec in (('B', Side.BID, spec.buyers), ('S', Side.ASK, spec.sellers)):
        n = 0
        for ttype, count in side_spec:
            for _ in range(count):
                tid = f"{prefix}{n:02d}"
                try:
                    traders[tid] = create_trader(ttype, tid, side, rng, sys_min, sys_max)
                except ValueError as e:
                    raise PopulationError(str(e)) from e
                n += 1
    return traders


def summarize_types(traders: Dict[str, Trader]) -> Dict[str, TypeStats]:
    """Total balance and head-count per trader type."""
    totals: Dict[str, List[int]] = {}
    for trader in traders.values():
        totals.setdefault(trader.ttype, []).append(trader.balance)
    return {
        ttype: TypeStats(ttype, sum(balances), len(balances))
        for ttype, balances in totals.items()
    }


def market_session(cfg: SessionConfig) -> SessionStats:
    """
    Run one market session

    Args:
        cfg: Session configuration; the seed fixes every random draw

    Returns:
        SessionStats for the session
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    traders = populate_market(cfg.population, rng, cfg.sys_min, cfg.sys_max)
    tids = list(traders)
    exchange = Exchange(tids, cfg.sys_min, cfg.sys_max)
    flow = OrderFlow(cfg.schedule, cfg.sys_min, cfg.sys_max)

    timestep = cfg.timestep or 1.0 / len(tids)
    duration = cfg.duration
    issued: List[Assignment] = []
    trade_records: List[TradeRecord] = []
    lob_frames: List[Tuple[float, str]] = []
    last_frame: Optional[str] = None

    logger.info(f"Session {cfg.session_id} starting: {cfg.population.n_buyers} buyers, "
                f"{cfg.population.n_sellers} sellers, seed {cfg.seed}")

    step = 0
    time = cfg.start_time
    while time < cfg.end_time:
        time_left = (cfg.end_time - time) / duration

        new_orders, kills = flow.customer_orders(time, traders, rng)
        issued.extend(assignment for _, assignment in new_orders)
        for tid in kills:
            exchange.cancel_order(time, tid)

        trader = traders[tids[int(rng.integers(len(tids)))]]
        order = trader.getorder(time, time_left, exchange.publish_lob(time), rng)

        if order is not None:
            trader.n_quotes = 1
            trade = exchange.submit_order(time, order)
            if trade is not None:
                buyer, seller = traders[trade.buyer], traders[trade.seller]
                trade_records.append(TradeRecord(
                    time=time,
                    price=trade.price,
                    buyer=buyer.tid,
                    seller=seller.tid,
                    buyer_limit=buyer.assignment.limit,
                    seller_limit=seller.assignment.limit
                ))
                traders[trade.party_standing].bookkeep(trade, time)
                traders[trade.party_crossing].bookkeep(trade, time)

            lob = exchange.publish_lob(time)
            event = MarketEvent(time, order.side, order.price, trade)
            for t in traders.values():
                t.respond(time, lob, event, rng)

            if cfg.dump.lob_frames:
                frame = lob.frame_row()
                if frame != last_frame:
                    lob_frames.append((time, frame))
                    last_frame = frame

        step += 1
        time = cfg.start_time + step * timestep

    final_lob = exchange.publish_lob(cfg.end_time)
    stats = SessionStats(
        session_id=cfg.session_id,
        end_time=cfg.end_time,
        type_stats=summarize_types(traders),
        best_bid=final_lob.bids.best,
        best_ask=final_lob.asks.best,
        tape=exchange.tape_view(),
        trade_records=trade_records,
        issued=issued,
        balances={tid: t.balance for tid, t in traders.items()},
        ttypes={tid: t.ttype for tid, t in traders.items()},
        blotters={tid: list(t.blotter) for tid, t in traders.items()},
        lob_frames=lob_frames
    )

    logger.info(f"Session {cfg.session_id} finished: {stats.n_trades} trades, "
                f"{len(issued)} customer orders")

    if cfg.dump.any:
        write_session_dumps(stats, cfg.output_dir, cfg.dump)

    return stats
