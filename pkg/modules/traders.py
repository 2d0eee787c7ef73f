"""
Traders Module

Robot sales-traders. Each trader works at most one customer order (an
Assignment) and tries to execute it at a price better than the customer's
limit: never above it for a buy, never below it for a sell.

Strategies: GVWY, ZIC, SHVR, SNPR and ZIP.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Type

import numpy as np

import config
from modules.exchange import LimitOrder, MarketEvent, PublishedLOB, Side, Trade
from utils.csv_format import fmt_time, round_half_up

logger = logging.getLogger(__name__)


class AssignmentError(ValueError):
    """Raised for a customer order a trader cannot accept."""


class BookkeepingError(ValueError):
    """Raised when a trade cannot be booked against a trader."""


@dataclass(frozen=True)
class Assignment:
    """A customer limit order handed to a trader. Buys are Side.BID, sells Side.ASK."""
    assignment_id: int
    side: Side
    limit: int
    issue_time: float
    qty: int = 1


@dataclass(frozen=True)
class BlotterEntry:
    """A trader's private record of one of its trades."""
    time: float
    price: int
    role: str  # 'standing' or 'crossing'
    assignment_id: int
    profit: int
    qty: int = 1

    def to_csv_row(self, tid: str) -> str:
        return f"{tid},{fmt_time(self.time)},{self.price},{self.assignment_id},{self.profit}"


class Trader(ABC):
    """The parent class for all robot traders."""

    ttype = 'BASE'

    def __init__(
        self,
        tid: str,
        side: Side,
        sys_min: Optional[int] = None,
        sys_max: Optional[int] = None
    ):
        """
        Initialize a trader with the attributes common to every strategy

        Args:
            tid: Trader id, e.g. B00 or S07
            side: Side.BID for buyers, Side.ASK for sellers
            sys_min: Lowest allowable price
            sys_max: Highest allowable price
        """
        self.tid = tid
        self.side = side
        self.sys_min = config.LOB_SYS_MIN_PRICE if sys_min is None else sys_min
        self.sys_max = config.LOB_SYS_MAX_PRICE if sys_max is None else sys_max
        self.balance = 0
        self.blotter: List[BlotterEntry] = []
        self.assignment: Optional[Assignment] = None
        self.n_quotes = 0  # live orders on the exchange (0 or 1)

    def __repr__(self) -> str:
        return (f"[TID {self.tid} type {self.ttype} balance {self.balance} "
                f"assignment {self.assignment} trades {len(self.blotter)}]")

    def assign_order(self, assignment: Assignment) -> bool:
        """
        Take on a new customer order, replacing any previous one.

        Returns:
            True if the trader's live exchange order must be cancelled
        """
        if assignment.qty != 1:
            raise AssignmentError(f"Assignment quantity must be 1, got {assignment.qty}")
        if not self.sys_min <= assignment.limit <= self.sys_max:
            raise AssignmentError(
                f"Limit {assignment.limit} outside [{self.sys_min}, {self.sys_max}] for {self.tid}"
            )
        cancel = self.n_quotes > 0
        self.assignment = assignment
        self.n_quotes = 0 if cancel else self.n_quotes
        return cancel

    def getorder(
        self,
        time: float,
        time_left: float,
        lob: PublishedLOB,
        rng: np.random.Generator
    ) -> Optional[LimitOrder]:
        """
        Create this trader's next quote, or None if it is not quoting.

        Args:
            time: Current session time
            time_left: Fraction of the session remaining, in [0, 1]
            lob: Published LOB
            rng: Session random generator

        Returns:
            A LimitOrder on the assignment's side, or None
        """
        if self.assignment is None:
            return None
        price = self.quote_price(time_left, lob, rng)
        if price is None:
            return None

        # limit safety, then the price band
        limit = self.assignment.limit
        price = min(price, limit) if self.assignment.side is Side.BID else max(price, limit)
        price = max(self.sys_min, min(self.sys_max, int(price)))

        return LimitOrder(self.tid, self.assignment.side, price, 1, time)

    @abstractmethod
    def quote_price(
        self,
        time_left: float,
        lob: PublishedLOB,
        rng: np.random.Generator
    ) -> Optional[int]:
        """Strategy-specific quote price for the current assignment (None to stay silent)."""

    def respond(
        self,
        time: float,
        lob: PublishedLOB,
        event: MarketEvent,
        rng: np.random.Generator
    ) -> None:
        """React to the most recent market event. No-op unless a strategy learns."""
        return None

    def bookkeep(self, trade: Trade, time: float) -> int:
        """
        Book a trade against the current assignment and clear it.

        Returns:
            Profit on the trade in pennies
        """
        if not trade.involves(self.tid):
            raise BookkeepingError(f"Trader {self.tid} is not a party to trade {trade}")
        if self.assignment is None:
            raise BookkeepingError(f"Trader {self.tid} traded without an assignment")

        limit = self.assignment.limit
        if self.assignment.side is Side.BID:
            profit = limit - trade.price
        else:
            profit = trade.price - limit
        if profit < 0:
            raise BookkeepingError(
                f"Negative profit {profit} for {self.tid}: limit {limit}, trade price {trade.price}"
            )

        role = 'standing' if trade.party_standing == self.tid else 'crossing'
        self.blotter.append(BlotterEntry(
            time=time,
            price=trade.price,
            role=role,
            assignment_id=self.assignment.assignment_id,
            profit=profit
        ))
        self.balance += profit
        self.assignment = None
        self.n_quotes = 0
        return profit

    def blotter_rows(self) -> List[str]:
        """Blotter as CSV rows: <tid>,<time>,<price>,<assignment_id>,<profit>."""
        return [entry.to_csv_row(self.tid) for entry in self.blotter]


class TraderGiveaway(Trader):
    """GVWY: quotes its limit price; makes no use of LOB data."""

    ttype = 'GVWY'

    def quote_price(self, time_left, lob, rng):
        return self.assignment.limit


class TraderZIC(Trader):
    """ZIC: zero-intelligence trader, random but budget-constrained."""

    ttype = 'ZIC'

    def quote_price(self, time_left, lob, rng):
        limit = self.assignment.limit
        if self.assignment.side is Side.BID:
            lo, hi = lob.bids.worst, limit
        else:
            lo, hi = limit, lob.asks.worst
        # a one-point support just quotes that point
        return int(rng.integers(lo, hi + 1))


def shave_price(side: Side, limit: int, lob: PublishedLOB, shave: int) -> int:
    """Improve on the own side's best price by `shave` pennies, or stub-quote an empty side."""
    if side is Side.BID:
        if lob.bids.best is None:
            return lob.bids.worst
        return min(lob.bids.best + shave, limit)
    if lob.asks.best is None:
        return lob.asks.worst
    return max(lob.asks.best - shave, limit)


class TraderShaver(Trader):
    """SHVR: one penny better than the best price on its own side, limit permitting."""

    ttype = 'SHVR'

    def quote_price(self, time_left, lob, rng):
        return shave_price(self.assignment.side, self.assignment.limit, lob, 1)


class TraderSniper(Trader):
    """
    SNPR: a shaver that lurks until the end of the session is near, then
    shaves more and more off the best price as time runs out.
    """

    ttype = 'SNPR'
    LURK_THRESHOLD = 0.25
    SHAVE_GROWTH = 3

    @classmethod
    def shave_amount(cls, time_left: float) -> int:
        """1 penny at the threshold, growing to 1 + SHAVE_GROWTH at the close."""
        urgency = (cls.LURK_THRESHOLD - time_left) / cls.LURK_THRESHOLD
        return 1 + int(math.floor(cls.SHAVE_GROWTH * max(0.0, urgency)))

    def quote_price(self, time_left, lob, rng):
        if time_left > self.LURK_THRESHOLD:
            return None
        return shave_price(self.assignment.side, self.assignment.limit, lob, self.shave_amount(time_left))


class TraderZIP(Trader):
    """
    ZIP: adapts a profit margin with a Widrow-Hoff rule plus momentum.

    Buyer margins are <= 0 and seller margins >= 0, so quotes never
    violate the customer's limit.
    """

    ttype = 'ZIP'

    # target perturbations: relative factor and absolute pennies
    UP_RELATIVE = (1.0, 1.05)
    UP_ABSOLUTE = (0.0, 5.0)
    DOWN_RELATIVE = (0.95, 1.0)
    DOWN_ABSOLUTE = (-5.0, 0.0)

    def __init__(
        self,
        tid: str,
        side: Side,
        rng: np.random.Generator,
        sys_min: Optional[int] = None,
        sys_max: Optional[int] = None
    ):
        super().__init__(tid, side, sys_min, sys_max)
        margin = rng.uniform(0.05, 0.35)
        self.margin = -margin if side is Side.BID else margin
        self.beta = rng.uniform(0.1, 0.5)  # learning rate
        self.momentum = rng.uniform(0.0, 0.1)
        self.prev_change = 0.0
        self.last_event: Optional[MarketEvent] = None

    def current_price(self) -> float:
        """Unrounded price implied by the margin for the current assignment."""
        return self.assignment.limit * (1.0 + self.margin)

    def quote_price(self, time_left, lob, rng):
        return round_half_up(self.current_price())

    def _target_up(self, price: float, rng: np.random.Generator) -> float:
        return rng.uniform(*self.UP_RELATIVE) * price + rng.uniform(*self.UP_ABSOLUTE)

    def _target_down(self, price: float, rng: np.random.Generator) -> float:
        return rng.uniform(*self.DOWN_RELATIVE) * price + rng.uniform(*self.DOWN_ABSOLUTE)

    def _profit_alter(self, target: float) -> None:
        """Move the quote price toward target and derive the new margin."""
        price = self.current_price()
        delta = self.beta * (target - price)
        change = self.momentum * self.prev_change + (1.0 - self.momentum) * delta
        self.prev_change = change
        margin = (price + change) / self.assignment.limit - 1.0
        self.margin = min(margin, 0.0) if self.side is Side.BID else max(margin, 0.0)

    def respond(self, time, lob, event, rng):
        """
        Classic ZIP rules, mirrored between sides: sellers react to trades and
        untraded asks, buyers to trades and untraded bids.
        """
        self.last_event = event
        if self.assignment is None:
            return None

        price = self.current_price()
        q = event.price
        if event.traded:
            q = event.trade.price

        if self.side is Side.ASK:
            if event.traded and price <= q:
                # could have sold for more
                self._profit_alter(self._target_up(q, rng))
            elif event.traded or event.side is Side.ASK:
                # missed a trade, or undercut by a competing ask
                if price >= q:
                    self._profit_alter(self._target_down(q, rng))
        else:
            if event.traded and price >= q:
                # could have bought for less
                self._profit_alter(self._target_down(q, rng))
            elif event.traded or event.side is Side.BID:
                # missed a trade, or outbid by a competing bid
                if price <= q:
                    self._profit_alter(self._target_up(q, rng))
        return None


TRADER_CLASSES: Dict[str, Type[Trader]] = {
    cls.ttype: cls
    for cls in (TraderGiveaway, TraderZIC, TraderShaver, TraderSniper, TraderZIP)
}


def create_trader(
    ttype: str,
    tid: str,
    side: Side,
    rng: np.random.Generator,
    sys_min: Optional[int] = None,
    sys_max: Optional[int] = None
) -> Trader:
    """
    Factory function to create a trader of the named type

    Args:
        ttype: Strategy code (GVWY, ZIC, SHVR, SNPR, ZIP)
        tid: Trader id
        side: Side.BID for a buyer, Side.ASK for a seller
        rng: Session random generator (consumed by ZIP initialization)

    Returns:
        Trader instance
    """
    cls = TRADER_CLASSES.get(ttype.upper())
    if cls is None:
        raise ValueError(f"Unknown trader type: {ttype}")
    if cls is TraderZIP:
        return TraderZIP(tid, side, rng, sys_min, sys_max)
    return cls(tid, side, sys_min, sys_max)
