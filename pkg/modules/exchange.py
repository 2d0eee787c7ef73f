"""
Exchange Module

The matching engine and limit order book (LOB) for a single tradable security.

The exchange keeps full trader identity for every resting order so that
counterparties can be told about their trades, but the LOB it publishes is
anonymized: price levels and quantities only. Each trader has at most one
order on the book; a new order from a trader replaces the previous one.
"""

import logging
import numbers
from bisect import bisect_left, insort
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import Deque, Dict, Iterable, List, Optional, Tuple

import config
from utils.csv_format import fmt_time

logger = logging.getLogger(__name__)


class Side(str, Enum):
    """Side of the book an order rests on."""
    BID = 'bid'
    ASK = 'ask'

    @property
    def opposite(self) -> 'Side':
        return Side.ASK if self is Side.BID else Side.BID


class OrderRejected(ValueError):
    """Raised when the exchange refuses an order; the book is left untouched."""


class UnknownTraderError(OrderRejected):
    """Raised for orders or cancellations from a trader the exchange does not know."""


@dataclass(frozen=True)
class LimitOrder:
    """One trader's quote: [TID, side, price, quantity, time]."""
    tid: str
    side: Side
    price: int
    qty: int = 1
    time: float = 0.0


@dataclass(frozen=True)
class Trade:
    """An executed transaction, always at the standing order's price."""
    time: float
    price: int
    party_standing: str
    party_crossing: str
    crossing_side: Side
    qty: int = 1

    @property
    def buyer(self) -> str:
        return self.party_crossing if self.crossing_side is Side.BID else self.party_standing

    @property
    def seller(self) -> str:
        return self.party_standing if self.crossing_side is Side.BID else self.party_crossing

    def involves(self, tid: str) -> bool:
        return tid in (self.party_standing, self.party_crossing)


@dataclass(frozen=True)
class TapeEntry:
    """Time-series record of one transaction."""
    time: float
    price: int
    qty: int = 1
    kind: str = 'trade'

    def to_csv_row(self) -> str:
        return f"TRD,{fmt_time(self.time)},{self.price}"


@dataclass(frozen=True)
class PublishedHalf:
    """Anonymized view of one side of the book. Ladder is best price first."""
    best: Optional[int]
    worst: int
    n_orders: int
    ladder: Tuple[Tuple[int, int], ...] = ()
    session_extreme: Optional[int] = None


@dataclass(frozen=True)
class PublishedLOB:
    """What traders get to see: time, bid side, ask side and the last trade."""
    time: float
    bids: PublishedHalf
    asks: PublishedHalf
    last_trade: Optional[Tuple[float, int]] = None

    @property
    def spread(self) -> Optional[int]:
        if self.bids.best is None or self.asks.best is None:
            return None
        return self.asks.best - self.bids.best

    def frame_row(self) -> str:
        """Linearize the depth of both sides: Bid:,<levels>,<p>,<q>,...,Ask:,<levels>,..."""
        parts: List[str] = []
        for label, half in (('Bid:', self.bids), ('Ask:', self.asks)):
            parts.append(label)
            parts.append(str(len(half.ladder)))
            for price, qty in half.ladder:
                parts.append(str(price))
                parts.append(str(qty))
        return ','.join(parts)


@dataclass(frozen=True)
class MarketEvent:
    """The order just processed by the exchange and the trade it caused, if any."""
    time: float
    side: Side
    price: int
    trade: Optional[Trade] = None

    @property
    def traded(self) -> bool:
        return self.trade is not None


class OrderbookHalf:
    """
    One side of the LOB.

    Orders are grouped into price levels; within a level the oldest order
    is first, so execution follows price-time priority.
    """

    def __init__(self, side: Side, worst_price: int):
        """
        Create one side of the LOB

        Args:
            side: Side.BID or Side.ASK
            worst_price: lowest allowable bid, or highest allowable ask
        """
        self.side = side
        self.worst_price = worst_price
        self.orders: Dict[str, LimitOrder] = {}
        self.session_extreme: Optional[int] = None
        self._levels: Dict[int, Deque[LimitOrder]] = {}
        self._prices: List[int] = []  # ascending
        self._published: Optional[PublishedHalf] = None

    def __len__(self) -> int:
        return len(self.orders)

    def __contains__(self, tid: str) -> bool:
        return tid in self.orders

    @property
    def best_price(self) -> Optional[int]:
        if not self._prices:
            return None
        return self._prices[-1] if self.side is Side.BID else self._prices[0]

    def book_add(self, order: LimitOrder) -> None:
        """Rest an order at the back of its price level. Caller removes any earlier order first."""
        level = self._levels.get(order.price)
        if level is None:
            level = deque()
            self._levels[order.price] = level
            insort(self._prices, order.price)
        level.append(order)
        self.orders[order.tid] = order

        if self.side is Side.ASK and (self.session_extreme is None or order.price > self.session_extreme):
            self.session_extreme = order.price
        self._published = None

    def book_del(self, tid: str) -> Optional[LimitOrder]:
        """Remove the order owned by tid, if any, and return it."""
        order = self.orders.pop(tid, None)
        if order is None:
            return None
        level = self._levels[order.price]
        level.remove(order)
        if not level:
            self._drop_level(order.price)
        self._published = None
        return order

    def delete_best(self) -> LimitOrder:
        """Remove and return the order with execution priority (best price, oldest)."""
        price = self.best_price
        if price is None:
            raise LookupError(f"{self.side.value} side of the book is empty")
        level = self._levels[price]
        order = level.popleft()
        del self.orders[order.tid]
        if not level:
            self._drop_level(price)
        self._published = None
        return order

    def _drop_level(self, price: int) -> None:
        del self._levels[price]
        del self._prices[bisect_left(self._prices, price)]

    def publish(self) -> PublishedHalf:
        """Anonymized snapshot; rebuilt only after the book has changed."""
        if self._published is None:
            prices = reversed(self._prices) if self.side is Side.BID else iter(self._prices)
            ladder = tuple((price, sum(o.qty for o in self._levels[price])) for price in prices)
            self._published = PublishedHalf(
                best=self.best_price,
                worst=self.worst_price,
                n_orders=len(self.orders),
                ladder=ladder,
                session_extreme=self.session_extreme if self.side is Side.ASK else None
            )
        return self._published


class Exchange:
    """Matching engine and LOB for one security, with a trade tape."""

    def __init__(
        self,
        traders: Iterable[str] = (),
        sys_min: Optional[int] = None,
        sys_max: Optional[int] = None
    ):
        """
        Initialize the exchange

        Args:
            traders: Trader ids allowed to quote
            sys_min: Lowest allowable price (defaults to config.LOB_SYS_MIN_PRICE)
            sys_max: Highest allowable price (defaults to config.LOB_SYS_MAX_PRICE)
        """
        self.sys_min = config.LOB_SYS_MIN_PRICE if sys_min is None else int(sys_min)
        self.sys_max = config.LOB_SYS_MAX_PRICE if sys_max is None else int(sys_max)
        if self.sys_min > self.sys_max:
            raise ValueError(f"Empty price band [{self.sys_min}, {self.sys_max}]")

        self.bids = OrderbookHalf(Side.BID, self.sys_min)
        self.asks = OrderbookHalf(Side.ASK, self.sys_max)
        self.tape: List[TapeEntry] = []
        self.quote_id = 0  # count of orders accepted; never published
        self.known_traders = set(traders)
        self._last_trade: Optional[Tuple[float, int]] = None

    def register_trader(self, tid: str) -> None:
        """Allow tid to submit orders."""
        self.known_traders.add(tid)

    def _half(self, side: Side) -> OrderbookHalf:
        return self.bids if side is Side.BID else self.asks

    def _check_trader(self, tid: str) -> None:
        if tid not in self.known_traders:
            raise UnknownTraderError(f"Unknown trader id: {tid}")

    def _validate(self, time: float, order: LimitOrder) -> None:
        self._check_trader(order.tid)
        if order.qty != 1:
            raise OrderRejected(f"Order quantity must be 1, got {order.qty} from {order.tid}")
        if not isinstance(order.price, numbers.Integral):
            raise OrderRejected(f"Order price must be integer pennies, got {order.price!r}")
        if not self.sys_min <= order.price <= self.sys_max:
            raise OrderRejected(
                f"Price {order.price} from {order.tid} outside [{self.sys_min}, {self.sys_max}]"
            )
        if self.tape and time < self.tape[-1].time:
            raise OrderRejected(f"Order time {time} is earlier than the last trade")

    def submit_order(self, time: float, order: LimitOrder) -> Optional[Trade]:
        """
        Process an order: replace the trader's previous order, then match or rest.

        An order that crosses the opposite best trades once, at the standing
        order's price, and never rests (quantity is always 1).

        Args:
            time: Current session time (stamps the order and any trade)
            order: The incoming order

        Returns:
            The Trade if the order crossed the spread, otherwise None
        """
        self._validate(time, order)
        if order.time != time:
            order = replace(order, time=time)
        if not isinstance(order.price, int):
            order = replace(order, price=int(order.price))
        self.quote_id += 1

        # replacement happens before matching, so a trader can never trade with itself
        self.bids.book_del(order.tid)
        self.asks.book_del(order.tid)

        own = self._half(order.side)
        opposite = self._half(order.side.opposite)
        best = opposite.best_price

        if best is None:
            crosses = False
        elif order.side is Side.BID:
            crosses = order.price >= best
        else:
            crosses = order.price <= best

        if not crosses:
            own.book_add(order)
            return None

        standing = opposite.delete_best()
        trade = Trade(
            time=time,
            price=standing.price,
            party_standing=standing.tid,
            party_crossing=order.tid,
            crossing_side=order.side
        )
        self.tape.append(TapeEntry(time=time, price=trade.price, qty=trade.qty))
        self._last_trade = (time, trade.price)
        logger.debug(f"TRADE t={time:.3f} price={trade.price} "
                     f"standing={standing.tid} crossing={order.tid}")
        return trade

    def cancel_order(self, time: float, tid: str) -> bool:
        """
        Withdraw tid's order from the book. Cancellations are not taped.

        Returns:
            True if an order was removed
        """
        self._check_trader(tid)
        removed = self.bids.book_del(tid) or self.asks.book_del(tid)
        if removed is not None:
            logger.debug(f"CANCEL t={time:.3f} {tid} {removed.side.value}@{removed.price}")
        return removed is not None

    def publish_lob(self, time: float) -> PublishedLOB:
        """Return the anonymized LOB as seen by traders at the given time."""
        return PublishedLOB(
            time=time,
            bids=self.bids.publish(),
            asks=self.asks.publish(),
            last_trade=self._last_trade
        )

    def tape_view(self) -> Tuple[TapeEntry, ...]:
        """Append-only history of trades, oldest first."""
        return tuple(self.tape)
