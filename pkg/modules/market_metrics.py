"""
Market Metrics Module

Market-quality measures for a finished session:
- Theoretical equilibrium (P0, Q0) from the stepped supply and demand curves
- Smith's alpha: RMS deviation of transaction prices from P0, as a percentage of P0
- Allocative efficiency: realized surplus over the maximum surplus at equilibrium
"""

import logging
from typing import Any, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from modules.exchange import Side
from utils.csv_format import round_half_up

logger = logging.getLogger(__name__)


class MetricUndefinedError(ValueError):
    """Raised when a metric has no meaningful value for its inputs."""


def _demand_supply(buyer_limits: Iterable[int], seller_limits: Iterable[int]) -> Tuple[List[int], List[int]]:
    return sorted(buyer_limits, reverse=True), sorted(seller_limits)


def equilibrium_price(
    buyer_limits: Iterable[int],
    seller_limits: Iterable[int]
) -> Tuple[Optional[int], int]:
    """
    Intersection of the stepped demand and supply curves.

    Args:
        buyer_limits: Buyer limit prices (demand)
        seller_limits: Seller limit prices (supply)

    Returns:
        Tuple of (P0, Q0). P0 is None when no buyer/seller pair can trade.

    Algorithm:
        1. Sort buyer limits descending (D) and seller limits ascending (S)
        2. Q0 is the largest q with D(q) >= S(q)
        3. P0 is the midpoint of D(Q0) and S(Q0), rounded half-up
    """
    demand, supply = _demand_supply(buyer_limits, seller_limits)
    q0 = 0
    for d, s in zip(demand, supply):
        if d < s:
            break
        q0 += 1
    if q0 == 0:
        return None, 0
    return round_half_up((demand[q0 - 1] + supply[q0 - 1]) / 2.0), q0


def max_surplus(buyer_limits: Iterable[int], seller_limits: Iterable[int]) -> int:
    """Total surplus when the Q0 intramarginal pairs all trade."""
    demand, supply = _demand_supply(buyer_limits, seller_limits)
    surplus = 0
    for d, s in zip(demand, supply):
        if d < s:
            break
        surplus += d - s
    return surplus


def _price_of(entry: Any) -> float:
    return float(getattr(entry, 'price', entry))


def smiths_alpha(tape: Sequence[Any], p0: Optional[int]) -> float:
    """
    Smith's alpha for a set of transactions

    Args:
        tape: Trades, as tape entries (anything with .price) or bare prices
        p0: Equilibrium price

    Returns:
        100 * sqrt(mean((price - P0)^2)) / P0
    """
    if p0 is None or p0 <= 0:
        raise MetricUndefinedError(f"Smith's alpha needs a positive equilibrium price, got {p0}")
    if len(tape) == 0:
        raise MetricUndefinedError("Smith's alpha is undefined for an empty tape")
    prices = np.fromiter((_price_of(entry) for entry in tape), dtype=float, count=len(tape))
    return float(100.0 * np.sqrt(np.mean((prices - p0) ** 2)) / p0)


def _limits_of(trade: Any) -> Tuple[int, int]:
    if hasattr(trade, 'buyer_limit'):
        return trade.buyer_limit, trade.seller_limit
    buyer_limit, seller_limit = trade
    return buyer_limit, seller_limit


def realized_surplus(trades: Iterable[Any]) -> int:
    """Sum of (buyer_limit - seller_limit) over executed trades."""
    total = 0
    for trade in trades:
        buyer_limit, seller_limit = _limits_of(trade)
        total += buyer_limit - seller_limit
    return total


def allocative_efficiency(
    trades: Iterable[Any],
    buyer_limits: Iterable[int],
    seller_limits: Iterable[int]
) -> float:
    """
    Realized surplus as a fraction of the maximum surplus

    Args:
        trades: Executed trades carrying both counterparties' limits
                (objects with buyer_limit/seller_limit, or (buyer, seller) pairs)
        buyer_limits: Every buyer limit issued
        seller_limits: Every seller limit issued

    Returns:
        Efficiency; extramarginal trades can push it outside [0, 1] and are reported as-is
    """
    best = max_surplus(buyer_limits, seller_limits)
    if best == 0:
        raise MetricUndefinedError("Allocative efficiency is undefined when the maximum surplus is zero")
    return realized_surplus(trades) / best


# ---------------------------------------------------------------------------
# Session-level helpers (duck-typed on SessionStats)
# ---------------------------------------------------------------------------

def issued_limits(stats: Any, t0: float = float('-inf'), t1: float = float('inf')) -> Tuple[List[int], List[int]]:
    """Buyer and seller limits of assignments issued in [t0, t1)."""
    buyers: List[int] = []
    sellers: List[int] = []
    for record in stats.issued:
        if t0 <= record.issue_time < t1:
            (buyers if record.side is Side.BID else sellers).append(record.limit)
    return buyers, sellers


def equilibrium_for_window(stats: Any, t0: float, t1: float) -> Tuple[Optional[int], int]:
    """Equilibrium of the assignments issued during [t0, t1)."""
    return equilibrium_price(*issued_limits(stats, t0, t1))


def session_efficiency(stats: Any) -> float:
    """Allocative efficiency of a whole session, pooling every issued assignment."""
    buyers, sellers = issued_limits(stats)
    return allocative_efficiency(stats.trade_records, buyers, sellers)


def session_alpha(
    stats: Any,
    t0: float = float('-inf'),
    t1: float = float('inf'),
    p0: Optional[int] = None
) -> float:
    """
    Smith's alpha of the trades in [t0, t1)

    Args:
        stats: SessionStats
        t0, t1: Trade time window (whole session by default)
        p0: Equilibrium to measure against; defaults to the equilibrium of
            the assignments issued in the same window

    Returns:
        Smith's alpha as a percentage
    """
    if p0 is None:
        p0, _ = equilibrium_for_window(stats, t0, t1)
    prices = [entry.price for entry in stats.tape if t0 <= entry.time < t1]
    return smiths_alpha(prices, p0)


def window_mean_price(stats: Any, t0: float, t1: float) -> Optional[float]:
    """Mean transaction price in [t0, t1), or None if nothing traded."""
    prices = [entry.price for entry in stats.tape if t0 <= entry.time < t1]
    if not prices:
        return None
    return float(np.mean(prices))
