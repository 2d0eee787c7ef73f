"""
Unit tests for the market metrics module.
Checks equilibrium, Smith's alpha and allocative efficiency against worked
examples and against brute-force computations on random small markets.
"""

import math
import unittest
from pathlib import Path
from types import SimpleNamespace

import numpy as np

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.exchange import Side, TapeEntry
from modules.market_metrics import (
    MetricUndefinedError,
    allocative_efficiency,
    equilibrium_for_window,
    equilibrium_price,
    max_surplus,
    session_alpha,
    session_efficiency,
    smiths_alpha,
    window_mean_price,
)
from modules.market_session import TradeRecord
from modules.traders import Assignment

DEMAND = [250, 200, 150, 100]
SUPPLY = [50, 100, 150, 200]


def brute_equilibrium(buyers, sellers):
    """Q0 as the best quantity over every candidate price; P0 from the marginal pair."""
    q0 = 0
    for p in set(buyers) | set(sellers):
        q = min(sum(1 for b in buyers if b >= p), sum(1 for s in sellers if s <= p))
        q0 = max(q0, q)
    if q0 == 0:
        return None, 0
    d = sorted(buyers, reverse=True)[q0 - 1]
    s = sorted(sellers)[q0 - 1]
    return (d + s + 1) // 2, q0


def brute_max_surplus(buyers, sellers):
    """Best k richest buyers against k cheapest sellers over every k."""
    d = sorted(buyers, reverse=True)
    s = sorted(sellers)
    return max(sum(d[:k]) - sum(s[:k]) for k in range(min(len(d), len(s)) + 1))


class TestEquilibrium(unittest.TestCase):
    """Test cases for equilibrium_price and max_surplus."""

    def test_worked_example(self):
        """Test four buyers against four sellers meet at 150 for 3 units."""
        self.assertEqual(equilibrium_price(DEMAND, SUPPLY), (150, 3))

    def test_single_coincident_pair(self):
        """Test one buyer and one seller at the same limit."""
        self.assertEqual(equilibrium_price([100], [100]), (100, 1))

    def test_no_crossing(self):
        """Test curves that never cross give no equilibrium."""
        self.assertEqual(equilibrium_price([50], [200]), (None, 0))

    def test_empty_sides(self):
        """Test an empty side gives no equilibrium."""
        self.assertEqual(equilibrium_price([], [100]), (None, 0))
        self.assertEqual(max_surplus([], []), 0)

    def test_midpoint_rounds_half_up(self):
        """Test an odd midpoint rounds up."""
        self.assertEqual(equilibrium_price([101], [100]), (101, 1))

    def test_max_surplus_example(self):
        """Test the worked example's maximum surplus."""
        self.assertEqual(max_surplus(DEMAND, SUPPLY), 300)

    def test_random_instances_match_brute_force(self):
        """Test equilibrium and maximum surplus on 100 random small markets."""
        rng = np.random.default_rng(2024)
        for _ in range(100):
            buyers = [int(x) for x in rng.integers(1, 60, size=int(rng.integers(1, 11)))]
            sellers = [int(x) for x in rng.integers(1, 60, size=int(rng.integers(1, 11)))]
            self.assertEqual(equilibrium_price(buyers, sellers), brute_equilibrium(buyers, sellers),
                             (buyers, sellers))
            self.assertEqual(max_surplus(buyers, sellers), brute_max_surplus(buyers, sellers))


class TestSmithsAlpha(unittest.TestCase):
    """Test cases for smiths_alpha."""

    def test_all_at_equilibrium(self):
        """Test trades at P0 give zero."""
        self.assertEqual(smiths_alpha([100, 100, 100], 100), 0.0)

    def test_symmetric_deviation(self):
        """Test trades at 90 and 110 around 100 give 10."""
        self.assertAlmostEqual(smiths_alpha([90, 110], 100), 10.0)

    def test_single_trade(self):
        """Test a single trade at 120 against 100 gives 20."""
        self.assertAlmostEqual(smiths_alpha([120], 100), 20.0)

    def test_accepts_tape_entries(self):
        """Test tape entries are read by price."""
        tape = [TapeEntry(1.0, 90), TapeEntry(2.0, 110)]
        self.assertAlmostEqual(smiths_alpha(tape, 100), 10.0)

    def test_scale_invariant(self):
        """Test scaling prices and P0 together leaves alpha unchanged."""
        prices = [93, 101, 117, 88]
        self.assertAlmostEqual(smiths_alpha(prices, 100), smiths_alpha([p * 7 for p in prices], 700))

    def test_undefined(self):
        """Test empty tapes and missing P0 raise."""
        with self.assertRaises(MetricUndefinedError):
            smiths_alpha([], 100)
        with self.assertRaises(MetricUndefinedError):
            smiths_alpha([100], None)
        with self.assertRaises(MetricUndefinedError):
            smiths_alpha([100], 0)

    def test_random_instances_match_brute_force(self):
        """Test alpha on 100 random price sets against a direct computation."""
        rng = np.random.default_rng(7)
        for _ in range(100):
            prices = [int(x) for x in rng.integers(1, 500, size=int(rng.integers(1, 20)))]
            p0 = int(rng.integers(1, 500))
            expected = 100.0 * math.sqrt(sum((p - p0) ** 2 for p in prices) / len(prices)) / p0
            self.assertAlmostEqual(smiths_alpha(prices, p0), expected, places=9)


class TestAllocativeEfficiency(unittest.TestCase):
    """Test cases for allocative_efficiency."""

    def test_full_extraction(self):
        """Test all intramarginal pairs trading gives 1."""
        trades = [(250, 50), (200, 100), (150, 150)]
        self.assertEqual(allocative_efficiency(trades, DEMAND, SUPPLY), 1.0)

    def test_no_trades(self):
        """Test no trades gives 0."""
        self.assertEqual(allocative_efficiency([], DEMAND, SUPPLY), 0.0)

    def test_single_pair(self):
        """Test the richest buyer trading with the cheapest seller extracts 200 of 300."""
        self.assertAlmostEqual(allocative_efficiency([(250, 50)], DEMAND, SUPPLY), 2.0 / 3.0)

    def test_trade_records(self):
        """Test trade records carrying both limits are accepted."""
        trades = [TradeRecord(1.0, 120, 'B00', 'S00', 250, 50)]
        self.assertAlmostEqual(allocative_efficiency(trades, DEMAND, SUPPLY), 2.0 / 3.0)

    def test_zero_max_surplus(self):
        """Test markets with no possible surplus raise."""
        with self.assertRaises(MetricUndefinedError):
            allocative_efficiency([], [50], [200])

    def test_random_instances_match_brute_force(self):
        """Test efficiency of random intramarginal matchings."""
        rng = np.random.default_rng(99)
        checked = 0
        while checked < 100:
            buyers = [int(x) for x in rng.integers(1, 60, size=int(rng.integers(1, 11)))]
            sellers = [int(x) for x in rng.integers(1, 60, size=int(rng.integers(1, 11)))]
            best = brute_max_surplus(buyers, sellers)
            if best == 0:
                continue
            n = int(rng.integers(0, min(len(buyers), len(sellers)) + 1))
            pairs = list(zip(rng.permutation(buyers)[:n].tolist(), rng.permutation(sellers)[:n].tolist()))
            expected = sum(b - s for b, s in pairs) / best
            self.assertAlmostEqual(allocative_efficiency(pairs, buyers, sellers), expected)
            checked += 1


class TestSessionHelpers(unittest.TestCase):
    """Test cases for the SessionStats-based helpers."""

    def setUp(self):
        """Set up a two-epoch session record."""
        issued = []
        aid = 1
        for t, limits_b, limits_s in ((0.0, DEMAND, SUPPLY), (60.0, [350, 300], [200, 250])):
            for limit in limits_b:
                issued.append(Assignment(aid, Side.BID, limit, t))
                aid += 1
            for limit in limits_s:
                issued.append(Assignment(aid, Side.ASK, limit, t))
                aid += 1
        self.stats = SimpleNamespace(
            issued=issued,
            tape=(TapeEntry(10.0, 140), TapeEntry(20.0, 160), TapeEntry(70.0, 275)),
            trade_records=[
                TradeRecord(10.0, 140, 'B00', 'S00', 250, 50),
                TradeRecord(20.0, 160, 'B01', 'S01', 200, 100),
                TradeRecord(70.0, 275, 'B00', 'S00', 350, 200),
            ]
        )

    def test_window_equilibria(self):
        """Test each epoch's equilibrium comes from its own assignments."""
        self.assertEqual(equilibrium_for_window(self.stats, 0.0, 60.0), (150, 3))
        self.assertEqual(equilibrium_for_window(self.stats, 60.0, 120.0), (275, 2))

    def test_window_alpha(self):
        """Test alpha over the first epoch uses its equilibrium."""
        self.assertAlmostEqual(session_alpha(self.stats, 0.0, 60.0), 100.0 * 10.0 / 150.0)

    def test_window_mean_price(self):
        """Test mean price per window and an empty window."""
        self.assertEqual(window_mean_price(self.stats, 0.0, 60.0), 150.0)
        self.assertIsNone(window_mean_price(self.stats, 120.0, 180.0))

    def test_session_efficiency(self):
        """Test whole-session efficiency pools every issued assignment."""
        buyers = DEMAND + [350, 300]
        sellers = SUPPLY + [200, 250]
        expected = (200 + 100 + 150) / brute_max_surplus(buyers, sellers)
        self.assertAlmostEqual(session_efficiency(self.stats), expected)


if __name__ == '__main__':
    unittest.main()
