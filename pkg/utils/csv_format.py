"""Utility functions for numeric formatting in CSV outputs."""

import math
from typing import Optional


def round_half_up(value: float) -> int:
    """
    Round to the nearest integer, halves going up (2.5 -> 3, -2.5 -> -2).

    Python's round() uses banker's rounding, which would make prices
    depend on the parity of the value.
    """
    return int(math.floor(value + 0.5))


def fmt_time(seconds: float) -> str:
    """Format a simulated time as seconds with 6 decimal places."""
    return f"{seconds:.6f}"


def fmt_optional_price(price: Optional[int]) -> str:
    """Format a price that may be absent; absent prices become an empty field."""
    return '' if price is None else str(int(price))


def fmt_money(value: float) -> str:
    """Format a mean balance to 2 decimal places."""
    return f"{value:.2f}"
