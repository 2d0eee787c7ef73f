"""Configuration management for the LOB exchange simulator."""

import os
from pathlib import Path
from typing import Tuple
from dotenv import load_dotenv

load_dotenv()


def _int_pair(value: str, default: Tuple[int, int]) -> Tuple[int, int]:
    """Parse 'LO,HI' into an integer pair, falling back to default."""
    try:
        lo, hi = (int(part) for part in value.split(','))
        return lo, hi
    except (AttributeError, ValueError):
        return default


# Exchange price band (integer pennies, tick size 1)
LOB_SYS_MIN_PRICE: int = int(os.getenv('LOB_SYS_MIN_PRICE', '1'))
LOB_SYS_MAX_PRICE: int = int(os.getenv('LOB_SYS_MAX_PRICE', '1000'))

# Session defaults
DEFAULT_SESSION_DURATION: float = float(os.getenv('DEFAULT_SESSION_DURATION', '300'))
DEFAULT_SEED: int = int(os.getenv('DEFAULT_SEED', '0'))

# Order flow defaults
DEFAULT_ORDER_INTERVAL: float = float(os.getenv('DEFAULT_ORDER_INTERVAL', '30'))
DEFAULT_TIMEMODE: str = os.getenv('DEFAULT_TIMEMODE', 'periodic')  # periodic, drip-fixed, drip-jittered, drip-poisson
DEFAULT_STEPMODE: str = os.getenv('DEFAULT_STEPMODE', 'fixed')  # fixed, jittered, random
DEFAULT_DEMAND_RANGE: Tuple[int, int] = _int_pair(os.getenv('DEFAULT_DEMAND_RANGE', ''), (50, 150))
DEFAULT_SUPPLY_RANGE: Tuple[int, int] = _int_pair(os.getenv('DEFAULT_SUPPLY_RANGE', ''), (50, 150))

# Batch experiment defaults
DEFAULT_PARALLELISM: int = int(os.getenv('DEFAULT_PARALLELISM', '1'))
SWEEP_PROGRESS_EVERY: int = int(os.getenv('SWEEP_PROGRESS_EVERY', '500'))
OUTPUT_DIR: Path = Path(os.getenv('OUTPUT_DIR', 'output'))

# Logging Configuration
LOG_LEVEL: str = os.getenv('LOG_LEVEL', 'INFO')
LOG_DIR: Path = Path(os.getenv('LOG_DIR', 'logs'))

# Test Configuration
RUN_SLOW_TESTS: bool = os.getenv('RUN_SLOW_TESTS', 'false').lower() in ('1', 'true', 'yes')


# Validation
def validate_config() -> bool:
    """Validate that the configured values describe a usable exchange."""
    problems = []

    if LOB_SYS_MIN_PRICE < 1:
        problems.append('LOB_SYS_MIN_PRICE')
    if LOB_SYS_MAX_PRICE < LOB_SYS_MIN_PRICE:
        problems.append('LOB_SYS_MAX_PRICE')
    if DEFAULT_SESSION_DURATION <= 0:
        problems.append('DEFAULT_SESSION_DURATION')
    if DEFAULT_ORDER_INTERVAL <= 0:
        problems.append('DEFAULT_ORDER_INTERVAL')
    if DEFAULT_PARALLELISM < 1:
        problems.append('DEFAULT_PARALLELISM')

    for name, (lo, hi) in (('DEFAULT_DEMAND_RANGE', DEFAULT_DEMAND_RANGE),
                           ('DEFAULT_SUPPLY_RANGE', DEFAULT_SUPPLY_RANGE)):
        if lo > hi or lo < LOB_SYS_MIN_PRICE or hi > LOB_SYS_MAX_PRICE:
            problems.append(name)

    if problems:
        print(f"Missing or invalid configuration for: {', '.join(problems)}")
        print("Please update your .env file with valid values.")
        return False

    return True


# Application Configuration
APP_NAME = "LOB Exchange Simulator"
VERSION = "1.0.0"
TRADER_TYPES = ('GVWY', 'ZIC', 'SHVR', 'SNPR', 'ZIP')
