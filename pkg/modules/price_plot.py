"""
Price Plot Module

Scatter plot of transaction prices over time from a prices CSV
(<time>,<price> rows), optionally with the equilibrium price drawn as a
step line per epoch.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd

logger = logging.getLogger(__name__)

Epoch = Tuple[float, float, Optional[int]]


def load_price_series(path: Union[str, Path]) -> pd.DataFrame:
    """Read a prices CSV into a DataFrame with columns time and price."""
    path = Path(path)
    if path.stat().st_size == 0:
        return pd.DataFrame({'time': pd.Series(dtype=float), 'price': pd.Series(dtype=int)})
    return pd.read_csv(path, header=None, names=['time', 'price'])


def plot_price_series(
    prices: pd.DataFrame,
    out_path: Union[str, Path],
    equilibria: Sequence[Epoch] = (),
    title: str = 'Transaction prices'
) -> Path:
    """
    Render transactions as a time/price scatter and save it

    Args:
        prices: DataFrame with time and price columns
        out_path: Image file to write (format from its suffix)
        equilibria: (t_start, t_end, P0) per epoch; epochs with no P0 are skipped
        title: Figure title

    Returns:
        Path of the image written
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=(8, 5))
    try:
        ax.scatter(prices['time'], prices['price'], s=8, marker='x', color='tab:blue', label='trades')
        labelled = False
        for t0, t1, p0 in equilibria:
            if p0 is None:
                continue
            ax.hlines(p0, t0, t1, colors='tab:red', linestyles='--',
                      label=None if labelled else 'equilibrium')
            labelled = True
        ax.set_xlabel('Time (s)')
        ax.set_ylabel('Price')
        ax.set_title(title)
        if len(prices) or equilibria:
            ax.legend(loc='best')
        fig.savefig(out_path, bbox_inches='tight')
    finally:
        plt.close(fig)

    logger.info(f"Wrote price plot with {len(prices)} trades to {out_path}")
    return out_path
