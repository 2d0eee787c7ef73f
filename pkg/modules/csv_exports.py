"""
CSV Exports Module

Writers for the simulator's comma-separated outputs. Times are written with
6 decimal places and prices as integer pennies so that files diff cleanly.
"""

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any, Dict, Iterable, Iterator, List, Sequence, Tuple, Union

from utils.csv_format import fmt_time

logger = logging.getLogger(__name__)

PathOrFile = Union[str, Path, IO[str]]


@contextmanager
def _open_out(out: PathOrFile) -> Iterator[IO[str]]:
    if hasattr(out, 'write'):
        yield out
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        yield f


def _write_rows(out: PathOrFile, rows: Iterable[str]) -> int:
    n = 0
    with _open_out(out) as f:
        for row in rows:
            f.write(row + '\n')
            n += 1
    return n


def emit_price_series(tape: Sequence[Any], out: PathOrFile) -> int:
    """
    Write one <time>,<price> row per trade, oldest first

    Args:
        tape: Tape entries (anything with .time and .price)
        out: Output path or open text file

    Returns:
        Number of rows written
    """
    return _write_rows(out, (f"{fmt_time(entry.time)},{entry.price}" for entry in tape))


def write_tape(tape: Sequence[Any], out: PathOrFile) -> int:
    """Tape rows: TRD,<time>,<price>."""
    return _write_rows(out, (entry.to_csv_row() for entry in tape))


def write_blotters(blotters: Dict[str, Sequence[Any]], out: PathOrFile) -> int:
    """Blotter rows for every trader, in tid order: <tid>,<time>,<price>,<assignment_id>,<profit>."""
    return _write_rows(out, (
        entry.to_csv_row(tid)
        for tid in sorted(blotters)
        for entry in blotters[tid]
    ))


def write_lob_frames(frames: Sequence[Tuple[float, str]], out: PathOrFile) -> int:
    """LOB frame rows: <time>,Bid:,<n>,<p>,<q>,...,Ask:,<n>,<p>,<q>,..."""
    return _write_rows(out, (f"{fmt_time(time)},{frame}" for time, frame in frames))


def write_balances(rows: Iterable[str], out: PathOrFile) -> int:
    """Balances file: one pre-formatted row per session."""
    return _write_rows(out, rows)


def write_session_dumps(stats: Any, output_dir: Union[str, Path], flags: Any) -> List[Path]:
    """
    Write the optional per-session files requested by flags

    Args:
        stats: SessionStats
        output_dir: Directory for the files
        flags: DumpFlags (tape, blotters, lob_frames, prices)

    Returns:
        Paths written
    """
    output_dir = Path(output_dir)
    sid = stats.session_id
    written: List[Path] = []

    if flags.tape:
        path = output_dir / f"tape_{sid}.csv"
        write_tape(stats.tape, path)
        written.append(path)
    if flags.prices:
        path = output_dir / f"prices_{sid}.csv"
        emit_price_series(stats.tape, path)
        written.append(path)
    if flags.blotters:
        path = output_dir / f"blotters_{sid}.csv"
        write_blotters(stats.blotters, path)
        written.append(path)
    if flags.lob_frames:
        path = output_dir / f"lob_frames_{sid}.csv"
        write_lob_frames(stats.lob_frames, path)
        written.append(path)

    for path in written:
        logger.debug(f"Wrote {path}")
    return written
