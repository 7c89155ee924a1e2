"""Daily message-count series, outage flagging, and market-metric loading.

Days are UTC calendar days; both market data and normalized message
timestamps are UTC-native, so no bucketing timezone is configurable. Interior
dates with no messages are materialized with count zero so collection gaps
stay visible, while leading/trailing dates outside the observed span are not
(the collection window defines the span).

The outage detector compares each day against a rolling median of recent
healthy days. Median, not mean: a single spam spike must not mask a real
outage the next day.
"""

from __future__ import annotations

import csv
import math
import statistics
from collections import deque
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import IO, Collection, Iterable, Mapping

from coinbuzz.message import Message


class Flag(Enum):
    OK = "ok"
    OUTAGE = "outage"


class MarketMetric(Enum):
    PRICE_USD = "price"
    VOLUME_USD = "volume"


class MalformedRow(Exception):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"row {line_no}: {reason}")
        self.line_no = line_no


class DuplicateDate(Exception):
    def __init__(self, day: date):
        super().__init__(f"duplicate date {day.isoformat()}")
        self.day = day


class NegativeValue(Exception):
    def __init__(self, day: date, value: float):
        super().__init__(f"negative value {value} on {day.isoformat()}")
        self.day = day


class EmptyOverlap(Exception):
    """Fewer than three shared dates; correlation would be meaningless."""

    def __init__(self, overlap: int):
        super().__init__(f"only {overlap} shared dates, need at least 3")
        self.overlap = overlap


@dataclass
class DailySeries:
    """Per-stream date -> count map with a gap flag per day, dates ascending."""

    stream_id: str
    counts: dict[date, int] = field(default_factory=dict)
    flags: dict[date, Flag] = field(default_factory=dict)

    def total(self) -> int:
        return sum(self.counts.values())

    def outage_dates(self) -> set[date]:
        return {d for d, flag in self.flags.items() if flag is Flag.OUTAGE}


@dataclass
class MarketSeries:
    """One market metric as a date -> non-negative value map, dates ascending."""

    metric: MarketMetric
    values: dict[date, float] = field(default_factory=dict)


class DailyCounter:
    """Streaming accumulator behind bucket_daily; add timestamps, then build."""

    def __init__(self) -> None:
        self._counts: dict[date, int] = {}

    def add(self, message: Message) -> None:
        day = message.timestamp.date()
        self._counts[day] = self._counts.get(day, 0) + 1

    def build(self, stream_id: str) -> DailySeries:
        if not self._counts:
            return DailySeries(stream_id)
        first, last = min(self._counts), max(self._counts)
        counts: dict[date, int] = {}
        day = first
        while day <= last:
            counts[day] = self._counts.get(day, 0)
            day += timedelta(days=1)
        flags = {day: Flag.OK for day in counts}
        return DailySeries(stream_id, counts, flags)


def bucket_daily(messages: Iterable[Message], stream_id: str) -> DailySeries:
    """Count messages per UTC calendar date, zero-filling interior dates."""
    counter = DailyCounter()
    for message in messages:
        counter.add(message)
    return counter.build(stream_id)


def detect_gaps(series: DailySeries, theta: float = 0.1, k: int = 7) -> DailySeries:
    """Flag likely collection-outage days; returns a new series.

    A day is an Outage when its count is zero, or below theta times the
    median of the previous k days that were themselves healthy (days already
    flagged in this pass do not poison the baseline). Early days fall back to
    whatever history exists; with no history only the zero rule applies.
    """
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must be in (0, 1)")
    if k < 1:
        raise ValueError("k must be >= 1")
    flags: dict[date, Flag] = {}
    healthy: deque[int] = deque(maxlen=k)
    for day in sorted(series.counts):
        count = series.counts[day]
        outage = count == 0
        if not outage and healthy:
            outage = count < theta * statistics.median(healthy)
        if outage:
            flags[day] = Flag.OUTAGE
        else:
            flags[day] = Flag.OK
            healthy.append(count)
    return DailySeries(series.stream_id, dict(series.counts), flags)


def load_market_csv(source: str | Path | IO[str], metric: MarketMetric) -> MarketSeries:
    """Load a `date,value` CSV; rejects duplicates and negative values."""
    close_after = False
    if isinstance(source, (str, Path)):
        source = open(source, "r", encoding="utf-8", newline="")
        close_after = True
    values: dict[date, float] = {}
    try:
        reader = csv.reader(source)
        header = next(reader, None)
        if header is None or [cell.strip() for cell in header] != ["date", "value"]:
            raise MalformedRow(1, f"expected header 'date,value', got {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise MalformedRow(line_no, f"expected 2 fields, got {len(row)}")
            try:
                day = date.fromisoformat(row[0].strip())
            except ValueError:
                raise MalformedRow(line_no, f"bad date {row[0]!r}") from None
            try:
                value = float(row[1])
            except ValueError:
                raise MalformedRow(line_no, f"bad value {row[1]!r}") from None
            if not math.isfinite(value):
                raise MalformedRow(line_no, f"non-finite value {row[1]!r}")
            if value < 0:
                raise NegativeValue(day, value)
            if day in values:
                raise DuplicateDate(day)
            values[day] = value
    finally:
        if close_after:
            source.close()
    return MarketSeries(metric, dict(sorted(values.items())))


def align(
    a: Mapping[date, float],
    b: Mapping[date, float],
    exclude: Collection[date] = (),
) -> tuple[list[float], list[float], list[date]]:
    """Inner-join two date maps into paired vectors, dates ascending.

    Dates in `exclude` (outage days, typically) are dropped before the join.
    Raises EmptyOverlap when fewer than 3 dates survive.
    """
    shared = sorted(set(a) & set(b) - set(exclude))
    if len(shared) < 3:
        raise EmptyOverlap(len(shared))
    x = [float(a[day]) for day in shared]
    y = [float(b[day]) for day in shared]
    return x, y, shared


# --- plot-ready CSV (date,count,flag) ---------------------------------------

def write_daily_csv(series: DailySeries, out: IO[str]) -> int:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["date", "count", "flag"])
    for day in sorted(series.counts):
        writer.writerow([day.isoformat(), series.counts[day], series.flags.get(day, Flag.OK).value])
    return len(series.counts)


def read_daily_csv(source: str | Path | IO[str], stream_id: str = "") -> DailySeries:
    close_after = False
    if isinstance(source, (str, Path)):
        source = open(source, "r", encoding="utf-8", newline="")
        close_after = True
    counts: dict[date, int] = {}
    flags: dict[date, Flag] = {}
    try:
        reader = csv.reader(source)
        header = next(reader, None)
        if header is None or [cell.strip() for cell in header] != ["date", "count", "flag"]:
            raise MalformedRow(1, f"expected header 'date,count,flag', got {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(line_no, f"expected 3 fields, got {len(row)}")
            try:
                day = date.fromisoformat(row[0].strip())
                count = int(row[1])
                flag = Flag(row[2].strip())
            except ValueError:
                raise MalformedRow(line_no, f"bad row {row!r}") from None
            if day in counts:
                raise DuplicateDate(day)
            counts[day] = count
            flags[day] = flag
    finally:
        if close_after:
            source.close()
    if not counts:
        return DailySeries(stream_id)
    # Normalize foreign CSVs: interior dates absent from the file become
    # explicit zero-count days, same as the aggregation path produces.
    filled_counts: dict[date, int] = {}
    filled_flags: dict[date, Flag] = {}
    day, last = min(counts), max(counts)
    while day <= last:
        filled_counts[day] = counts.get(day, 0)
        filled_flags[day] = flags.get(day, Flag.OK)
        day += timedelta(days=1)
    return DailySeries(stream_id, filled_counts, filled_flags)
