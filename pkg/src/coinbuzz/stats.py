"""Pearson product-moment correlation and per-stream report assembly.

Correlations that cannot be computed (constant series, too little overlap)
are reported as undefined with the triggering error name instead of being
zeroed; consumers must be able to tell "no relationship" from "not
computable". No p-values, no lags, no rank correlations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Sequence

from coinbuzz.series import DailySeries, EmptyOverlap, MarketSeries, align

POLICY_ALL_DAYS = "all-days"
POLICY_EXCLUDE_OUTAGES = "exclude-outages"

# Absorbs floating-point excursions just past +/-1 before clamping.
_CLAMP_TOLERANCE = 1e-12


class LengthMismatch(Exception):
    pass


class TooFewPoints(Exception):
    pass


class ConstantSeries(Exception):
    pass


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson r via the two-pass definition with exact summation.

    Requires len(x) == len(y) >= 3 and non-constant inputs; n = 2 always
    yields +/-1 and is statistically vacuous. The result is clamped to
    [-1, 1].
    """
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)} points")
    n = len(x)
    if n < 3:
        raise TooFewPoints(f"{n} points, need at least 3")
    mean_x = math.fsum(x) / n
    mean_y = math.fsum(y) / n
    dx = [xi - mean_x for xi in x]
    dy = [yi - mean_y for yi in y]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantSeries("zero variance")
    # Single sqrt keeps exact linear dependence at exactly +/-1; fall back to
    # the split form only when the product over- or underflows.
    denom_sq = sxx * syy
    if math.isinf(denom_sq) or denom_sq == 0.0:
        denom = math.sqrt(sxx) * math.sqrt(syy)
    else:
        denom = math.sqrt(denom_sq)
    r = math.fsum(a * b for a, b in zip(dx, dy)) / denom
    if abs(r) > 1.0 + _CLAMP_TOLERANCE:
        raise AssertionError(f"pearson out of range: {r}")
    return max(-1.0, min(1.0, r))


@dataclass
class ReportRow:
    stream_id: str
    total_messages: int
    r_volume: float | None
    r_volume_error: str | None
    r_price: float | None
    r_price_error: str | None
    n_days: int
    policy: str

    @property
    def has_error(self) -> bool:
        return self.r_volume_error is not None or self.r_price_error is not None


@dataclass
class CorrelationReport:
    rows: list[ReportRow]


def _correlate(x: list[float], y: list[float]) -> tuple[float | None, str | None]:
    try:
        return pearson(x, y), None
    except (ConstantSeries, TooFewPoints) as exc:
        return None, type(exc).__name__


def correlation_report(
    daily: Sequence[DailySeries],
    price: MarketSeries,
    volume: MarketSeries,
    exclude_outages: bool = False,
) -> CorrelationReport:
    """One row per stream: total messages plus r against volume and price.

    Both correlations for a stream are computed over the same day set (the
    dates shared by the stream and both market series, minus excluded outage
    days) so each row carries a single meaningful n_days. Per-row failures
    are recorded in the row, never raised.
    """
    policy = POLICY_EXCLUDE_OUTAGES if exclude_outages else POLICY_ALL_DAYS
    market_days = set(price.values) & set(volume.values)
    shared_volume = {d: v for d, v in volume.values.items() if d in market_days}
    shared_price = {d: v for d, v in price.values.items() if d in market_days}

    rows = []
    for series in daily:
        exclude = series.outage_dates() if exclude_outages else set()
        counts = {d: float(c) for d, c in series.counts.items()}
        try:
            x, yv, days = align(counts, shared_volume, exclude)
            _, yp, _ = align(counts, shared_price, exclude)
        except EmptyOverlap as exc:
            rows.append(
                ReportRow(
                    stream_id=series.stream_id,
                    total_messages=series.total(),
                    r_volume=None,
                    r_volume_error="EmptyOverlap",
                    r_price=None,
                    r_price_error="EmptyOverlap",
                    n_days=exc.overlap,
                    policy=policy,
                )
            )
            continue
        r_volume, volume_error = _correlate(x, yv)
        r_price, price_error = _correlate(x, yp)
        rows.append(
            ReportRow(
                stream_id=series.stream_id,
                total_messages=series.total(),
                r_volume=r_volume,
                r_volume_error=volume_error,
                r_price=r_price,
                r_price_error=price_error,
                n_days=len(days),
                policy=policy,
            )
        )
    return CorrelationReport(rows)


# --- JSON persistence for report handoff between CLI steps ------------------

def report_to_json(report: CorrelationReport) -> str:
    payload = {
        "rows": [
            {
                "stream_id": row.stream_id,
                "total_messages": row.total_messages,
                "r_volume": row.r_volume,
                "r_volume_error": row.r_volume_error,
                "r_price": row.r_price,
                "r_price_error": row.r_price_error,
                "n_days": row.n_days,
                "policy": row.policy,
            }
            for row in report.rows
        ]
    }
    return json.dumps(payload, ensure_ascii=False, indent=2)


def report_from_json(source: str | IO[str]) -> CorrelationReport:
    payload = json.loads(source if isinstance(source, str) else source.read())
    rows = [ReportRow(**item) for item in payload["rows"]]
    return CorrelationReport(rows)
