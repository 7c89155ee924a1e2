"""Command-line entry point: one subcommand per pipeline stage plus run-all.

Exit codes: 0 success, 1 partial success (skipped lines or per-row report
errors in lenient mode), 2 fatal error, 64 usage error. All stages stream
line by line, so memory stays bounded regardless of corpus size.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

from coinbuzz import annotate as annotate_mod
from coinbuzz import irc as irc_mod
from coinbuzz import message as message_mod
from coinbuzz import series as series_mod
from coinbuzz import stats as stats_mod
from coinbuzz import twitter as twitter_mod
from coinbuzz.sanitize import sanitize_line, sanitize_stream
from coinbuzz.series import DuplicateDate, EmptyOverlap, MalformedRow, NegativeValue

TABLE_HEADERS = (
    "Data Source",
    "Total Messages",
    "Bitcoin Volume Correlation",
    "Bitcoin Price Correlation",
    "n_days",
    "policy",
)

_FATAL = (
    OSError,
    ValueError,
    irc_mod.UnparsableLine,
    MalformedRow,
    DuplicateDate,
    NegativeValue,
    EmptyOverlap,
    json.JSONDecodeError,
)


class _Parser(argparse.ArgumentParser):
    """argparse with the conventional 64 exit code for usage errors."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(64, f"{self.prog}: error: {message}\n")


# --- rendering ---------------------------------------------------------------

def _correlation_cell(value: float | None, error: str | None) -> str:
    if value is None:
        return f"n/a({error})"
    return f"{value:.4f}"


def render_table(report: stats_mod.CorrelationReport, format: str = "tsv") -> str:
    """Render the summary table; correlations to 4 decimals, totals as ints."""
    if not report.rows:
        raise ValueError("cannot render an empty report")
    if format not in ("tsv", "markdown"):
        raise ValueError(f"unknown format {format!r}")
    table = [list(TABLE_HEADERS)]
    for row in report.rows:
        table.append(
            [
                row.stream_id,
                str(row.total_messages),
                _correlation_cell(row.r_volume, row.r_volume_error),
                _correlation_cell(row.r_price, row.r_price_error),
                str(row.n_days),
                row.policy,
            ]
        )
    if format == "tsv":
        return "\n".join("\t".join(cells) for cells in table) + "\n"
    lines = ["| " + " | ".join(table[0]) + " |"]
    lines.append("|" + "|".join(" --- " for _ in table[0]) + "|")
    for cells in table[1:]:
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_plot_series(
    daily: series_mod.DailySeries,
    market: series_mod.MarketSeries,
    out: IO[str],
) -> int:
    """Write `date,count,flag,metric_value` over the joined date range."""
    counts = {d: float(c) for d, c in daily.counts.items()}
    x, y, days = series_mod.align(counts, market.values)
    out.write("date,count,flag,metric_value\n")
    for day, count, value in zip(days, x, y):
        flag = daily.flags.get(day, series_mod.Flag.OK).value
        out.write(f"{day.isoformat()},{int(count)},{flag},{value!r}\n")
    return len(days)


# --- subcommand handlers -----------------------------------------------------

def _cmd_sanitize(args: argparse.Namespace) -> int:
    stats = sanitize_stream(sys.stdin.buffer, sys.stdout.buffer)
    sys.stdout.buffer.flush()
    if args.stats:
        for key, value in vars(stats).items():
            print(f"{key}={value}", file=sys.stderr)
    return 0


def _cmd_parse_irc(args: argparse.Namespace) -> int:
    messages, stats = irc_mod.ingest_log(
        args.infile, args.channel, strict=args.strict, tz=args.tz
    )
    with open(args.outfile, "w", encoding="utf-8") as out:
        message_mod.write_messages(messages, out)
    print(
        f"parse-irc: lines={stats.lines_in} messages={stats.messages} "
        f"dropped_network={stats.dropped_network} unparsable={stats.unparsable} "
        f"blank={stats.blank}",
        file=sys.stderr,
    )
    return 1 if stats.unparsable else 0


def _cmd_ingest_tweets(args: argparse.Namespace) -> int:
    keywords = [kw for kw in args.keywords.split(",") if kw.strip()]
    with open(args.infile, "r", encoding="utf-8", errors="replace") as src, open(
        args.outfile, "w", encoding="utf-8"
    ) as out:
        stats = twitter_mod.ingest_capture(
            src,
            lambda msg: out.write(message_mod.to_json_line(msg) + "\n"),
            keywords=keywords,
            substring=args.substring,
        )
    print(
        f"ingest-tweets: lines={stats.lines} parsed={stats.parsed} "
        f"malformed={stats.malformed} duplicates={stats.duplicates} "
        f"matched={stats.matched}",
        file=sys.stderr,
    )
    return 1 if stats.malformed else 0


def _cmd_annotate(args: argparse.Namespace) -> int:
    gazetteer = annotate_mod.Gazetteer.load(args.gazetteer)
    resources = {"gazetteer": gazetteer}
    stages = ["tokenize", "gazetteer"]
    docs = 0
    with open(args.infile, "r", encoding="utf-8") as src, open(
        args.outfile, "w", encoding="utf-8"
    ) as out:
        for line_no, line in enumerate(src, start=1):
            if not line.strip():
                continue
            msg = message_mod.from_json_line(line)
            doc = annotate_mod.Document(f"{msg.stream_id}:{line_no}", msg.text, msg)
            adoc = annotate_mod.run_pipeline(doc, stages, resources)
            out.write(adoc.to_json() + "\n")
            docs += 1
    print(f"annotate: documents={docs}", file=sys.stderr)
    return 0


def _cmd_aggregate(args: argparse.Namespace) -> int:
    counter = series_mod.DailyCounter()
    seen_streams: set[str] = set()
    with open(args.infile, "r", encoding="utf-8") as src:
        for msg in message_mod.read_messages(src):
            if args.stream_id and msg.stream_id != args.stream_id:
                continue
            seen_streams.add(msg.stream_id)
            counter.add(msg)
    if args.stream_id:
        stream_id = args.stream_id
    elif len(seen_streams) == 1:
        stream_id = seen_streams.pop()
    elif not seen_streams:
        stream_id = ""
    else:
        raise ValueError(
            f"input mixes streams {sorted(seen_streams)}; pick one with --stream-id"
        )
    with open(args.outfile, "w", encoding="utf-8", newline="") as out:
        days = series_mod.write_daily_csv(counter.build(stream_id), out)
    print(f"aggregate: stream={stream_id or '(empty)'} days={days}", file=sys.stderr)
    return 0


def _cmd_gaps(args: argparse.Namespace) -> int:
    daily = series_mod.read_daily_csv(args.infile)
    flagged = series_mod.detect_gaps(daily, theta=args.theta, k=args.k)
    with open(args.outfile, "w", encoding="utf-8", newline="") as out:
        series_mod.write_daily_csv(flagged, out)
    outages = len(flagged.outage_dates())
    print(f"gaps: days={len(flagged.counts)} outages={outages}", file=sys.stderr)
    return 0


def _parse_series_arg(value: str) -> tuple[str, str]:
    stream_id, sep, path = value.partition("=")
    if not sep or not stream_id or not path:
        raise ValueError(f"--series wants <stream_id>=<path>, got {value!r}")
    return stream_id, path


def _cmd_correlate(args: argparse.Namespace) -> int:
    daily = []
    for series_arg in args.series:
        stream_id, path = _parse_series_arg(series_arg)
        daily.append(series_mod.read_daily_csv(path, stream_id))
    price = series_mod.load_market_csv(args.price, series_mod.MarketMetric.PRICE_USD)
    volume = series_mod.load_market_csv(args.volume, series_mod.MarketMetric.VOLUME_USD)
    report = stats_mod.correlation_report(
        daily, price, volume, exclude_outages=args.exclude_outages
    )
    payload = stats_mod.report_to_json(report)
    if args.outfile:
        Path(args.outfile).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    return 1 if any(row.has_error for row in report.rows) else 0


def _cmd_report(args: argparse.Namespace) -> int:
    with open(args.infile, "r", encoding="utf-8") as src:
        report = stats_mod.report_from_json(src)
    text = render_table(report, args.format)
    if args.outfile:
        Path(args.outfile).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_plot_series(args: argparse.Namespace) -> int:
    daily = series_mod.read_daily_csv(args.series)
    metric = (
        series_mod.MarketMetric.VOLUME_USD
        if args.metric == "volume"
        else series_mod.MarketMetric.PRICE_USD
    )
    market = series_mod.load_market_csv(args.market, metric)
    with open(args.outfile, "w", encoding="utf-8", newline="") as out:
        rows = emit_plot_series(daily, market, out)
    print(f"plot-series: rows={rows}", file=sys.stderr)
    return 0


# --- run-all orchestration ---------------------------------------------------

@dataclass
class _StreamBundle:
    stream_id: str
    counter: series_mod.DailyCounter
    messages_path: Path


def _slug(stream_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", stream_id).strip("_") or "stream"


def _load_config(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError:
            raise ValueError(
                "TOML configs need Python 3.11+; use a JSON config instead"
            ) from None
        return tomllib.loads(text)
    return json.loads(text)


def _window_filter(config: dict):
    window = config.get("window")
    if not window:
        return lambda msg: True
    from datetime import date

    start = date.fromisoformat(window["start"])
    end = date.fromisoformat(window["end"])

    def inside(msg: message_mod.Message) -> bool:
        return start <= msg.timestamp.date() <= end

    return inside


def _cmd_run_all(args: argparse.Namespace) -> int:
    config = _load_config(Path(args.config))
    out_dir = Path(config.get("out_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    keywords = config.get("keywords", list(twitter_mod.DEFAULT_KEYWORDS))
    substring = bool(config.get("substring", False))
    strict = bool(config.get("strict", False))
    theta = float(config.get("theta", 0.1))
    k = int(config.get("k", 7))
    exclude_outages = bool(config.get("exclude_outages", False))
    format = config.get("format", "tsv")
    in_window = _window_filter(config)

    gazetteer = None
    annotated_out = None
    if config.get("gazetteer"):
        gazetteer = annotate_mod.Gazetteer.load(config["gazetteer"])
        annotated_out = open(out_dir / "annotated.jsonl", "w", encoding="utf-8")
    doc_seq = 0
    partial = False

    def handle(msg: message_mod.Message, bundle: _StreamBundle, sink: IO[str]) -> None:
        nonlocal doc_seq
        if not in_window(msg):
            return
        sink.write(message_mod.to_json_line(msg) + "\n")
        bundle.counter.add(msg)
        if annotated_out is not None:
            doc_seq += 1
            doc = annotate_mod.Document(f"{msg.stream_id}:{doc_seq}", msg.text, msg)
            adoc = annotate_mod.run_pipeline(
                doc, ["tokenize", "gazetteer"], {"gazetteer": gazetteer}
            )
            annotated_out.write(adoc.to_json() + "\n")

    bundles: dict[str, _StreamBundle] = {}
    written_paths: set[Path] = set()

    def bundle_for(stream_id: str) -> _StreamBundle:
        if stream_id not in bundles:
            bundles[stream_id] = _StreamBundle(
                stream_id,
                series_mod.DailyCounter(),
                out_dir / f"messages_{_slug(stream_id)}.jsonl",
            )
        return bundles[stream_id]

    try:
        # Tweet captures all feed the "twitter" stream, sanitized inline.
        captures = config.get("tweet_captures", [])
        if captures:
            bundle = bundle_for("twitter")
            written_paths.add(bundle.messages_path)
            with open(bundle.messages_path, "w", encoding="utf-8") as sink:
                for capture in captures:
                    with open(capture, "rb") as raw:
                        lines = (
                            sanitize_line(line.rstrip(b"\r\n"))[0].decode(
                                "utf-8", errors="replace"
                            )
                            for line in raw
                        )
                        tstats = twitter_mod.ingest_capture(
                            lines,
                            lambda msg: handle(msg, bundle, sink),
                            keywords=keywords,
                            substring=substring,
                        )
                    partial = partial or tstats.malformed > 0
                    print(
                        f"run-all: capture {capture}: parsed={tstats.parsed} "
                        f"malformed={tstats.malformed} matched={tstats.matched}",
                        file=sys.stderr,
                    )

        for entry in config.get("irc_logs", []):
            stream_id = entry.get("stream_id") or f"irc:{entry['channel']}"
            bundle = bundle_for(stream_id)
            messages, istats = irc_mod.ingest_log(
                entry["path"],
                entry["channel"],
                stream_id,
                tz=entry.get("tz", "UTC"),
                strict=strict,
            )
            mode = "a" if bundle.messages_path in written_paths else "w"
            written_paths.add(bundle.messages_path)
            with open(bundle.messages_path, mode, encoding="utf-8") as sink:
                for msg in messages:
                    handle(msg, bundle, sink)
            partial = partial or istats.unparsable > 0
            print(
                f"run-all: irc {entry['path']}: messages={istats.messages} "
                f"dropped_network={istats.dropped_network} "
                f"unparsable={istats.unparsable}",
                file=sys.stderr,
            )
    finally:
        if annotated_out is not None:
            annotated_out.close()

    # Aggregate, flag gaps, and persist one series CSV per stream.
    all_series = []
    for stream_id in sorted(bundles):
        bundle = bundles[stream_id]
        flagged = series_mod.detect_gaps(bundle.counter.build(stream_id), theta, k)
        all_series.append(flagged)
        with open(out_dir / f"series_{_slug(stream_id)}.csv", "w", encoding="utf-8", newline="") as out:
            series_mod.write_daily_csv(flagged, out)

    price = series_mod.load_market_csv(config["price_csv"], series_mod.MarketMetric.PRICE_USD)
    volume = series_mod.load_market_csv(config["volume_csv"], series_mod.MarketMetric.VOLUME_USD)
    report = stats_mod.correlation_report(all_series, price, volume, exclude_outages)
    (out_dir / "report.json").write_text(stats_mod.report_to_json(report) + "\n", encoding="utf-8")
    suffix = "md" if format == "markdown" else "tsv"
    (out_dir / f"report.{suffix}").write_text(render_table(report, format), encoding="utf-8")
    partial = partial or any(row.has_error for row in report.rows)

    by_id = {s.stream_id: s for s in all_series}
    for plot in config.get("plots", []):
        stream_id = plot["series"]
        metric = plot["metric"]
        market = volume if metric == "volume" else price
        daily = by_id.get(stream_id)
        if daily is None:
            raise ValueError(f"plot requests unknown stream {stream_id!r}")
        plot_path = out_dir / f"plot_{_slug(stream_id)}_{metric}.csv"
        try:
            with open(plot_path, "w", encoding="utf-8", newline="") as out:
                emit_plot_series(daily, market, out)
        except EmptyOverlap as exc:
            plot_path.unlink(missing_ok=True)
            print(f"run-all: plot {stream_id}/{metric}: {exc}", file=sys.stderr)
            partial = True

    print(f"run-all: wrote {out_dir}/report.{suffix}", file=sys.stderr)
    return 1 if partial else 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coinbuzz", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sanitize", help="scrub non-ASCII \\uXXXX escapes, stdin to stdout")
    p.add_argument("--stats", action="store_true", help="print counters to stderr")
    p.set_defaults(func=_cmd_sanitize)

    p = sub.add_parser("parse-irc", help="parse an IRC channel log into messages JSONL")
    p.add_argument("--channel", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--strict", action="store_true", help="abort on the first unparsable line")
    p.add_argument("--tz", default="UTC", help="timezone the log was written in (default: UTC)")
    p.set_defaults(func=_cmd_parse_irc)

    p = sub.add_parser("ingest-tweets", help="filter a tweet capture into messages JSONL")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument(
        "--keywords", default="bitcoin",
        help="comma-separated keyword list (default: bitcoin)",
    )
    p.add_argument("--substring", action="store_true", help="match keywords as substrings")
    p.set_defaults(func=_cmd_ingest_tweets)

    p = sub.add_parser("annotate", help="annotate messages with tokens and gazetteer lookups")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--gazetteer", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("aggregate", help="bucket messages into a daily count series CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--stream-id", default="", help="pick one stream from a mixed file")
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("gaps", help="flag likely collection outages in a daily series CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument(
        "--theta", type=float, default=0.1,
        help="outage threshold fraction (default: 0.1)",
    )
    p.add_argument(
        "--k", type=int, default=7,
        help="rolling median window in days (default: 7)",
    )
    p.set_defaults(func=_cmd_gaps)

    p = sub.add_parser("correlate", help="correlate daily series against market CSVs")
    p.add_argument("--series", action="append", required=True, metavar="STREAM_ID=CSV")
    p.add_argument("--price", required=True)
    p.add_argument("--volume", required=True)
    p.add_argument("--exclude-outages", action="store_true")
    p.add_argument("--out", dest="outfile", default="", help="report JSON path (default stdout)")
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("report", help="render a report JSON as a table")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=("tsv", "markdown"), default="tsv")
    p.add_argument("--out", dest="outfile", default="", help="output path (default stdout)")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("plot-series", help="join a daily series with a market series into plot CSV")
    p.add_argument("--series", required=True, help="daily series CSV")
    p.add_argument("--market", required=True, help="market CSV")
    p.add_argument("--metric", choices=("price", "volume"), default="volume")
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=_cmd_plot_series)

    p = sub.add_parser("run-all", help="compose the whole pipeline from a config file")
    p.add_argument("--config", required=True, help="JSON (or TOML on 3.11+) config path")
    p.set_defaults(func=_cmd_run_all)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _FATAL as exc:
        print(f"coinbuzz: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
