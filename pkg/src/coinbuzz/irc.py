"""IRC client-log parsing and network-noise filtering.

Canonical log grammar, one event per line:

    chat:    [<Dow> <Mon> <D> <YYYY>] [<HH>:<MM>:<SS>] <<nick>>\\t<text>
    network: [<Dow> <Mon> <D> <YYYY>] [<HH>:<MM>:<SS>] *** <Subtype>: <free text>

Chat events become Messages; network housekeeping events (Join, Topic, Quit,
Mode, Created, Part, Nick, Notice) are dropped and counted. A `*** Word:`
line whose word is outside that set is surfaced as a chat event authored by
that word, so unknown server chatter is kept visible rather than silently
discarded. Other log dialects are future adapters; lines that do not match
the grammar are counted and either skipped (lenient, the default) or abort
the run (strict).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import IO, Iterable
from zoneinfo import ZoneInfo

from coinbuzz.message import MONTH_BY_ABBREV, Message
from coinbuzz.sanitize import sanitize_text

# The eight housekeeping subtypes filtered out of every channel log.
NETWORK_SUBTYPES = frozenset(
    {"Join", "Topic", "Quit", "Mode", "Created", "Part", "Nick", "Notice"}
)

_STAMP = r"\[(\w{3}) (\w{3}) (\d{1,2}) (\d{4})\] \[(\d{2}):(\d{2}):(\d{2})\]"
_CHAT_RE = re.compile(_STAMP + r" <([^>]+)>\t(.*)$")
_NETWORK_RE = re.compile(_STAMP + r" \*\*\* (\w+): (.*)$")


class EventKind(Enum):
    CHAT = "chat"
    NETWORK = "network"


class UnparsableLine(Exception):
    """A log line that matches neither the chat nor the network grammar."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


@dataclass(frozen=True, slots=True)
class IrcEvent:
    timestamp: datetime
    channel: str
    kind: EventKind
    subtype: str | None
    nick: str
    text: str


@dataclass
class IrcIngestStats:
    lines_in: int = 0
    parsed: int = 0
    messages: int = 0
    dropped_network: int = 0
    unparsable: int = 0
    blank: int = 0


def _event_timestamp(groups: tuple[str, ...], tz: ZoneInfo | timezone) -> datetime:
    _dow, mon, day, year, hh, mm, ss = groups
    month = MONTH_BY_ABBREV.get(mon)
    if month is None:
        raise ValueError(f"unknown month abbreviation {mon!r}")
    local = datetime(int(year), month, int(day), int(hh), int(mm), int(ss), tzinfo=tz)
    return local.astimezone(timezone.utc)


def parse_log_line(
    line: str,
    channel: str,
    line_no: int = 0,
    tz: ZoneInfo | timezone = timezone.utc,
    network_subtypes: frozenset[str] = NETWORK_SUBTYPES,
) -> IrcEvent | None:
    """Parse one log line into an IrcEvent; blank lines return None.

    Timestamps are interpreted in `tz` (log files rarely say) and normalized
    to UTC. Raises UnparsableLine for anything outside the grammar.
    """
    if not channel.startswith("#"):
        raise ValueError(f"channel must begin with '#': {channel!r}")
    if not line.strip():
        return None

    match = _CHAT_RE.match(line)
    if match:
        try:
            ts = _event_timestamp(match.groups()[:7], tz)
        except ValueError as exc:
            raise UnparsableLine(line_no, str(exc)) from exc
        return IrcEvent(ts, channel, EventKind.CHAT, None, match.group(8), match.group(9))

    match = _NETWORK_RE.match(line)
    if match:
        try:
            ts = _event_timestamp(match.groups()[:7], tz)
        except ValueError as exc:
            raise UnparsableLine(line_no, str(exc)) from exc
        word, rest = match.group(8), match.group(9)
        if word in network_subtypes:
            return IrcEvent(ts, channel, EventKind.NETWORK, word, "", rest)
        # Unknown server chatter: keep it, authored by the announcing word.
        return IrcEvent(ts, channel, EventKind.CHAT, None, word, rest)

    raise UnparsableLine(line_no, "does not match chat or network grammar")


def classify(event: IrcEvent, drop_subtypes: frozenset[str] = NETWORK_SUBTYPES) -> bool:
    """True to keep the event as a message, False to drop network noise."""
    return not (event.kind is EventKind.NETWORK and event.subtype in drop_subtypes)


def ingest_log(
    source: str | Path | IO[str] | Iterable[str],
    channel: str,
    stream_id: str | None = None,
    *,
    tz: str = "UTC",
    strict: bool = False,
) -> tuple[list[Message], IrcIngestStats]:
    """Parse a whole channel log into Messages plus ingest counters.

    Lenient mode (default) skips unparsable lines and counts them; strict
    mode re-raises the first UnparsableLine. Counters always satisfy
    lines_in == messages + dropped_network + unparsable + blank.
    """
    if stream_id is None:
        stream_id = f"irc:{channel}"
    zone = timezone.utc if tz == "UTC" else ZoneInfo(tz)

    close_after = False
    if isinstance(source, (str, Path)):
        source = open(source, "r", encoding="utf-8", errors="replace")
        close_after = True

    stats = IrcIngestStats()
    messages: list[Message] = []
    try:
        for line_no, line in enumerate(source, start=1):
            stats.lines_in += 1
            try:
                event = parse_log_line(line.rstrip("\r\n"), channel, line_no, zone)
            except UnparsableLine:
                if strict:
                    raise
                stats.unparsable += 1
                continue
            if event is None:
                stats.blank += 1
                continue
            stats.parsed += 1
            if not classify(event):
                stats.dropped_network += 1
                continue
            stats.messages += 1
            messages.append(
                Message(
                    stream_id=stream_id,
                    timestamp=event.timestamp,
                    author=event.nick,
                    text=sanitize_text(event.text),
                )
            )
    finally:
        if close_after:
            source.close()
    return messages, stats
