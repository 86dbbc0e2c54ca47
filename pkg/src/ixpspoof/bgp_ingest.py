"""Route dump ingestion.

Collector dumps are consumed in a pipe-separated text form, one message per
line::

    timestamp|collector|peer_asn|kind|prefix|as_path

``kind`` is ``A`` (announce) or ``W`` (withdraw); ``as_path`` is a
space-separated ASN list and is empty for withdraws.  Lines starting with
``#`` and blank lines are ignored.  Converting ``bgpdump -m`` output to this
form is a matter of picking columns and is left to external tooling.
"""

from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Union

from .errors import ParseError

log = logging.getLogger(__name__)

IpPrefix = Union[ipaddress.IPv4Network, ipaddress.IPv6Network]
IpAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]

MAX_ASN = 2**32 - 1


def parse_prefix(text: str) -> IpPrefix:
    """Parse ``text`` into a canonical network (host bits zeroed)."""
    try:
        return ipaddress.ip_network(text.strip(), strict=False)
    except ValueError as exc:
        raise ParseError(str(exc), field="prefix") from None


def parse_asn(text: str) -> int:
    text = text.strip()
    if text.upper().startswith("AS"):
        text = text[2:]
    if "." in text:
        # asdot notation
        hi, _, lo = text.partition(".")
        if not (hi.isdigit() and lo.isdigit()):
            raise ParseError(f"bad ASN {text!r}", field="asn")
        asn = (int(hi) << 16) | int(lo)
    elif text.isdigit():
        asn = int(text)
    else:
        raise ParseError(f"bad ASN {text!r}", field="asn")
    if not 0 < asn <= MAX_ASN:
        raise ParseError(f"ASN {asn} out of range", field="asn")
    return asn


class AsSetError(ParseError):
    """Raised for paths containing AS_SET segments; such messages are skipped."""


class AsPath(tuple):
    """Immutable AS path with prepending collapsed.

    The last hop is the origin.
    """

    __slots__ = ()

    def __new__(cls, hops: Iterable[int]) -> "AsPath":
        collapsed: list[int] = []
        for asn in hops:
            if not 0 < asn <= MAX_ASN:
                raise ParseError(f"ASN {asn} out of range", field="as_path")
            if not collapsed or collapsed[-1] != asn:
                collapsed.append(asn)
        if not collapsed:
            raise ParseError("empty AS path", field="as_path")
        return super().__new__(cls, collapsed)

    @classmethod
    def parse(cls, text: str) -> "AsPath":
        if "{" in text or "}" in text:
            raise AsSetError("AS_SET in path", field="as_path")
        tokens = text.split()
        if not tokens:
            raise ParseError("announce with empty path", field="as_path")
        try:
            return cls(parse_asn(tok) for tok in tokens)
        except ParseError as exc:
            raise ParseError(exc.reason, field="as_path") from None

    @property
    def origin(self) -> int:
        return self[-1]

    def adjacencies(self) -> Iterator[frozenset[int]]:
        for a, b in zip(self, self[1:]):
            yield frozenset((a, b))

    def __str__(self) -> str:
        return " ".join(map(str, self))

    def __repr__(self) -> str:
        return f"AsPath({list(self)!r})"


class MessageKind(str, Enum):
    ANNOUNCE = "A"
    WITHDRAW = "W"


@dataclass(frozen=True)
class RouteMessage:
    timestamp: int
    collector: str
    peer: int
    kind: MessageKind
    prefix: IpPrefix
    path: AsPath | None = None

    def __post_init__(self) -> None:
        if self.kind is MessageKind.ANNOUNCE and self.path is None:
            raise ParseError("announce without path", field="as_path")
        if self.kind is MessageKind.WITHDRAW and self.path is not None:
            raise ParseError("withdraw with path", field="as_path")

    def key(self) -> tuple[str, int, IpPrefix]:
        return (self.collector, self.peer, self.prefix)


_FIELDS = ("timestamp", "collector", "peer_asn", "kind", "prefix", "as_path")


def parse_route_line(line: str, lineno: int | None = None) -> RouteMessage:
    """Parse one dump line into a :class:`RouteMessage`.

    Raises :class:`ParseError` naming the offending field (and ``lineno`` if
    given).  Paths with AS sets raise :class:`AsSetError`.
    """
    parts = line.rstrip("\r\n").split("|")
    if len(parts) != len(_FIELDS):
        raise ParseError(f"expected {len(_FIELDS)} fields, got {len(parts)}",
                         field="line", lineno=lineno)
    ts_s, collector, peer_s, kind_s, prefix_s, path_s = parts
    try:
        try:
            timestamp = int(ts_s)
        except ValueError:
            raise ParseError(f"bad timestamp {ts_s!r}", field="timestamp") from None
        if not collector:
            raise ParseError("empty collector", field="collector")
        try:
            peer = parse_asn(peer_s)
        except ParseError as exc:
            raise ParseError(exc.reason, field="peer_asn") from None
        try:
            kind = MessageKind(kind_s.strip().upper())
        except ValueError:
            raise ParseError(f"bad kind {kind_s!r}", field="kind") from None
        prefix = parse_prefix(prefix_s)
        if kind is MessageKind.ANNOUNCE:
            path = AsPath.parse(path_s)
        else:
            if path_s.strip():
                raise ParseError("withdraw carries a path", field="as_path")
            path = None
    except ParseError as exc:
        raise type(exc)(exc.reason, field=exc.field, lineno=lineno) from None
    return RouteMessage(timestamp, collector, peer, kind, prefix, path)


def format_route_message(msg: RouteMessage) -> str:
    path = "" if msg.path is None else str(msg.path)
    return f"{msg.timestamp}|{msg.collector}|{msg.peer}|{msg.kind.value}|{msg.prefix}|{path}"


@dataclass
class IngestStats:
    lines: int = 0
    messages: int = 0
    as_set_skipped: int = 0


def iter_route_file(path: str | Path, stats: IngestStats | None = None) -> Iterator[RouteMessage]:
    """Yield messages from one dump file, skipping comments and AS-set paths."""
    stats = stats if stats is not None else IngestStats()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stats.lines += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                msg = parse_route_line(line, lineno)
            except AsSetError:
                stats.as_set_skipped += 1
                continue
            except ParseError as exc:
                raise exc.with_context(source=str(path)) from None
            stats.messages += 1
            yield msg
    if stats.as_set_skipped:
        log.warning("%s: skipped %d messages with AS sets", path, stats.as_set_skipped)


def read_route_files(paths: Iterable[str | Path],
                     stats: IngestStats | None = None) -> Iterator[RouteMessage]:
    for path in paths:
        yield from iter_route_file(path, stats)


@dataclass(frozen=True)
class RouteTable:
    """Surviving announcements keyed by ``(collector, peer, prefix)``."""

    entries: Mapping[tuple[str, int, IpPrefix], AsPath]
    window: tuple[int, int] | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def feeds(self) -> set[tuple[str, int]]:
        return {(c, p) for c, p, _ in self.entries}

    def restrict_to_feeds(self, feeds: set[tuple[str, int]]) -> "RouteTable":
        kept = {k: v for k, v in self.entries.items() if (k[0], k[1]) in feeds}
        return RouteTable(kept, self.window)

    def to_messages(self, timestamp: int | None = None) -> list[RouteMessage]:
        """Render the table as announce messages in canonical order."""
        if timestamp is None:
            timestamp = self.window[0] if self.window else 0
        out = [RouteMessage(timestamp, c, p, MessageKind.ANNOUNCE, pfx, path)
               for (c, p, pfx), path in self.entries.items()]
        out.sort(key=_message_sort_key)
        return out


def _message_sort_key(msg: RouteMessage) -> tuple:
    return (msg.collector, msg.peer, msg.prefix.version,
            int(msg.prefix.network_address), msg.prefix.prefixlen)


def load_routes(messages: Iterable[RouteMessage],
                window: tuple[int, int] | None = None) -> RouteTable:
    """Replay messages into a :class:`RouteTable`.

    Per ``(collector, peer, prefix)`` key the latest message inside the
    (inclusive) window decides: an announce leaves its path, a withdraw
    leaves nothing.  On equal timestamps an announce beats a withdraw;
    between two announces the later one in stream order wins.
    """
    state: dict[tuple[str, int, IpPrefix], tuple[int, RouteMessage]] = {}
    for msg in messages:
        if window is not None and not window[0] <= msg.timestamp <= window[1]:
            continue
        key = msg.key()
        cur = state.get(key)
        if cur is not None:
            cur_ts, cur_msg = cur
            if msg.timestamp < cur_ts:
                continue
            if (msg.timestamp == cur_ts and msg.kind is MessageKind.WITHDRAW
                    and cur_msg.kind is MessageKind.ANNOUNCE):
                continue
        state[key] = (msg.timestamp, msg)
    entries = {k: m.path for k, (_, m) in state.items() if m.kind is MessageKind.ANNOUNCE}
    return RouteTable(entries, window)


def observed_adjacencies(table: RouteTable) -> set[frozenset[int]]:
    """Unordered ASN pairs adjacent on any surviving path."""
    adj: set[frozenset[int]] = set()
    for path in set(table.entries.values()):
        adj.update(path.adjacencies())
    return adj


def origins_for(table: RouteTable) -> dict[IpPrefix, set[int]]:
    origins: dict[IpPrefix, set[int]] = {}
    for (_, _, prefix), path in table.entries.items():
        origins.setdefault(prefix, set()).add(path.origin)
    return origins


def paths_by_prefix(table: RouteTable) -> dict[IpPrefix, set[AsPath]]:
    out: dict[IpPrefix, set[AsPath]] = {}
    for (_, _, prefix), path in table.entries.items():
        out.setdefault(prefix, set()).add(path)
    return out
