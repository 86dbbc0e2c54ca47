"""Longest-prefix matching over routed prefixes, plus the bogon list."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Generic, Iterable, Iterator, Mapping, TypeVar

from .bgp_ingest import IpAddress, IpPrefix, parse_prefix
from .errors import ParseError

V = TypeVar("V")

RFC1918 = ("10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16")
RFC5735 = (
    "0.0.0.0/8", "127.0.0.0/8", "169.254.0.0/16", "192.0.0.0/24",
    "192.0.2.0/24", "198.18.0.0/15", "198.51.100.0/24", "203.0.113.0/24",
    "224.0.0.0/4", "240.0.0.0/4", "255.255.255.255/32",
)
RFC6598 = ("100.64.0.0/10",)
# Everything outside global unicast 2000::/3.
V6_NON_GLOBAL = ("::/3", "4000::/2", "8000::/1")

DEFAULT_BOGONS: tuple[IpPrefix, ...] = tuple(
    ipaddress.ip_network(p) for p in RFC1918 + RFC5735 + RFC6598 + V6_NON_GLOBAL)

_WIDTH = {4: 32, 6: 128}


class _Node(Generic[V]):
    __slots__ = ("key", "plen", "prefix", "value", "children")

    def __init__(self, key: int, plen: int, prefix: IpPrefix | None = None,
                 value: V | None = None) -> None:
        self.key = key
        self.plen = plen
        self.prefix = prefix
        self.value = value
        self.children: list[_Node[V] | None] = [None, None]


class PrefixTrie(Generic[V]):
    """Path-compressed binary trie for a single address family.

    Each stored prefix carries one value; inserting an existing prefix
    replaces the value unless a ``merge`` function is given.
    """

    def __init__(self, version: int = 4) -> None:
        self.version = version
        self.width = _WIDTH[version]
        self._root: _Node[V] = _Node(0, 0)
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def insert(self, prefix: IpPrefix, value: V, merge=None) -> None:
        if prefix.version != self.version:
            raise ValueError(f"IPv{prefix.version} prefix in IPv{self.version} trie")
        w = self.width
        key = int(prefix.network_address)
        plen = prefix.prefixlen
        node = self._root
        while True:
            if node.plen == plen:
                # node.key == key by the covering invariant
                if node.prefix is None:
                    node.prefix = prefix
                    node.value = value
                    self._size += 1
                elif merge is not None:
                    node.value = merge(node.value, value)
                else:
                    node.value = value
                return
            bit = (key >> (w - 1 - node.plen)) & 1
            child = node.children[bit]
            if child is None:
                node.children[bit] = _Node(key, plen, prefix, value)
                self._size += 1
                return
            common = min(plen, child.plen, w - (key ^ child.key).bit_length())
            if common == child.plen:
                node = child
                continue
            if common == plen:
                new = _Node(key, plen, prefix, value)
                new.children[(child.key >> (w - 1 - plen)) & 1] = child
                node.children[bit] = new
                self._size += 1
                return
            mask = ((1 << common) - 1) << (w - common)
            glue: _Node[V] = _Node(key & mask, common)
            glue.children[(key >> (w - 1 - common)) & 1] = _Node(key, plen, prefix, value)
            glue.children[(child.key >> (w - 1 - common)) & 1] = child
            node.children[bit] = glue
            self._size += 1
            return

    def longest_match(self, addr: int) -> tuple[IpPrefix, V] | None:
        """Longest stored prefix covering the integer address ``addr``."""
        w = self.width
        node = self._root
        best = node if node.prefix is not None else None
        while node.plen < w:
            child = node.children[(addr >> (w - 1 - node.plen)) & 1]
            if child is None or (addr ^ child.key) >> (w - child.plen):
                break
            if child.prefix is not None:
                best = child
            node = child
        if best is None:
            return None
        return best.prefix, best.value

    def covers(self, addr: int) -> bool:
        return self.longest_match(addr) is not None

    def items(self) -> Iterator[tuple[IpPrefix, V]]:
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node.prefix is not None:
                yield node.prefix, node.value
            stack.extend(c for c in reversed(node.children) if c is not None)


class SourceKind(str, Enum):
    BOGON = "bogon"
    UNROUTED = "unrouted"
    ROUTED = "routed"


@dataclass(frozen=True)
class SourceVerdict:
    kind: SourceKind
    origins: frozenset[int] = frozenset()
    matched_prefix: IpPrefix | None = None

    def __post_init__(self) -> None:
        if (self.kind is SourceKind.ROUTED) != bool(self.origins):
            raise ValueError("routed verdicts need origins, others must have none")


BOGON = SourceVerdict(SourceKind.BOGON)
UNROUTED = SourceVerdict(SourceKind.UNROUTED)


class PrefixIndex:
    """Routed-prefix index answering bogon / unrouted / origin queries.

    Default routes (``0.0.0.0/0``, ``::/0``) are dropped on build; they would
    make every address routed.
    """

    def __init__(self, origins: Mapping[IpPrefix, Iterable[int]],
                 bogons: Iterable[IpPrefix] = DEFAULT_BOGONS) -> None:
        self.bogons: tuple[IpPrefix, ...] = tuple(bogons)
        self._routed = {4: PrefixTrie[frozenset](4), 6: PrefixTrie[frozenset](6)}
        self._bogon = {4: PrefixTrie[bool](4), 6: PrefixTrie[bool](6)}
        for prefix in self.bogons:
            self._bogon[prefix.version].insert(prefix, True)
        for prefix, asns in origins.items():
            if prefix.prefixlen == 0:
                continue
            self._routed[prefix.version].insert(prefix, frozenset(asns), merge=frozenset.union)

    def routed_prefixes(self) -> dict[IpPrefix, frozenset[int]]:
        out: dict[IpPrefix, frozenset[int]] = {}
        for trie in self._routed.values():
            out.update(trie.items())
        return out

    def is_bogon(self, addr: IpAddress) -> bool:
        return self._bogon[addr.version].covers(int(addr))

    def longest_match(self, addr: IpAddress) -> tuple[IpPrefix, frozenset[int]] | None:
        return self._routed[addr.version].longest_match(int(addr))

    def judge(self, addr: IpAddress) -> SourceVerdict:
        a = int(addr)
        if self._bogon[addr.version].covers(a):
            return BOGON
        hit = self._routed[addr.version].longest_match(a)
        if hit is None:
            return UNROUTED
        prefix, origins = hit
        return SourceVerdict(SourceKind.ROUTED, origins, prefix)


def build_index(origins: Mapping[IpPrefix, Iterable[int]],
                bogons: Iterable[IpPrefix] = DEFAULT_BOGONS) -> PrefixIndex:
    return PrefixIndex(origins, bogons)


def judge_source(index: PrefixIndex, addr: IpAddress | str) -> SourceVerdict:
    """Bogon check first, then longest routed match, else unrouted."""
    if isinstance(addr, str):
        addr = ipaddress.ip_address(addr)
    return index.judge(addr)


def read_bogon_file(path: str | Path) -> list[IpPrefix]:
    prefixes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                prefixes.append(parse_prefix(line))
            except ParseError as exc:
                raise exc.with_context(lineno=lineno, source=str(path)) from None
    return prefixes
