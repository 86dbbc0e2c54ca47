"""Per-member cones: naive (prefixes on paths), CAIDA customer cone, full cone.

Relationship files use the CAIDA serial-1 convention ``as1|as2|rel`` with
``-1`` meaning as1 is a provider of as2 and ``0`` meaning peers.  Org files
hold ``asn|org_id`` lines.
"""

from __future__ import annotations

import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .bgp_ingest import IpPrefix, RouteTable, parse_asn
from .errors import ConeVariantError, ParseError, UnknownMemberError

log = logging.getLogger(__name__)


class Rel(str, Enum):
    P2C = "p2c"
    P2P = "p2p"


@dataclass(frozen=True, order=True)
class RelationshipEdge:
    """``a`` is the provider when ``rel`` is P2C."""

    a: int
    b: int
    rel: Rel

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValueError(f"self-relationship for AS{self.a}")

    def pair(self) -> frozenset[int]:
        return frozenset((self.a, self.b))


OrgMap = Mapping[int, str]


class Variant(str, Enum):
    NAIVE = "naive"
    CAIDA = "caida"
    FULL = "full"


@dataclass(frozen=True)
class ConeSet:
    variant: Variant
    members: frozenset[int]
    as_cones: Mapping[int, frozenset[int]] = field(default_factory=dict)
    prefix_cones: Mapping[int, frozenset[IpPrefix]] = field(default_factory=dict)
    org_extended: bool = False
    # cone of an arbitrary AS (not only members); needed by the org extension
    resolver: Callable[[int], frozenset[int]] | None = field(
        default=None, repr=False, compare=False)

    @property
    def name(self) -> str:
        return self.variant.value + ("+org" if self.org_extended else "")

    def cone(self, member: int) -> frozenset:
        if member not in self.members:
            raise UnknownMemberError(member)
        if self.variant is Variant.NAIVE:
            return self.prefix_cones[member]
        return self.as_cones[member]


class _Graph:
    """Customer and peering adjacency built from relationship edges."""

    def __init__(self, edges: Iterable[RelationshipEdge],
                 adjacencies: Iterable[frozenset[int]] = ()) -> None:
        self.customers: dict[int, set[int]] = defaultdict(set)
        self.peers: dict[int, set[int]] = defaultdict(set)
        p2c_pairs: set[frozenset[int]] = set()
        for e in edges:
            if e.rel is Rel.P2C:
                self.customers[e.a].add(e.b)
                p2c_pairs.add(e.pair())
            else:
                self.peers[e.a].add(e.b)
                self.peers[e.b].add(e.a)
        for pair in adjacencies:
            if pair in p2c_pairs or len(pair) != 2:
                continue
            a, b = tuple(pair)
            self.peers[a].add(b)
            self.peers[b].add(a)
        self._cones: dict[int, frozenset[int]] = {}
        self._full: dict[int, frozenset[int]] = {}

    def customer_cone(self, asn: int) -> frozenset[int]:
        cone = self._cones.get(asn)
        if cone is None:
            seen = {asn}
            todo = [asn]
            while todo:
                for c in self.customers.get(todo.pop(), ()):
                    if c not in seen:
                        seen.add(c)
                        todo.append(c)
            cone = self._cones[asn] = frozenset(seen)
        return cone

    def peer_closure(self, asn: int) -> set[int]:
        seen = {asn}
        todo = deque([asn])
        while todo:
            for p in self.peers.get(todo.popleft(), ()):
                if p not in seen:
                    seen.add(p)
                    todo.append(p)
        return seen

    def full_cone(self, asn: int) -> frozenset[int]:
        # peering is symmetric, so every AS in a closure shares its full cone
        cone = self._full.get(asn)
        if cone is None:
            closure = self.peer_closure(asn)
            out: set[int] = set()
            for a in closure:
                out |= self.customer_cone(a)
            cone = frozenset(out)
            for a in closure:
                self._full[a] = cone
        return cone


def find_p2c_cycle(edges: Iterable[RelationshipEdge]) -> list[int] | None:
    """Return one provider->customer cycle as a node list, or None."""
    customers: dict[int, list[int]] = defaultdict(list)
    for e in edges:
        if e.rel is Rel.P2C:
            customers[e.a].append(e.b)
    WHITE, GREY, BLACK = 0, 1, 2
    color: dict[int, int] = defaultdict(int)
    for root in sorted(customers):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(sorted(customers[root])))]
        path = [root]
        color[root] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = BLACK
                stack.pop()
                path.pop()
            elif color[nxt] == GREY:
                return path[path.index(nxt):] + [nxt]
            elif color[nxt] == WHITE:
                color[nxt] = GREY
                stack.append((nxt, iter(sorted(customers[nxt]))))
                path.append(nxt)
    return None


def build_naive(table: RouteTable, members: Iterable[int]) -> ConeSet:
    """prefix_cones[m] holds every prefix with a surviving path through m."""
    members = frozenset(members)
    cones: dict[int, set[IpPrefix]] = {m: set() for m in members}
    for (_, _, prefix), path in table.entries.items():
        for asn in members.intersection(path):
            cones[asn].add(prefix)
    return ConeSet(Variant.NAIVE, members,
                   prefix_cones={m: frozenset(p) for m, p in cones.items()})


def build_caida(edges: Iterable[RelationshipEdge], members: Iterable[int]) -> ConeSet:
    """Customer cones: each member plus everything below it via p2c edges."""
    edges = list(edges)
    cycle = find_p2c_cycle(edges)
    if cycle is not None:
        log.warning("provider->customer cycle in relationship data: %s",
                    " -> ".join(map(str, cycle)))
    graph = _Graph(edges)
    members = frozenset(members)
    return ConeSet(Variant.CAIDA, members,
                   as_cones={m: graph.customer_cone(m) for m in members},
                   resolver=graph.customer_cone)


def build_full(edges: Iterable[RelationshipEdge], adjacencies: Iterable[frozenset[int]],
               members: Iterable[int]) -> ConeSet:
    """Customer cones unioned over the transitive peering closure of each member.

    The peering graph is every p2p edge plus every observed path adjacency
    that is not already a known p2c pair.
    """
    graph = _Graph(edges, adjacencies)
    members = frozenset(members)
    return ConeSet(Variant.FULL, members,
                   as_cones={m: graph.full_cone(m) for m in members},
                   resolver=graph.full_cone)


def apply_org_extension(cones: ConeSet, orgs: OrgMap) -> ConeSet:
    """Extend caida/full cones with multi-AS organisation siblings.

    ext(m) is the union of the cones of m's siblings (m included), closed
    under siblinghood.
    """
    if cones.variant is Variant.NAIVE:
        raise ConeVariantError(
            "the multi-AS organisation extension applies to caida and full cones, "
            "not to the prefix-based naive cone")
    if cones.resolver is None:
        raise ConeVariantError("cone set lacks a resolver for non-member ASes")
    by_org: dict[str, set[int]] = defaultdict(set)
    for asn, org in orgs.items():
        by_org[org].add(asn)

    def siblings(asn: int) -> set[int]:
        org = orgs.get(asn)
        return by_org[org] if org is not None else {asn}

    extended = {}
    for m in cones.members:
        base: set[int] = set()
        for s in siblings(m):
            base |= cones.as_cones[m] if s == m else cones.resolver(s)
        closed = set(base)
        for a in base:
            if a in orgs:
                closed |= by_org[orgs[a]]
        extended[m] = frozenset(closed)
    return replace(cones, as_cones=extended, org_extended=True)


def cone_contains(cones: ConeSet, member: int, origins: Iterable[int] = (),
                  prefix: IpPrefix | None = None) -> bool:
    """Whether traffic from a routed source may enter via ``member``.

    Naive cones test ``prefix``; AS cones accept when any origin is inside.
    Raises :class:`UnknownMemberError` for members the set was not built for.
    """
    cone = cones.cone(member)
    if cones.variant is Variant.NAIVE:
        return prefix in cone
    return not cone.isdisjoint(origins)


def parse_relationship_line(line: str) -> RelationshipEdge:
    parts = line.strip().split("|")
    if len(parts) < 3:
        raise ParseError(f"expected as1|as2|rel, got {line.strip()!r}", field="line")
    a, b = parse_asn(parts[0]), parse_asn(parts[1])
    rel_s = parts[2].strip()
    if rel_s == "-1":
        return RelationshipEdge(a, b, Rel.P2C)
    if rel_s == "0":
        return RelationshipEdge(a, b, Rel.P2P)
    if rel_s == "1":
        return RelationshipEdge(b, a, Rel.P2C)
    raise ParseError(f"unknown relationship {rel_s!r}", field="rel")


def format_relationship(edge: RelationshipEdge) -> str:
    return f"{edge.a}|{edge.b}|{-1 if edge.rel is Rel.P2C else 0}"


def read_relationships(path: str | Path) -> list[RelationshipEdge]:
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                edges.append(parse_relationship_line(line))
            except (ParseError, ValueError) as exc:
                reason = exc.reason if isinstance(exc, ParseError) else str(exc)
                raise ParseError(reason, lineno=lineno, source=str(path)) from None
    return edges


def read_orgs(path: str | Path) -> dict[int, str]:
    orgs: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.strip().split("|")
            if len(parts) != 2 or not parts[1]:
                raise ParseError("expected asn|org_id", lineno=lineno, source=str(path))
            try:
                asn = parse_asn(parts[0])
            except ParseError as exc:
                raise exc.with_context(lineno=lineno, source=str(path)) from None
            if orgs.get(asn, parts[1]) != parts[1]:
                raise ParseError(f"AS{asn} mapped to two organisations",
                                 lineno=lineno, source=str(path))
            orgs[asn] = parts[1]
    return orgs
