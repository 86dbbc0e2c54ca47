"""Synthetic topologies, valley-free routing and labelled traffic with ground truth.

The generated AS graph has a single root (index 0); every other AS gets at
least one provider with a lower index, so the provider->customer graph is
acyclic and every AS can reach every prefix.  Each AS owns one /24 out of
``20.0.0.0/8``.

Relationship knowledge is modelled as visibility-limited: the relationship
file handed to the cone builders contains the true relationship of every
link that appears on some surviving collector path, and nothing else.
Dropping collector feeds therefore hides both adjacencies and
relationships, which is how incomplete BGP visibility turns into false
positives.

By default the collectors sit at the IXP and take full tables from the
members.  A member's own table shows the links behind every sender whose
traffic it hands to the IXP, so the complete view yields no false positives
under the full cone; losing feeds removes exactly that evidence.
"""

from __future__ import annotations

import heapq
import ipaddress
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .bgp_ingest import AsPath, IpPrefix, RouteTable, observed_adjacencies, origins_for
from .classifier import ClassifiedStream, TrafficClass, classify_stream
from .cone_builder import (ConeSet, Rel, RelationshipEdge, apply_org_extension, build_caida,
                           build_full, build_naive)
from .flow_ingest import ICMP, TCP, UDP, FlowRecord, TcpFlags, parse_tcp_flags
from .prefix_index import build_index

BASE_ASN = 1000
PREFIX_BASE = int(ipaddress.IPv4Address("20.0.0.0"))
MAX_ASES = 1 << 16
UNROUTED_SPACE = ipaddress.ip_network("30.0.0.0/8")
BOGON_SPACE = ipaddress.ip_network("10.0.0.0/8")
DEFAULT_START = 1519084800  # 2018-02-20T00:00:00Z
WEEK = 7 * 86400

LEGIT, SPOOFED = "legit", "spoofed"


@dataclass(frozen=True)
class SynthTopology:
    ases: tuple[int, ...]
    prefixes: Mapping[int, IpPrefix]
    edges: tuple[RelationshipEdge, ...]
    ixp_members: tuple[int, ...]
    orgs: Mapping[int, str]
    seed: int

    def customers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {a: [] for a in self.ases}
        for e in self.edges:
            if e.rel is Rel.P2C:
                out[e.a].append(e.b)
        return out

    def providers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {a: [] for a in self.ases}
        for e in self.edges:
            if e.rel is Rel.P2C:
                out[e.b].append(e.a)
        return out

    def peers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {a: [] for a in self.ases}
        for e in self.edges:
            if e.rel is Rel.P2P:
                out[e.a].append(e.b)
                out[e.b].append(e.a)
        return out

    def relationship(self, a: int, b: int) -> str | None:
        """'c2p', 'p2c' or 'p2p' for the step a -> b, None without a link."""
        for e in self._edge_index().get(frozenset((a, b)), ()):
            if e.rel is Rel.P2P:
                return "p2p"
            return "p2c" if e.a == a else "c2p"
        return None

    def _edge_index(self) -> dict[frozenset[int], list[RelationshipEdge]]:
        idx = self.__dict__.get("_eidx")
        if idx is None:
            idx = {}
            for e in self.edges:
                idx.setdefault(e.pair(), []).append(e)
            object.__setattr__(self, "_eidx", idx)
        return idx

    def origin_of(self) -> dict[IpPrefix, int]:
        return {p: a for a, p in self.prefixes.items()}

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "ases": [{"asn": a, "prefix": str(self.prefixes[a])} for a in self.ases],
            "edges": [[e.a, e.b, e.rel.value] for e in self.edges],
            "ixp_members": list(self.ixp_members),
            "orgs": {str(a): o for a, o in sorted(self.orgs.items())},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SynthTopology":
        ases = tuple(int(x["asn"]) for x in doc["ases"])
        return cls(
            ases=ases,
            prefixes={int(x["asn"]): ipaddress.ip_network(x["prefix"]) for x in doc["ases"]},
            edges=tuple(RelationshipEdge(int(a), int(b), Rel(r)) for a, b, r in doc["edges"]),
            ixp_members=tuple(int(m) for m in doc["ixp_members"]),
            orgs={int(a): o for a, o in doc["orgs"].items()},
            seed=int(doc["seed"]),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "SynthTopology":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _prefix_for(index: int) -> IpPrefix:
    return ipaddress.ip_network((PREFIX_BASE + (index << 8), 24))


def gen_topology(n_ases: int, n_members: int, p2c_density: float, p2p_density: float,
                 org_fraction: float, seed: int) -> SynthTopology:
    """Random acyclic customer hierarchy with extra p2c and p2p links.

    AS ``i`` receives one mandatory provider drawn from ``[0, i)``; every
    other lower-to-higher pair becomes an extra p2c link with probability
    ``p2c_density``; every still-unrelated pair becomes a p2p link with
    probability ``p2p_density``.
    """
    if not 2 <= n_ases <= MAX_ASES:
        raise ValueError(f"n_ases must be in [2, {MAX_ASES}]")
    if not 1 <= n_members <= n_ases:
        raise ValueError("n_members must be in [1, n_ases]")
    for name, val in (("p2c_density", p2c_density), ("p2p_density", p2p_density),
                      ("org_fraction", org_fraction)):
        if not 0.0 <= val <= 1.0:
            raise ValueError(f"{name} must be in [0, 1]")
    rng = random.Random(seed)
    # ASNs are shuffled so that numeric tie-breaks do not follow the hierarchy
    asn = [BASE_ASN + k for k in rng.sample(range(n_ases), n_ases)]
    related: set[tuple[int, int]] = set()
    p2c_pairs: set[tuple[int, int]] = set()
    edges: list[RelationshipEdge] = []
    for i in range(1, n_ases):
        j = rng.randrange(i)
        related.add((j, i))
        p2c_pairs.add((j, i))
        edges.append(RelationshipEdge(asn[j], asn[i], Rel.P2C))
    for i in range(1, n_ases):
        for j in range(i):
            if (j, i) not in related and rng.random() < p2c_density:
                related.add((j, i))
                p2c_pairs.add((j, i))
                edges.append(RelationshipEdge(asn[j], asn[i], Rel.P2C))
    for i in range(1, n_ases):
        for j in range(i):
            if (j, i) not in related and rng.random() < p2p_density:
                related.add((j, i))
                edges.append(RelationshipEdge(asn[j], asn[i], Rel.P2P))
    # IXP members come from ASes with customers first, stubs only if needed
    has_customers = {j for j, _ in p2c_pairs}
    transit = [i for i in range(n_ases) if i in has_customers]
    stubs = [i for i in range(n_ases) if i not in has_customers]
    k = min(n_members, len(transit))
    picked = rng.sample(transit, k) + rng.sample(stubs, n_members - k)
    members = sorted(asn[i] for i in picked)
    n_org = round(org_fraction * n_ases)
    grouped = [asn[i] for i in rng.sample(range(n_ases), n_org)]
    orgs: dict[int, str] = {}
    for k in range(0, n_org, 2):
        group = grouped[k:k + 2]
        if len(group) == 1 and orgs:
            # odd one out joins the previous organisation
            orgs[group[0]] = orgs[grouped[k - 1]]
        else:
            for a in group:
                orgs[a] = f"org{k // 2 + 1}"
    return SynthTopology(
        ases=tuple(sorted(asn)),
        prefixes={a: _prefix_for(a - BASE_ASN) for a in asn},
        edges=tuple(sorted(edges)),
        ixp_members=tuple(members),
        orgs=orgs,
        seed=seed,
    )


BestPaths = dict[int, dict[int, tuple[int, ...]]]  # origin -> as -> path (as ... origin)


def best_paths(topo: SynthTopology) -> BestPaths:
    """Converged valley-free routes towards every origin.

    Preference: customer over peer over provider routes, then shorter
    paths, then the lower next-hop ASN.
    """
    customers, providers, peers = topo.customers(), topo.providers(), topo.peers()
    out: BestPaths = {}
    for origin in topo.ases:
        nexthop: dict[int, int | None] = {origin: None}
        length = {origin: 0}
        # customer routes climb provider links level by level
        level = [origin]
        has_customer_route = {origin}
        while level:
            offers: dict[int, int] = {}
            for c in level:
                for p in providers[c]:
                    if p not in length and (p not in offers or c < offers[p]):
                        offers[p] = c
            depth = length[level[0]] + 1
            for p, c in offers.items():
                nexthop[p], length[p] = c, depth
                has_customer_route.add(p)
            level = sorted(offers)
        # peer routes: one hop across from an AS holding a customer route
        peer_offers: dict[int, tuple[int, int]] = {}
        for a in has_customer_route:
            for p in peers[a]:
                if p in length:
                    continue
                cand = (length[a] + 1, a)
                if p not in peer_offers or cand < peer_offers[p]:
                    peer_offers[p] = cand
        for p, (ln, a) in peer_offers.items():
            nexthop[p], length[p] = a, ln
        # provider routes descend to customers, shortest first
        heap = [(length[a], a) for a in length]
        heapq.heapify(heap)
        while heap:
            ln, a = heapq.heappop(heap)
            if length[a] != ln:
                continue
            for c in customers[a]:
                if c not in length:
                    nexthop[c], length[c] = a, ln + 1
                    heapq.heappush(heap, (ln + 1, c))
        paths: dict[int, tuple[int, ...]] = {}
        for a in sorted(length, key=length.__getitem__):
            nh = nexthop[a]
            paths[a] = (a,) if nh is None else (a,) + paths[nh]
        out[origin] = paths
    return out


def collector_name(i: int, n_collectors: int) -> str:
    return f"rc{i % n_collectors:02d}"


def propagate_routes(topo: SynthTopology, vantages: Sequence[int] | None = None,
                     n_collectors: int = 4, feed: str = "full",
                     timestamp: int = DEFAULT_START - 86400) -> tuple[RouteTable, BestPaths]:
    """Collector view of converged routing.

    Each vantage AS feeds into collector ``rcNN`` (assigned round-robin)
    either its best path for every prefix (``feed="full"``) or only its own
    prefix and routes learned from customers (``feed="customer"``, the
    partial feed a peer would get).  The IXP members are the vantages by
    default.
    """
    if feed not in ("full", "customer"):
        raise ValueError(f"unknown feed type {feed!r}")
    best = best_paths(topo)
    vantages = list(topo.ixp_members if vantages is None else vantages)
    customers = {a: set(cs) for a, cs in topo.customers().items()}
    entries = {}
    for i, v in enumerate(vantages):
        collector = collector_name(i, n_collectors)
        for origin in topo.ases:
            path = best[origin].get(v)
            if path is None:
                continue
            if feed == "customer" and len(path) > 1 and path[1] not in customers[v]:
                continue
            entries[(collector, v, topo.prefixes[origin])] = AsPath(path)
    window = (timestamp, timestamp + WEEK + 2 * 86400)
    return RouteTable(entries, window), best


def drop_visibility(routes: RouteTable, loss_fraction: float, seed: int) -> RouteTable:
    """Remove ``floor(loss_fraction * feeds)`` collector feeds.

    Feeds are removed in a seed-determined order, so for a fixed seed a
    higher loss removes a superset of feeds.
    """
    if not 0.0 <= loss_fraction < 1.0:
        raise ValueError("loss_fraction must be in [0, 1)")
    feeds = sorted(routes.feeds())
    random.Random(seed).shuffle(feeds)
    n_drop = int(loss_fraction * len(feeds))
    return routes.restrict_to_feeds(set(feeds[n_drop:]))


def visible_relationships(topo: SynthTopology, routes: RouteTable) -> list[RelationshipEdge]:
    """True relationships of the links seen on surviving paths."""
    seen = observed_adjacencies(routes)
    return [e for e in topo.edges if e.pair() in seen]


@dataclass(frozen=True)
class LabeledFlow:
    flow: FlowRecord
    truth: str
    sender: int
    # AS owning the source address; None for bogon/unrouted forgeries
    claimed_origin: int | None


def ixp_crossings(topo: SynthTopology, best: BestPaths) -> list[tuple[int, int, int]]:
    """All (sender, destination, ingress member) triples.

    A route crosses the IXP at its first hop ``x -> y`` between two
    members, provided the route from the sender up to ``x`` takes no
    provider-to-customer step.  The sender then lies in the customer cone
    of ``x`` or of an AS peering with ``x``, i.e. inside the full cone of
    ``x`` when nothing is hidden.
    """
    members = set(topo.ixp_members)
    out = []
    for d in topo.ases:
        for s in topo.ases:
            if s == d or s not in best[d]:
                continue
            path = best[d][s]
            for i, (x, y) in enumerate(zip(path, path[1:])):
                if x in members and y in members:
                    if all(topo.relationship(a, b) != "p2c" for a, b in zip(path[:i], path[1:i + 1])):
                        out.append((s, d, x))
                    break
    out.sort()
    return out


def _host_in(prefix: IpPrefix, rng: random.Random) -> ipaddress.IPv4Address:
    size = prefix.num_addresses
    offset = rng.randrange(1, size - 1) if size > 2 else 0
    return prefix.network_address + offset


_TLS_HEAD = bytes.fromhex("160303") + b"\x00\x7a\x02\x00\x00\x76\x03\x03"
_HTTP_HEAD = b"HTTP/1.1 200 OK\r\nContent-Type: text/html\r\n"


def _legit_traffic(rng: random.Random) -> dict:
    r = rng.random()
    if r < 0.70:
        port = rng.choice((80, 443, 443, 443))
        reply = rng.random() < 0.5
        flags = rng.choice(("A", "PA", "FA")) if reply else rng.choice(("A", "PA", "S"))
        payload = None
        if reply and "P" in flags:
            payload = _TLS_HEAD if port == 443 else _HTTP_HEAD
        client = rng.randrange(49152, 65536)
        sport, dport = (port, client) if reply else (client, port)
        size = rng.choice((52, 1420, 1500, 1500))
        return dict(proto=TCP, src_port=sport, dst_port=dport,
                    tcp_flags=parse_tcp_flags(flags),
                    payload_head=payload, size=size)
    if r < 0.95:
        return dict(proto=UDP, src_port=rng.randrange(1024, 65536),
                    dst_port=rng.choice((443, 443, 53, 19302, 123)),
                    size=rng.choice((80, 1250, 1350)))
    return dict(proto=ICMP, icmp_type=rng.choice((0, 8)), size=84)


def _spoofed_traffic(rng: random.Random) -> dict:
    r = rng.random()
    if r < 0.6:
        return dict(proto=UDP, src_port=rng.randrange(1024, 65536),
                    dst_port=rng.choice((53, 123, 161, 19)), size=rng.choice((64, 76, 90)))
    if r < 0.95:
        return dict(proto=TCP, src_port=rng.randrange(1024, 65536),
                    dst_port=rng.choice((80, 443, 27015)), tcp_flags=TcpFlags.SYN, size=60)
    return dict(proto=ICMP, icmp_type=8, size=rng.choice((64, 1000)))


def gen_flows(topo: SynthTopology, best: BestPaths, n_flows: int, spoof_rate: float,
              seed: int, start: int = DEFAULT_START, duration: int = WEEK,
              sample_rate: int = 1, include_bogon: bool = False,
              include_unrouted: bool = False) -> list[LabeledFlow]:
    """Labelled flows over IXP crossings.

    Spoofed flows keep the sender and path of a legitimate flow but carry a
    source address from a prefix of another AS (or, if enabled, from bogon
    or unannounced space).
    """
    if not 0.0 <= spoof_rate <= 1.0:
        raise ValueError("spoof_rate must be in [0, 1]")
    crossings = ixp_crossings(topo, best)
    if not crossings and n_flows:
        raise ValueError("no route crosses the IXP; add members or links")
    rng = random.Random(seed)
    extra_pools = ([BOGON_SPACE] if include_bogon else []) + \
                  ([UNROUTED_SPACE] if include_unrouted else [])
    out = []
    for _ in range(n_flows):
        s, d, ingress = crossings[rng.randrange(len(crossings))]
        spoofed = rng.random() < spoof_rate
        claimed: int | None = s
        if spoofed:
            k = rng.randrange(len(topo.ases) - 1 + len(extra_pools))
            if k < len(topo.ases) - 1:
                others = [a for a in topo.ases if a != s]
                claimed = others[k]
                src = _host_in(topo.prefixes[claimed], rng)
            else:
                claimed = None
                src = _host_in(extra_pools[k - len(topo.ases) + 1], rng)
            traffic = _spoofed_traffic(rng)
        else:
            src = _host_in(topo.prefixes[s], rng)
            traffic = _legit_traffic(rng)
        dst = _host_in(topo.prefixes[d], rng)
        size = traffic.pop("size")
        packets = rng.randint(1, 20)
        flow = FlowRecord(timestamp=start + rng.randrange(duration), member=ingress,
                          src=src, dst=dst, bytes=size * packets, packets=packets,
                          sample_rate=sample_rate, **traffic)
        out.append(LabeledFlow(flow, SPOOFED if spoofed else LEGIT, s, claimed))
    return out


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def sanitized(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def precision(self) -> float | None:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self) -> float | None:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "sanitized": self.sanitized, "precision": self.precision, "recall": self.recall}


EvalResult = dict[str, Confusion]


def evaluate(labeled: Sequence[LabeledFlow] | Sequence[str],
             verdicts: Mapping[str, Sequence[TrafficClass]]) -> EvalResult:
    """Confusion counts per variant over sanitized (invalid or regular) flows.

    ``labeled`` may be LabeledFlows or bare truth labels.
    """
    truths = [x if isinstance(x, str) else x.truth for x in labeled]
    result = {}
    for name, classes in verdicts.items():
        tp = fp = tn = fn = 0
        for truth, cls in zip(truths, classes, strict=True):
            if cls not in (TrafficClass.INVALID, TrafficClass.REGULAR):
                continue
            positive = cls is TrafficClass.INVALID
            if truth == SPOOFED:
                tp, fn = tp + positive, fn + (not positive)
            else:
                fp, tn = fp + positive, tn + (not positive)
        result[name] = Confusion(tp, fp, tn, fn)
    return result


def build_cone_sets(topo: SynthTopology, routes: RouteTable,
                    variants: Iterable[str] = ("naive", "caida", "full"),
                    relationships: Sequence[RelationshipEdge] | None = None) -> dict[str, ConeSet]:
    """Cones for the IXP members from what the (possibly reduced) table shows."""
    if relationships is None:
        relationships = visible_relationships(topo, routes)
    members = topo.ixp_members
    out: dict[str, ConeSet] = {}
    base: dict[str, ConeSet] = {}
    for name in variants:
        kind = name.split("+")[0]
        if kind not in base:
            if kind == "naive":
                base[kind] = build_naive(routes, members)
            elif kind == "caida":
                base[kind] = build_caida(relationships, members)
            elif kind == "full":
                base[kind] = build_full(relationships, observed_adjacencies(routes), members)
            else:
                raise ValueError(f"unknown variant {name!r}")
        out[name] = apply_org_extension(base[kind], topo.orgs) if name.endswith("+org") else base[kind]
    return out


@dataclass
class Experiment:
    routes: RouteTable
    cones: dict[str, ConeSet]
    classified: ClassifiedStream
    evaluation: EvalResult
    labeled: list[LabeledFlow] = field(repr=False)


def run_experiment(topo: SynthTopology, n_flows: int, spoof_rate: float, loss_fraction: float,
                   seed: int, variants: Iterable[str] = ("naive", "caida", "full"),
                   flow_seed: int | None = None, best: BestPaths | None = None,
                   full_routes: RouteTable | None = None, feed: str = "full") -> Experiment:
    """Generate traffic, hide part of the routing view, classify, score."""
    if full_routes is None or best is None:
        full_routes, best = propagate_routes(topo, feed=feed)
    labeled = gen_flows(topo, best, n_flows, spoof_rate, seed if flow_seed is None else flow_seed)
    routes = drop_visibility(full_routes, loss_fraction, seed) if loss_fraction else full_routes
    cones = build_cone_sets(topo, routes, variants)
    index = build_index(origins_for(routes))
    classified = classify_stream([lf.flow for lf in labeled], index, cones)
    return Experiment(routes, cones, classified, evaluate(labeled, classified.verdicts), labeled)


def write_labels_csv(path: str | Path, labeled: Sequence[LabeledFlow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("flow_line_no,truth,sender,claimed_origin\n")
        for i, lf in enumerate(labeled, 1):
            claimed = "" if lf.claimed_origin is None else str(lf.claimed_origin)
            fh.write(f"{i},{lf.truth},{lf.sender},{claimed}\n")


def read_labels_csv(path: str | Path) -> list[str]:
    truths: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["flow_line_no", "truth"]:
            raise ValueError(f"{path}: unexpected label header")
        for line in fh:
            if line.strip():
                parts = line.strip().split(",")
                if parts[1] not in (LEGIT, SPOOFED):
                    raise ValueError(f"{path}: bad truth label {parts[1]!r}")
                truths[int(parts[0])] = parts[1]
    return [truths[i] for i in range(1, len(truths) + 1)]
