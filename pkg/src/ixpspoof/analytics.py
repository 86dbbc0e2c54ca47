"""Aggregations behind the time series, per-member CCDF, size CDFs and traffic mix.

All outputs are plain data; the ``write_*`` helpers emit CSV with canonical
row order so repeated runs are byte-identical.
"""

from __future__ import annotations

from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .classifier import CLASSES, Counts, TrafficClass, variant_sort_key
from .flow_ingest import ICMP, TCP, UDP, FlowRecord

DEFAULT_UDP_PORTS = (53, 123, 161, 443, 19302)
DEFAULT_TCP_PORTS = (80, 443, 27015, 10100)
EPHEMERAL_MIN = 49152
ANOMALOUS = "anomalous"


@dataclass
class TimeSeries:
    bin_width: int
    start: int
    n_bins: int
    # variant -> class -> per-bin counts
    bins: dict[str, dict[TrafficClass, list[Counts]]] = field(default_factory=dict)
    outside: int = 0

    def bin_starts(self) -> list[int]:
        return [self.start + i * self.bin_width for i in range(self.n_bins)]

    def class_total(self, variant: str, cls: TrafficClass) -> Counts:
        out = Counts()
        for c in self.bins[variant][cls]:
            out += c
        return out


def time_series(flows: Sequence[FlowRecord], verdicts: Mapping[str, Sequence[TrafficClass]],
                bin_width: int, start: int | None = None, end: int | None = None) -> TimeSeries:
    """Bin flows by timestamp over ``[start, end)``.

    Without an explicit window the series spans the flows, starting at the
    bin boundary at or below the earliest timestamp.  The last bin may be
    shorter than ``bin_width``.  Flows outside an explicit window are
    counted in ``outside`` and otherwise ignored.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if start is None:
        start = min((f.timestamp for f in flows), default=0) // bin_width * bin_width
    if end is None:
        end = max((f.timestamp + 1 for f in flows), default=start)
    if end < start:
        raise ValueError("window end precedes start")
    n_bins = -(-(end - start) // bin_width)
    ts = TimeSeries(bin_width, start, n_bins)
    for name, classes in verdicts.items():
        ts.bins[name] = {c: [Counts() for _ in range(n_bins)] for c in CLASSES}
    for i, flow in enumerate(flows):
        if not start <= flow.timestamp < end:
            ts.outside += 1
            continue
        b = (flow.timestamp - start) // bin_width
        for name, classes in verdicts.items():
            ts.bins[name][classes[i]][b].add(flow)
    return ts


def _weight(flow: FlowRecord, weight: str) -> int:
    if weight == "packets":
        return flow.packets
    if weight == "bytes":
        return flow.bytes
    raise ValueError(f"unknown weight {weight!r}")


@dataclass
class MemberFractions:
    weight: str
    # member -> class name (including "anomalous") -> fraction
    fractions: dict[int, dict[str, float]]

    def ccdf(self, cls: str) -> list[tuple[float, float]]:
        """(fraction, share of members with at least that fraction), ascending."""
        values = sorted(f[cls] for f in self.fractions.values())
        n = len(values)
        out = []
        for v in sorted(set(values)):
            out.append((v, (n - bisect_left(values, v)) / n))
        return out


def member_fractions(flows: Sequence[FlowRecord], verdicts: Sequence[TrafficClass],
                     weight: str = "packets") -> MemberFractions:
    per_member: dict[int, Counter] = {}
    for flow, cls in zip(flows, verdicts, strict=True):
        per_member.setdefault(flow.member, Counter())[cls] += _weight(flow, weight)
    fractions = {}
    for member, counts in per_member.items():
        total = sum(counts.values())
        row = {c.value: counts[c] / total for c in CLASSES}
        row[ANOMALOUS] = (total - counts[TrafficClass.REGULAR]) / total
        fractions[member] = row
    return MemberFractions(weight, fractions)


def size_cdf(flows: Sequence[FlowRecord], verdicts: Sequence[TrafficClass]
             ) -> dict[TrafficClass, list[tuple[int, int, float]]]:
    """Per class: (size, cumulative packets, cumulative share) at each distinct size.

    Each flow contributes ``packets`` samples of its mean packet size.
    """
    hist: dict[TrafficClass, Counter] = {c: Counter() for c in CLASSES}
    for flow, cls in zip(flows, verdicts, strict=True):
        hist[cls][flow.packet_size] += flow.packets
    out = {}
    for cls, counter in hist.items():
        total = sum(counter.values())
        running = 0
        points = []
        for size in sorted(counter):
            running += counter[size]
            points.append((size, running, running / total))
        out[cls] = points
    return out


@dataclass
class TrafficMix:
    total_packets: int
    # proto label -> bucket -> packets; every proto has a "total" bucket
    packets: dict[str, dict[str, int]]

    def share(self, proto: str, bucket: str = "total") -> float:
        if not self.total_packets:
            return 0.0
        return self.packets[proto].get(bucket, 0) / self.total_packets

    def shares(self) -> dict[str, dict[str, float]]:
        return {p: {b: self.share(p, b) for b in buckets} for p, buckets in self.packets.items()}


def port_bucket(port: int, named: Sequence[int], ephemeral_min: int = EPHEMERAL_MIN) -> str:
    if port in named:
        return str(port)
    if port >= ephemeral_min:
        return "ephemeral"
    return "other"


def traffic_mix(flows: Sequence[FlowRecord], verdicts: Sequence[TrafficClass],
                udp_ports: Sequence[int] = DEFAULT_UDP_PORTS,
                tcp_ports: Sequence[int] = DEFAULT_TCP_PORTS,
                ephemeral_min: int = EPHEMERAL_MIN) -> TrafficMix:
    """Invalid packets broken down by protocol and destination-port bucket."""
    def buckets(named: Sequence[int]) -> dict[str, int]:
        return {**{str(p): 0 for p in named}, "ephemeral": 0, "other": 0, "total": 0}

    packets = {"icmp": {"total": 0}, "udp": buckets(udp_ports),
               "tcp": buckets(tcp_ports), "other": {"total": 0}}
    total = 0
    for flow, cls in zip(flows, verdicts, strict=True):
        if cls is not TrafficClass.INVALID:
            continue
        total += flow.packets
        if flow.proto == TCP:
            row, named = packets["tcp"], tcp_ports
        elif flow.proto == UDP:
            row, named = packets["udp"], udp_ports
        else:
            packets["icmp" if flow.proto == ICMP else "other"]["total"] += flow.packets
            continue
        row[port_bucket(flow.dst_port, named, ephemeral_min)] += flow.packets
        row["total"] += flow.packets
    return TrafficMix(total, packets)


def _ordered(variants) -> list[str]:
    return sorted(variants, key=variant_sort_key)


def write_timeseries_csv(path: str | Path, ts: TimeSeries, scale: float | None = None) -> None:
    cols = "variant,bin_start,class,packets,bytes,packets_upscaled,bytes_upscaled"
    if scale is not None:
        cols += ",packets_scaled,bytes_scaled"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cols + "\n")
        for name in _ordered(ts.bins):
            for i, bin_start in enumerate(ts.bin_starts()):
                for cls in CLASSES:
                    c = ts.bins[name][cls][i]
                    row = [name, str(bin_start), cls.value, str(c.packets), str(c.bytes),
                           str(c.packets_upscaled), str(c.bytes_upscaled)]
                    if scale is not None:
                        row += [repr(c.packets_upscaled * scale), repr(c.bytes_upscaled * scale)]
                    fh.write(",".join(row) + "\n")


def write_member_ccdf_csv(path: str | Path, fractions: Mapping[str, MemberFractions]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,class,fraction,share_of_members\n")
        for name in _ordered(fractions):
            for cls in ("bogon", "unrouted", "invalid", ANOMALOUS):
                for frac, share in fractions[name].ccdf(cls):
                    fh.write(f"{name},{cls},{frac!r},{share!r}\n")


def write_member_fractions_csv(path: str | Path, fractions: Mapping[str, MemberFractions]) -> None:
    cls_cols = [c.value for c in CLASSES] + [ANOMALOUS]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,member," + ",".join(cls_cols) + "\n")
        for name in _ordered(fractions):
            for member in sorted(fractions[name].fractions):
                row = fractions[name].fractions[member]
                fh.write(f"{name},{member}," + ",".join(repr(row[c]) for c in cls_cols) + "\n")


def write_size_cdf_csvs(outdir: str | Path,
                        cdfs: Mapping[str, Mapping[TrafficClass, list[tuple[int, int, float]]]]
                        ) -> list[Path]:
    paths = []
    for cls in CLASSES:
        path = Path(outdir) / f"size_cdf_{cls.value}.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("variant,size,packets,cdf\n")
            for name in _ordered(cdfs):
                for size, cum, share in cdfs[name][cls]:
                    fh.write(f"{name},{size},{cum},{share!r}\n")
        paths.append(path)
    return paths


def write_traffic_mix_csv(path: str | Path, mixes: Mapping[str, TrafficMix]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,proto,bucket,packets,share\n")
        for name in _ordered(mixes):
            mix = mixes[name]
            for proto in ("icmp", "udp", "tcp", "other"):
                for bucket, n in mix.packets[proto].items():
                    fh.write(f"{name},{proto},{bucket},{n},{mix.share(proto, bucket)!r}\n")
