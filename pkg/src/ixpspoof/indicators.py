"""Markers of unspoofed traffic among flows classified invalid."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Mapping, Sequence

from .classifier import TrafficClass, variant_sort_key
from .flow_ingest import ICMP, TCP, UDP, FlowRecord, TcpFlags

# TLS record layer: content type 22 (handshake), major version 3
TLS_HANDSHAKE = 0x16
TLS_MAJOR = 0x03
ICMP_ECHO_REPLY = 0


@dataclass(frozen=True)
class IndicatorFlags:
    ssl_over_tcp: bool = False
    http_response: bool = False
    icmp_echo_reply: bool = False
    tcp_ack: bool = False
    malformed: bool = False

    def any_unspoofed(self) -> bool:
        return self.ssl_over_tcp or self.http_response or self.icmp_echo_reply or self.tcp_ack


INDICATORS = tuple(f.name for f in fields(IndicatorFlags))


def detect_indicators(flow: FlowRecord) -> IndicatorFlags:
    head = flow.payload_head or b""
    tcp = flow.proto == TCP
    return IndicatorFlags(
        ssl_over_tcp=tcp and len(head) >= 2 and head[0] == TLS_HANDSHAKE and head[1] == TLS_MAJOR,
        http_response=tcp and head.startswith(b"HTTP/"),
        icmp_echo_reply=flow.proto == ICMP and flow.icmp_type == ICMP_ECHO_REPLY,
        tcp_ack=tcp and bool(flow.tcp_flags & TcpFlags.ACK),
        malformed=((flow.proto in (TCP, UDP) and (flow.src_port == 0 or flow.dst_port == 0))
                   or flow.src == flow.dst),
    )


@dataclass(frozen=True)
class IndicatorSummary:
    """Packet-weighted indicator shares over invalid flows.

    ``fractions`` is None when the variant has no invalid packets.
    """

    variant: str
    invalid_packets: int
    counts: Mapping[str, int]
    fractions: Mapping[str, float] | None


def summarize(flows: Sequence[FlowRecord], verdicts: Sequence[TrafficClass],
              variant: str) -> IndicatorSummary:
    counts = dict.fromkeys(INDICATORS, 0)
    denom = 0
    for flow, cls in zip(flows, verdicts, strict=True):
        if cls is not TrafficClass.INVALID:
            continue
        denom += flow.packets
        for name, hit in zip(INDICATORS, astuple(detect_indicators(flow))):
            if hit:
                counts[name] += flow.packets
    fractions = {k: v / denom for k, v in counts.items()} if denom else None
    return IndicatorSummary(variant, denom, counts, fractions)


def write_indicator_csv(path: str | Path, summaries: Sequence[IndicatorSummary]) -> None:
    """One row per variant; undefined rows (no invalid packets) read ``NA``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,invalid_packets," + ",".join(INDICATORS) + "\n")
        for s in sorted(summaries, key=lambda s: variant_sort_key(s.variant)):
            if s.fractions is None:
                cells = ["NA"] * len(INDICATORS)
            else:
                cells = [repr(s.fractions[k]) for k in INDICATORS]
            fh.write(f"{s.variant},{s.invalid_packets}," + ",".join(cells) + "\n")

