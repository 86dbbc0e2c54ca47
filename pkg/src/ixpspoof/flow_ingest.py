"""Sampled flow records in a CSV interchange form.

Header (required, validated)::

    timestamp,member,src,dst,proto,src_port,dst_port,tcp_flags,icmp_type,icmp_code,bytes,packets,sample_rate,payload_hex

``proto`` is ``tcp``, ``udp``, ``icmp`` or a decimal protocol number;
``tcp_flags`` is a string over ``SAFRPU``; ``payload_hex`` holds at most 64
bytes of packet payload head and may be empty.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from enum import IntFlag
from pathlib import Path
from typing import Iterable, Iterator

from .bgp_ingest import IpAddress, parse_asn
from .errors import ParseError

HEADER = ("timestamp", "member", "src", "dst", "proto", "src_port", "dst_port",
          "tcp_flags", "icmp_type", "icmp_code", "bytes", "packets", "sample_rate",
          "payload_hex")

MAX_PAYLOAD_HEAD = 64

TCP, UDP, ICMP = 6, 17, 1
_PROTO_NAMES = {"tcp": TCP, "udp": UDP, "icmp": ICMP}
_PROTO_LABELS = {v: k for k, v in _PROTO_NAMES.items()}


class TcpFlags(IntFlag):
    NONE = 0
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10
    URG = 0x20


_FLAG_LETTERS = {"S": TcpFlags.SYN, "A": TcpFlags.ACK, "F": TcpFlags.FIN,
                 "R": TcpFlags.RST, "P": TcpFlags.PSH, "U": TcpFlags.URG}
_LETTER_ORDER = "SAFRPU"


def parse_tcp_flags(text: str) -> TcpFlags:
    flags = TcpFlags.NONE
    for ch in text.strip().upper():
        try:
            flags |= _FLAG_LETTERS[ch]
        except KeyError:
            raise ParseError(f"unknown TCP flag {ch!r}", field="tcp_flags") from None
    return flags


def format_tcp_flags(flags: TcpFlags) -> str:
    return "".join(ch for ch in _LETTER_ORDER if flags & _FLAG_LETTERS[ch])


def proto_label(proto: int) -> str:
    return _PROTO_LABELS.get(proto, str(proto))


@dataclass(frozen=True)
class FlowRecord:
    timestamp: int
    member: int
    src: IpAddress
    dst: IpAddress
    proto: int
    src_port: int = 0
    dst_port: int = 0
    tcp_flags: TcpFlags = TcpFlags.NONE
    icmp_type: int = 0
    icmp_code: int = 0
    bytes: int = 1
    packets: int = 1
    sample_rate: int = 1
    payload_head: bytes | None = None

    def __post_init__(self) -> None:
        if self.packets < 1:
            raise ParseError("packets must be >= 1", field="packets")
        if self.bytes < self.packets:
            raise ParseError("bytes must be >= packets", field="bytes")
        if self.sample_rate < 1:
            raise ParseError("sample_rate must be >= 1", field="sample_rate")
        for name in ("src_port", "dst_port"):
            if not 0 <= getattr(self, name) <= 0xFFFF:
                raise ParseError("port out of range", field=name)
        for name in ("icmp_type", "icmp_code"):
            if not 0 <= getattr(self, name) <= 0xFF:
                raise ParseError("value out of range", field=name)
        if self.proto == ICMP and (self.src_port or self.dst_port):
            raise ParseError("ICMP flows carry no ports", field="src_port")
        if self.proto != TCP and self.tcp_flags:
            raise ParseError("TCP flags on a non-TCP flow", field="tcp_flags")
        if self.proto != ICMP and (self.icmp_type or self.icmp_code):
            raise ParseError("ICMP type/code on a non-ICMP flow", field="icmp_type")
        if self.payload_head is not None and len(self.payload_head) > MAX_PAYLOAD_HEAD:
            raise ParseError(f"payload head longer than {MAX_PAYLOAD_HEAD} bytes",
                             field="payload_hex")

    @property
    def packet_size(self) -> int:
        """Mean bytes per packet, rounded half up and clamped to 1..65535."""
        size = (2 * self.bytes + self.packets) // (2 * self.packets)
        return min(max(size, 1), 0xFFFF)


def _int_field(text: str, name: str, default: int | None = None) -> int:
    text = text.strip()
    if not text:
        if default is None:
            raise ParseError("missing value", field=name)
        return default
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"not an integer: {text!r}", field=name) from None


def _parse_proto(text: str) -> int:
    text = text.strip().lower()
    if text in _PROTO_NAMES:
        return _PROTO_NAMES[text]
    if text.isdigit() and 0 <= int(text) <= 255:
        return int(text)
    raise ParseError(f"unknown protocol {text!r}", field="proto")


def parse_flow_line(line: str, lineno: int | None = None) -> FlowRecord:
    parts = line.rstrip("\r\n").split(",")
    try:
        if len(parts) != len(HEADER):
            raise ParseError(f"expected {len(HEADER)} fields, got {len(parts)}", field="line")
        (ts, member, src, dst, proto, sport, dport, flags, itype, icode,
         nbytes, npkts, rate, payload_hex) = parts
        try:
            member_asn = parse_asn(member)
        except ParseError as exc:
            raise ParseError(exc.reason, field="member") from None
        addrs = []
        for name, text in (("src", src), ("dst", dst)):
            try:
                addrs.append(ipaddress.ip_address(text.strip()))
            except ValueError:
                raise ParseError(f"bad address {text!r}", field=name) from None
        payload_hex = payload_hex.strip()
        if len(payload_hex) % 2:
            raise ParseError("odd-length hex", field="payload_hex")
        try:
            payload = bytes.fromhex(payload_hex) if payload_hex else None
        except ValueError:
            raise ParseError("invalid hex", field="payload_hex") from None
        return FlowRecord(
            timestamp=_int_field(ts, "timestamp"),
            member=member_asn,
            src=addrs[0],
            dst=addrs[1],
            proto=_parse_proto(proto),
            src_port=_int_field(sport, "src_port", 0),
            dst_port=_int_field(dport, "dst_port", 0),
            tcp_flags=parse_tcp_flags(flags),
            icmp_type=_int_field(itype, "icmp_type", 0),
            icmp_code=_int_field(icode, "icmp_code", 0),
            bytes=_int_field(nbytes, "bytes"),
            packets=_int_field(npkts, "packets"),
            sample_rate=_int_field(rate, "sample_rate"),
            payload_head=payload,
        )
    except ParseError as exc:
        raise exc.with_context(lineno=lineno) from None


def format_flow_record(flow: FlowRecord) -> str:
    return ",".join((
        str(flow.timestamp), str(flow.member), str(flow.src), str(flow.dst),
        proto_label(flow.proto), str(flow.src_port), str(flow.dst_port),
        format_tcp_flags(flow.tcp_flags), str(flow.icmp_type), str(flow.icmp_code),
        str(flow.bytes), str(flow.packets), str(flow.sample_rate),
        flow.payload_head.hex() if flow.payload_head else "",
    ))


def header_line() -> str:
    return ",".join(HEADER)


def iter_flow_file(path: str | Path) -> Iterator[FlowRecord]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if tuple(h.strip() for h in first.rstrip("\r\n").split(",")) != HEADER:
            raise ParseError(f"header must be {header_line()!r}", lineno=1, source=str(path))
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            try:
                yield parse_flow_line(line, lineno)
            except ParseError as exc:
                raise exc.with_context(source=str(path)) from None


def read_flow_files(paths: Iterable[str | Path]) -> list[FlowRecord]:
    """Concatenate flows from every file, in file order."""
    flows: list[FlowRecord] = []
    for path in paths:
        flows.extend(iter_flow_file(path))
    return flows


def write_flow_file(path: str | Path, flows: Iterable[FlowRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header_line() + "\n")
        for flow in flows:
            fh.write(format_flow_record(flow) + "\n")


def upscale(flow: FlowRecord) -> tuple[int, int]:
    """(bytes, packets) compensated for sampling."""
    return flow.bytes * flow.sample_rate, flow.packets * flow.sample_rate
