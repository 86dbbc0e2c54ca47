"""Flow classification into bogon / unrouted / invalid / regular."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .cone_builder import ConeSet, Variant
from .flow_ingest import FlowRecord
from .prefix_index import PrefixIndex, SourceKind, SourceVerdict


class TrafficClass(str, Enum):
    BOGON = "bogon"
    UNROUTED = "unrouted"
    INVALID = "invalid"
    REGULAR = "regular"


CLASSES: tuple[TrafficClass, ...] = tuple(TrafficClass)

VARIANT_ORDER = ("naive", "caida", "caida+org", "full", "full+org")


def variant_sort_key(name: str) -> tuple[int, str]:
    try:
        return VARIANT_ORDER.index(name), name
    except ValueError:
        return len(VARIANT_ORDER), name


def _in_cone(cones: ConeSet, member: int, verdict: SourceVerdict) -> bool:
    if member not in cones.members:
        # members never seen in routing data: cone {member}, naive cone empty
        if cones.variant is Variant.NAIVE:
            return False
        return member in verdict.origins
    if cones.variant is Variant.NAIVE:
        return verdict.matched_prefix in cones.prefix_cones[member]
    return not cones.as_cones[member].isdisjoint(verdict.origins)


def _class_for(verdict: SourceVerdict, member: int, cones: ConeSet) -> TrafficClass:
    if verdict.kind is SourceKind.BOGON:
        return TrafficClass.BOGON
    if verdict.kind is SourceKind.UNROUTED:
        return TrafficClass.UNROUTED
    return TrafficClass.REGULAR if _in_cone(cones, member, verdict) else TrafficClass.INVALID


def classify_flow(flow: FlowRecord, index: PrefixIndex, cones: ConeSet) -> TrafficClass:
    """Sanitise (bogon, then unrouted) before the cone check."""
    return _class_for(index.judge(flow.src), flow.member, cones)


@dataclass
class Counts:
    flows: int = 0
    packets: int = 0
    bytes: int = 0
    packets_upscaled: int = 0
    bytes_upscaled: int = 0

    def add(self, flow: FlowRecord) -> None:
        self.flows += 1
        self.packets += flow.packets
        self.bytes += flow.bytes
        self.packets_upscaled += flow.packets * flow.sample_rate
        self.bytes_upscaled += flow.bytes * flow.sample_rate

    def __iadd__(self, other: "Counts") -> "Counts":
        self.flows += other.flows
        self.packets += other.packets
        self.bytes += other.bytes
        self.packets_upscaled += other.packets_upscaled
        self.bytes_upscaled += other.bytes_upscaled
        return self

    def as_dict(self) -> dict[str, int]:
        return {"flows": self.flows, "packets": self.packets, "bytes": self.bytes,
                "packets_upscaled": self.packets_upscaled,
                "bytes_upscaled": self.bytes_upscaled}


@dataclass
class ClassTotals:
    per_class: dict[TrafficClass, Counts] = field(
        default_factory=lambda: {c: Counts() for c in CLASSES})

    def __getitem__(self, cls: TrafficClass) -> Counts:
        return self.per_class[cls]

    def total(self) -> Counts:
        out = Counts()
        for c in CLASSES:
            out += self.per_class[c]
        return out

    def merge(self, other: "ClassTotals") -> "ClassTotals":
        out = ClassTotals()
        for c in CLASSES:
            out.per_class[c] += self.per_class[c]
            out.per_class[c] += other.per_class[c]
        return out

    def shares(self, denominator: str = "total") -> dict[str, dict[str, float | None]]:
        """Fractions of bytes/packets (raw and upscaled) per class.

        With ``denominator="sanitized"`` invalid and regular are relative to
        non-bogon, non-unrouted traffic; bogon and unrouted stay relative to
        the whole stream.
        """
        total = self.total()
        sanitized = Counts()
        sanitized += self.per_class[TrafficClass.INVALID]
        sanitized += self.per_class[TrafficClass.REGULAR]
        out: dict[str, dict[str, float | None]] = {}
        for c in CLASSES:
            base = sanitized if (denominator == "sanitized" and c in
                                 (TrafficClass.INVALID, TrafficClass.REGULAR)) else total
            counts = self.per_class[c]
            out[c.value] = {
                key: (getattr(counts, key) / getattr(base, key)) if getattr(base, key) else None
                for key in ("bytes", "packets", "bytes_upscaled", "packets_upscaled")
            }
        return out


@dataclass
class ClassifiedStream:
    """Per-variant verdicts aligned with the input flow order."""

    variants: list[str]
    verdicts: dict[str, list[TrafficClass]]
    totals: dict[str, ClassTotals]

    def __len__(self) -> int:
        return len(next(iter(self.verdicts.values()), []))


_WORKER_STATE: dict = {}


def _init_worker(index: PrefixIndex, cones: dict[str, ConeSet]) -> None:
    _WORKER_STATE["index"] = index
    _WORKER_STATE["cones"] = cones


def _classify_chunk(flows: Sequence[FlowRecord], index: PrefixIndex | None = None,
                    cones: Mapping[str, ConeSet] | None = None) -> dict[str, list[TrafficClass]]:
    index = index if index is not None else _WORKER_STATE["index"]
    cones = cones if cones is not None else _WORKER_STATE["cones"]
    out: dict[str, list[TrafficClass]] = {name: [] for name in cones}
    for flow in flows:
        verdict = index.judge(flow.src)
        for name, cone in cones.items():
            out[name].append(_class_for(verdict, flow.member, cone))
    return out


def default_workers() -> int:
    return os.cpu_count() or 1


def classify_stream(flows: Sequence[FlowRecord], index: PrefixIndex,
                    cones: Mapping[str, ConeSet] | Iterable[ConeSet],
                    workers: int = 1, chunk_size: int = 5000) -> ClassifiedStream:
    """Classify every flow under every cone set.

    Source judgement happens once per flow, so bogon and unrouted verdicts
    are identical across variants by construction.  Results do not depend
    on ``workers``.
    """
    if not isinstance(cones, Mapping):
        cones = {c.name: c for c in cones}
    names = sorted(cones, key=variant_sort_key)
    cones = {n: cones[n] for n in names}
    flows = list(flows)
    chunks = [flows[i:i + chunk_size] for i in range(0, len(flows), chunk_size)]
    if workers > 1 and len(chunks) > 1:
        shippable = {n: replace(c, resolver=None) for n, c in cones.items()}
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(index, shippable)) as pool:
            parts = list(pool.map(_classify_chunk, chunks))
    else:
        parts = [_classify_chunk(chunk, index, cones) for chunk in chunks]
    verdicts: dict[str, list[TrafficClass]] = {n: [] for n in names}
    for part in parts:
        for n in names:
            verdicts[n].extend(part[n])
    totals = {n: ClassTotals() for n in names}
    for n in names:
        per_class = totals[n].per_class
        for flow, cls in zip(flows, verdicts[n]):
            per_class[cls].add(flow)
    return ClassifiedStream(names, verdicts, totals)


def totals_document(result: ClassifiedStream, denominator: str = "total") -> dict:
    any_totals = next(iter(result.totals.values()), ClassTotals())
    doc = {"denominator": denominator, "stream": any_totals.total().as_dict(), "variants": {}}
    for name in result.variants:
        t = result.totals[name]
        shares = t.shares(denominator)
        doc["variants"][name] = {
            c.value: {**t[c].as_dict(),
                      **{f"{k}_share": v for k, v in shares[c.value].items()}}
            for c in CLASSES
        }
    return doc


def write_totals_json(path: str | Path, result: ClassifiedStream,
                      denominator: str = "total") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(totals_document(result, denominator), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_verdicts_csv(path: str | Path, result: ClassifiedStream) -> None:
    """``flow_line_no`` is the 1-based position in the concatenated flow input."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("flow_line_no,variant,class\n")
        for i in range(len(result)):
            for name in result.variants:
                fh.write(f"{i + 1},{name},{result.verdicts[name][i].value}\n")


def read_verdicts_csv(path: str | Path) -> dict[str, list[TrafficClass]]:
    rows: dict[str, dict[int, TrafficClass]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "flow_line_no,variant,class":
            raise ValueError(f"{path}: unexpected verdict header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            no, variant, cls = line.strip().split(",")
            rows.setdefault(variant, {})[int(no)] = TrafficClass(cls)
    out = {}
    for variant, by_no in rows.items():
        out[variant] = [by_no[i] for i in range(1, len(by_no) + 1)]
    return out
