"""Regenerate the demo fixture in src/ixpspoof/data/demo.

The fixture is committed; this script documents how it was made.  It
combines a small synthetic topology with hand-written lines that exercise
withdraws, AS sets, prepending, out-of-window messages, bogon and unrouted
sources, unknown members and every unspoofed-traffic indicator.
"""

from __future__ import annotations

import ipaddress
import json
from pathlib import Path

from ixpspoof.bgp_ingest import format_route_message
from ixpspoof.cone_builder import format_relationship
from ixpspoof.flow_ingest import ICMP, TCP, UDP, FlowRecord, TcpFlags, write_flow_file
from ixpspoof.synth import (DEFAULT_START, build_cone_sets, gen_flows, gen_topology,
                            propagate_routes, visible_relationships)

OUT = Path(__file__).resolve().parents[1] / "src" / "ixpspoof" / "data" / "demo"
SEED = 10
DAY = 86400


def main() -> None:
    topo = gen_topology(12, 4, 0.15, 0.15, 0.34, SEED)
    vantages = [a for a in topo.ases if a not in topo.ixp_members]
    routes, best = propagate_routes(topo, vantages=vantages)
    t0 = routes.window[0]
    lines = ["# demo route dump: timestamp|collector|peer|A/W|prefix|as_path"]
    lines += [format_route_message(m) for m in routes.to_messages()]
    v0, v1 = vantages[0], vantages[1]
    m0 = topo.ixp_members[0]
    lines += [
        "# announced then withdrawn inside the window",
        f"{t0 + 10}|rc00|{v0}|A|20.0.200.0/24|{v0} {m0}",
        f"{t0 + 20}|rc00|{v0}|W|20.0.200.0/24|",
        "# withdraw and announce with the same timestamp: the announce stands",
        f"{t0 + 30}|rc01|{v1}|W|20.0.201.0/24|",
        f"{t0 + 30}|rc01|{v1}|A|20.0.201.0/24|{v1} {v1} {v1} {m0}",
        "# AS set in the path: skipped",
        f"{t0 + 40}|rc00|{v0}|A|20.0.202.0/24|{v0} {{{m0},{v1}}}",
        "# outside the window: ignored",
        f"{t0 - 5 * DAY}|rc00|{v0}|A|20.0.203.0/24|{v0} {m0}",
    ]
    (OUT / "routes.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    rel_lines = ["# as1|as2|rel  (-1: as1 is a provider of as2, 0: peers)"]
    rel_lines += [format_relationship(e) for e in sorted(visible_relationships(topo, routes))]
    (OUT / "relationships.txt").write_text("\n".join(rel_lines) + "\n", encoding="utf-8")
    (OUT / "orgs.txt").write_text(
        "".join(f"{a}|{o}\n" for a, o in sorted(topo.orgs.items())), encoding="utf-8")

    labeled = gen_flows(topo, best, 300, 0.1, SEED, start=DEFAULT_START, duration=DAY,
                        sample_rate=100, include_bogon=True, include_unrouted=True)
    flows = [lf.flow for lf in labeled]
    flows += crafted_flows(topo, routes)
    flows.sort(key=lambda f: f.timestamp)
    write_flow_file(OUT / "flows.csv", flows)

    config = {
        "routes": ["routes.txt"],
        "window_start": routes.window[0],
        "window_end": routes.window[1],
        "relationships": "relationships.txt",
        "orgs": "orgs.txt",
        "flows": ["flows.csv"],
        "cone": ["naive", "caida", "full"],
        "org_ext": True,
        "bin_width": 3600,
    }
    (OUT / "demo.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


def crafted_flows(topo, routes) -> list[FlowRecord]:
    """Flows from outside the narrowest member's cone, carrying each indicator."""
    far = ipaddress.ip_address("20.0.250.7")  # never announced
    cones = build_cone_sets(topo, routes, ("full+org",))["full+org"]
    member = min(topo.ixp_members, key=lambda m: (len(cones.cone(m)), m))
    outsider = min(a for a in topo.ases if a not in cones.cone(member))
    src = topo.prefixes[outsider].network_address + 9
    dst = topo.prefixes[member].network_address + 5
    t = DEFAULT_START + 7200
    tls = bytes.fromhex("1603010200010001fc0303")
    http = b"HTTP/1.1 200 OK\r\n"
    return [
        FlowRecord(t, member, src, dst, TCP, 443, 51000, TcpFlags.ACK | TcpFlags.PSH,
                   bytes=1500 * 3, packets=3, sample_rate=100, payload_head=tls),
        FlowRecord(t + 1, member, src, dst, TCP, 80, 50123, TcpFlags.ACK,
                   bytes=1400 * 2, packets=2, sample_rate=100, payload_head=http),
        FlowRecord(t + 2, member, src, dst, ICMP, icmp_type=0, bytes=84, packets=1,
                   sample_rate=100),
        FlowRecord(t + 3, member, src, dst, TCP, 443, 60000, TcpFlags.ACK, bytes=52, packets=1,
                   sample_rate=100),
        FlowRecord(t + 4, member, src, dst, UDP, 0, 53, bytes=60, packets=1, sample_rate=100),
        FlowRecord(t + 5, member, src, src, UDP, 123, 123, bytes=76, packets=1, sample_rate=100),
        FlowRecord(t + 6, member, far, dst, UDP, 5353, 19302, bytes=100, packets=1,
                   sample_rate=100),
        FlowRecord(t + 7, 64512, src, dst, TCP, 12345, 27015, TcpFlags.SYN, bytes=60,
                   packets=1, sample_rate=100),
        FlowRecord(t + 8, member, ipaddress.ip_address("100.64.1.1"), dst, UDP, 4444, 161,
                   bytes=90, packets=1, sample_rate=100),
    ]


if __name__ == "__main__":
    main()
