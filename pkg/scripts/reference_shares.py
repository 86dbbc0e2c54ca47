"""Compute the demo's class shares with the brute-force reference code.

Writes tests/golden/demo_shares.json.  Only the file parsers come from the
package; replay, prefix matching, cones and classification use the
independent implementations in tests/oracles.py.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import oracles  # noqa: E402
from ixpspoof.bgp_ingest import read_route_files  # noqa: E402
from ixpspoof.cone_builder import read_orgs, read_relationships  # noqa: E402
from ixpspoof.flow_ingest import read_flow_files  # noqa: E402
from ixpspoof.prefix_index import DEFAULT_BOGONS  # noqa: E402

DEMO = ROOT / "src" / "ixpspoof" / "data" / "demo"
OUT = ROOT / "tests" / "golden" / "demo_shares.json"
CLASSES = ("bogon", "unrouted", "invalid", "regular")


def main() -> None:
    config = json.loads((DEMO / "demo.json").read_text())
    window = (config["window_start"], config["window_end"])
    entries = oracles.replay(read_route_files([DEMO / p for p in config["routes"]]), window)
    edges = read_relationships(DEMO / config["relationships"])
    orgs = read_orgs(DEMO / config["orgs"])
    flows = read_flow_files([DEMO / p for p in config["flows"]])
    members = sorted({f.member for f in flows})

    routed: dict = {}
    adjacencies = set()
    for (_, _, prefix), path in entries.items():
        routed.setdefault(prefix, set()).add(path[-1])
        adjacencies |= {frozenset(pair) for pair in zip(path, path[1:])}
    routed = {p: frozenset(o) for p, o in routed.items()}

    caida = oracles.caida_cones(edges, members)
    every = set(members) | {x for e in edges for x in (e.a, e.b)} | {x for p in adjacencies for x in p}
    full_all = oracles.full_cones(edges, adjacencies, every)
    caida_all = oracles.caida_cones(edges, every)
    cones = {
        "naive": oracles.naive_cones(entries, members),
        "caida": caida,
        "caida+org": oracles.org_extend(lambda a: caida_all.get(a, {a}), members, orgs),
        "full": {m: full_all[m] for m in members},
        "full+org": oracles.org_extend(lambda a: full_all.get(a, {a}), members, orgs),
    }

    result = {}
    for name, cone in cones.items():
        sums = {c: [0, 0] for c in CLASSES}
        for f in flows:
            cls = oracles.classify(f, routed, DEFAULT_BOGONS, cone[f.member], naive=name == "naive")
            sums[cls][0] += f.bytes * f.sample_rate
            sums[cls][1] += f.packets * f.sample_rate
        total_b = sum(v[0] for v in sums.values())
        total_p = sum(v[1] for v in sums.values())
        result[name] = {c: {"bytes": round(v[0] / total_b, 6), "packets": round(v[1] / total_p, 6)}
                        for c, v in sums.items()}
    OUT.write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
