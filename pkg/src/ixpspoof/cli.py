"""Command-line entry point.

Pipeline subcommands (``build-cones``, ``classify``, ``report``) share one
set of input flags, which may also come from a JSON config file given with
``--config``; flags given on the command line win.  ``synth`` groups the
synthetic-data generators and the evaluator.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .analytics import (DEFAULT_TCP_PORTS, DEFAULT_UDP_PORTS, EPHEMERAL_MIN, member_fractions,
                        size_cdf, time_series, traffic_mix, write_member_ccdf_csv,
                        write_member_fractions_csv, write_size_cdf_csvs, write_timeseries_csv,
                        write_traffic_mix_csv)
from .bgp_ingest import (IngestStats, RouteTable, format_route_message, load_routes,
                         observed_adjacencies, origins_for, read_route_files)
from .classifier import (ClassifiedStream, classify_stream, default_workers, read_verdicts_csv,
                         variant_sort_key, write_totals_json, write_verdicts_csv)
from .cone_builder import (ConeSet, Variant, apply_org_extension, build_caida, build_full,
                           build_naive, format_relationship, read_orgs, read_relationships)
from .errors import ConfigError, IxpSpoofError
from .flow_ingest import FlowRecord, read_flow_files, write_flow_file
from .indicators import summarize, write_indicator_csv
from .prefix_index import DEFAULT_BOGONS, build_index, read_bogon_file
from . import synth

log = logging.getLogger("ixpspoof")

DEFAULT_BIN_WIDTH = 3600
CONE_CHOICES = [v.value for v in Variant]


@dataclass
class PipelineConfig:
    routes: list[Path] = field(default_factory=list)
    window: tuple[int, int] | None = None
    relationships: Path | None = None
    orgs: Path | None = None
    flows: list[Path] = field(default_factory=list)
    members: list[int] = field(default_factory=list)
    cones: list[str] = field(default_factory=lambda: ["full"])
    org_ext: bool = False
    out: Path = Path("out")
    ephemeral_min: int = EPHEMERAL_MIN
    denominator: str = "total"
    weight: str = "packets"
    bogon_file: Path | None = None
    workers: int = 1
    bin_width: int = DEFAULT_BIN_WIDTH
    scale: float | None = None
    udp_ports: list[int] = field(default_factory=lambda: list(DEFAULT_UDP_PORTS))
    tcp_ports: list[int] = field(default_factory=lambda: list(DEFAULT_TCP_PORTS))

    def variant_names(self) -> list[str]:
        names = list(dict.fromkeys(self.cones))
        if self.org_ext:
            names += [f"{n}+org" for n in names if n != Variant.NAIVE.value]
        return sorted(names, key=variant_sort_key)

    def validate(self, need_flows: bool) -> None:
        if not self.cones:
            raise ConfigError("select at least one cone variant")
        for name in self.cones:
            if name not in CONE_CHOICES:
                raise ConfigError(f"unknown cone variant {name!r}")
        if not self.routes:
            raise ConfigError("no route files given (--routes)")
        if need_flows and not self.flows:
            raise ConfigError("no flow files given (--flows)")
        if self.relationships is None and any(c != "naive" for c in self.cones):
            raise ConfigError("the caida and full cones need a relationship file (--relationships)")
        if self.org_ext and self.orgs is None:
            raise ConfigError("--org-ext needs an organisation file (--orgs)")
        if self.window is not None and self.window[0] > self.window[1]:
            raise ConfigError("window end precedes window start")
        if self.denominator not in ("total", "sanitized"):
            raise ConfigError(f"unknown denominator {self.denominator!r}")
        if self.weight not in ("packets", "bytes"):
            raise ConfigError(f"unknown weight {self.weight!r}")
        if self.bin_width <= 0:
            raise ConfigError("bin width must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        paths = [*self.routes, *self.flows, self.relationships, self.orgs, self.bogon_file]
        for path in paths:
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{path}: no such file")


# keys accepted in a JSON config file, mapped to PipelineConfig fields
_CONFIG_KEYS = {
    "routes", "window_start", "window_end", "relationships", "orgs", "flows", "members",
    "cone", "org_ext", "out", "ephemeral_min", "denominator", "weight", "bogon_file",
    "workers", "bin_width", "scale", "udp_ports", "tcp_ports",
}


def _load_config_file(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    return doc


def _as_list(value) -> list:
    if value is None:
        return []
    return list(value) if isinstance(value, (list, tuple)) else [value]


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Merge command-line flags over the optional config file."""
    doc: dict = {}
    base = Path(".")
    if args.config is not None:
        doc = _load_config_file(args.config)
        base = args.config.parent

    def pick(name: str, default=None):
        value = getattr(args, name, None)
        if value is not None:
            return value
        return doc.get(name, default)

    # paths inside a config file are relative to the file itself
    def paths(name: str) -> list[Path]:
        if getattr(args, name, None) is not None:
            return [Path(p) for p in getattr(args, name)]
        return [_config_path(base, p) for p in _as_list(doc.get(name))]

    def one_path(name: str) -> Path | None:
        if getattr(args, name, None) is not None:
            return Path(getattr(args, name))
        value = doc.get(name)
        return None if value is None else _config_path(base, value)

    start, end = pick("window_start"), pick("window_end")
    if (start is None) != (end is None):
        raise ConfigError("--window-start and --window-end go together")
    out = one_path("out")
    return PipelineConfig(
        routes=paths("routes"),
        window=None if start is None else (int(start), int(end)),
        relationships=one_path("relationships"),
        orgs=one_path("orgs"),
        flows=paths("flows"),
        members=[int(m) for m in _as_list(pick("members"))],
        cones=list(_as_list(pick("cone", ["full"]))),
        org_ext=bool(pick("org_ext", False)),
        out=out if out is not None else Path("out"),
        ephemeral_min=int(pick("ephemeral_min", EPHEMERAL_MIN)),
        denominator=pick("denominator", "total"),
        weight=pick("weight", "packets"),
        bogon_file=one_path("bogon_file"),
        workers=int(pick("workers", default_workers())),
        bin_width=int(pick("bin_width", DEFAULT_BIN_WIDTH)),
        scale=None if pick("scale") is None else float(pick("scale")),
        udp_ports=[int(p) for p in _as_list(pick("udp_ports", list(DEFAULT_UDP_PORTS)))],
        tcp_ports=[int(p) for p in _as_list(pick("tcp_ports", list(DEFAULT_TCP_PORTS)))],
    )


def _config_path(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


@dataclass
class Inputs:
    table: RouteTable
    flows: list[FlowRecord]
    cones: dict[str, ConeSet]
    bogons: list


def load_inputs(cfg: PipelineConfig, need_flows: bool) -> Inputs:
    cfg.validate(need_flows)
    stats = IngestStats()
    table = load_routes(read_route_files(cfg.routes, stats), cfg.window)
    log.info("routes: %d messages, %d AS-set paths skipped, %d entries after replay",
             stats.messages, stats.as_set_skipped, len(table))
    flows = read_flow_files(cfg.flows) if cfg.flows else []
    if cfg.members:
        members = sorted(set(cfg.members))
    elif flows:
        members = sorted({f.member for f in flows})
    else:
        members = sorted({asn for path in table.entries.values() for asn in path})
    edges = read_relationships(cfg.relationships) if cfg.relationships else []
    orgs = read_orgs(cfg.orgs) if cfg.orgs else {}
    base: dict[str, ConeSet] = {}
    for kind in cfg.cones:
        if kind == "naive":
            base[kind] = build_naive(table, members)
        elif kind == "caida":
            base[kind] = build_caida(edges, members)
        else:
            base[kind] = build_full(edges, observed_adjacencies(table), members)
    cones = {}
    for name in cfg.variant_names():
        kind = name.split("+")[0]
        cones[name] = apply_org_extension(base[kind], orgs) if name.endswith("+org") else base[kind]
    bogons = read_bogon_file(cfg.bogon_file) if cfg.bogon_file else list(DEFAULT_BOGONS)
    return Inputs(table, flows, cones, bogons)


def write_cones_csv(path: Path, cones: dict[str, ConeSet]) -> None:
    """One row per cone entry: an ASN, or a prefix for the naive cone."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,member,entry\n")
        for name in sorted(cones, key=variant_sort_key):
            cs = cones[name]
            for m in sorted(cs.members):
                if cs.variant is Variant.NAIVE:
                    entries = sorted(cs.prefix_cones[m],
                                     key=lambda p: (p.version, int(p.network_address), p.prefixlen))
                else:
                    entries = sorted(cs.as_cones[m])
                for e in entries:
                    fh.write(f"{name},{m},{e}\n")


def _classify(cfg: PipelineConfig, inputs: Inputs) -> ClassifiedStream:
    index = build_index(origins_for(inputs.table), inputs.bogons)
    return classify_stream(inputs.flows, index, inputs.cones, workers=cfg.workers)


def cmd_build_cones(cfg: PipelineConfig) -> list[Path]:
    inputs = load_inputs(cfg, need_flows=False)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "cones.csv"
    write_cones_csv(path, inputs.cones)
    return [path]


def cmd_classify(cfg: PipelineConfig) -> list[Path]:
    inputs = load_inputs(cfg, need_flows=True)
    result = _classify(cfg, inputs)
    cfg.out.mkdir(parents=True, exist_ok=True)
    totals, verdicts = cfg.out / "totals.json", cfg.out / "verdicts.csv"
    write_totals_json(totals, result, cfg.denominator)
    write_verdicts_csv(verdicts, result)
    return [totals, verdicts]


def cmd_report(cfg: PipelineConfig) -> list[Path]:
    """Classification plus indicators and every analytics table."""
    inputs = load_inputs(cfg, need_flows=True)
    result = _classify(cfg, inputs)
    flows = inputs.flows
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "totals.json", out / "verdicts.csv", out / "indicators.csv",
               out / "timeseries.csv", out / "member_ccdf.csv", out / "member_fractions.csv",
               out / "traffic_mix.csv"]
    write_totals_json(written[0], result, cfg.denominator)
    write_verdicts_csv(written[1], result)
    write_indicator_csv(written[2], [summarize(flows, result.verdicts[n], n)
                                     for n in result.variants])
    write_timeseries_csv(written[3], time_series(flows, result.verdicts, cfg.bin_width), cfg.scale)
    fractions = {n: member_fractions(flows, result.verdicts[n], cfg.weight)
                 for n in result.variants}
    write_member_ccdf_csv(written[4], fractions)
    write_member_fractions_csv(written[5], fractions)
    write_traffic_mix_csv(written[6], {
        n: traffic_mix(flows, result.verdicts[n], cfg.udp_ports, cfg.tcp_ports, cfg.ephemeral_min)
        for n in result.variants})
    written += write_size_cdf_csvs(out, {n: size_cdf(flows, result.verdicts[n])
                                         for n in result.variants})
    return written


# synthetic data ---------------------------------------------------------------

def write_routes_file(path: Path, table: RouteTable) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for msg in table.to_messages():
            fh.write(format_route_message(msg) + "\n")


def write_relationships_file(path: Path, edges) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for edge in sorted(edges):
            fh.write(format_relationship(edge) + "\n")


def write_orgs_file(path: Path, orgs: dict[int, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for asn in sorted(orgs):
            fh.write(f"{asn}|{orgs[asn]}\n")


def cmd_synth_gen_topology(args: argparse.Namespace) -> list[Path]:
    topo = synth.gen_topology(args.n_ases, args.n_members, args.p2c_density, args.p2p_density,
                              args.org_fraction, args.seed)
    routes, _ = synth.propagate_routes(topo)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "topology.json", out / "routes.txt", out / "relationships.txt",
             out / "orgs.txt"]
    topo.save(paths[0])
    write_routes_file(paths[1], routes)
    write_relationships_file(paths[2], synth.visible_relationships(topo, routes))
    write_orgs_file(paths[3], dict(topo.orgs))
    return paths


def cmd_synth_gen_flows(args: argparse.Namespace) -> list[Path]:
    topo = synth.SynthTopology.load(args.topology)
    best = synth.best_paths(topo)
    labeled = synth.gen_flows(topo, best, args.n_flows, args.spoof_rate, args.seed,
                              sample_rate=args.sample_rate, include_bogon=args.include_bogon,
                              include_unrouted=args.include_unrouted)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    flows_path, labels_path = out / "flows.csv", out / "labels.csv"
    write_flow_file(flows_path, [lf.flow for lf in labeled])
    synth.write_labels_csv(labels_path, labeled)
    return [flows_path, labels_path]


def cmd_synth_drop_visibility(args: argparse.Namespace) -> list[Path]:
    topo = synth.SynthTopology.load(args.topology)
    table = load_routes(read_route_files(args.routes))
    reduced = synth.drop_visibility(table, args.loss, args.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    routes_path, rel_path = out / "routes.txt", out / "relationships.txt"
    write_routes_file(routes_path, reduced)
    write_relationships_file(rel_path, synth.visible_relationships(topo, reduced))
    return [routes_path, rel_path]


def cmd_synth_evaluate(args: argparse.Namespace) -> list[Path]:
    truths = synth.read_labels_csv(args.labels)
    verdicts = read_verdicts_csv(args.verdicts)
    for name, classes in verdicts.items():
        if len(classes) != len(truths):
            raise ConfigError(f"{args.verdicts}: variant {name} has {len(classes)} verdicts "
                              f"for {len(truths)} labelled flows")
    result = synth.evaluate(truths, verdicts)
    doc = {name: result[name].as_dict() for name in sorted(result, key=variant_sort_key)}
    text = json.dumps(doc, indent=2) + "\n"
    if args.out is None:
        sys.stdout.write(text)
        return []
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(text, encoding="utf-8")
    return [args.out]


# argument parsing -------------------------------------------------------------

def _add_pipeline_flags(p: argparse.ArgumentParser, with_flows: bool = True) -> None:
    g = p.add_argument_group("inputs")
    g.add_argument("--config", type=Path, help="JSON config file; command-line flags win")
    g.add_argument("--routes", nargs="+", metavar="FILE",
                   help="route dump files (timestamp|collector|peer|A/W|prefix|path)")
    g.add_argument("--window-start", type=int, metavar="TS",
                   help="first timestamp of the routing window (inclusive)")
    g.add_argument("--window-end", type=int, metavar="TS",
                   help="last timestamp of the routing window (inclusive)")
    g.add_argument("--relationships", metavar="FILE",
                   help="AS relationship file (as1|as2|-1 or 0); required for caida and full")
    g.add_argument("--orgs", metavar="FILE", help="organisation file (asn|org_id)")
    g.add_argument("--bogon-file", metavar="FILE",
                   help="replace the built-in bogon list (one prefix per line)")
    if with_flows:
        g.add_argument("--flows", nargs="+", metavar="FILE", help="flow CSV files")
    g.add_argument("--members", nargs="+", type=int, metavar="ASN",
                   help="IXP member ASNs to build cones for "
                        "(default: members seen in the flows, else every AS in the routes)")
    c = p.add_argument_group("cones")
    c.add_argument("--cone", "--variant", dest="cone", action="append", choices=CONE_CHOICES,
                   help="cone variant to run; repeatable (default: full)")
    c.add_argument("--org-ext", action="store_true", default=None,
                   help="also run the organisation-extended caida/full cones")
    o = p.add_argument_group("output")
    o.add_argument("--out", metavar="DIR", help="output directory (default: out)")
    o.add_argument("--workers", type=int,
                   help="classifier processes (default: available CPUs)")
    if with_flows:
        o.add_argument("--denominator", choices=("total", "sanitized"),
                       help="base for invalid/regular shares in totals.json (default: total)")
        o.add_argument("--weight", choices=("packets", "bytes"),
                       help="weight of the per-member fractions (default: packets)")
        o.add_argument("--ephemeral-min", type=int, metavar="PORT",
                       help=f"lowest ephemeral destination port (default: {EPHEMERAL_MIN})")
        o.add_argument("--bin-width", type=int, metavar="SECONDS",
                       help=f"time series bin width (default: {DEFAULT_BIN_WIDTH})")
        o.add_argument("--scale", type=float,
                       help="extra time series columns multiplied by this factor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ixpspoof",
        description="Classify IXP flow data as bogon, unrouted, invalid or regular "
                    "against several customer-cone variants.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("build-cones", help="compute member cones and write cones.csv")
    _add_pipeline_flags(p, with_flows=False)
    p.set_defaults(handler=cmd_build_cones, pipeline=True)

    p = sub.add_parser("classify", help="classify flows; write totals.json and verdicts.csv")
    _add_pipeline_flags(p)
    p.set_defaults(handler=cmd_classify, pipeline=True)

    p = sub.add_parser("report", help="classify and write indicator and analytics tables")
    _add_pipeline_flags(p)
    p.set_defaults(handler=cmd_report, pipeline=True)

    sp = sub.add_parser("synth", help="synthetic topologies, traffic and evaluation")
    ssub = sp.add_subparsers(dest="synth_command", required=True, metavar="STEP")

    g = ssub.add_parser("gen-topology",
                        help="write topology.json, routes.txt, relationships.txt, orgs.txt")
    g.add_argument("--n-ases", type=int, default=50)
    g.add_argument("--n-members", type=int, default=20)
    g.add_argument("--p2c-density", type=float, default=0.1,
                   help="probability of each extra provider link (default: 0.1)")
    g.add_argument("--p2p-density", type=float, default=0.05,
                   help="probability of each peering link (default: 0.05)")
    g.add_argument("--org-fraction", type=float, default=0.2,
                   help="share of ASes grouped into multi-AS organisations (default: 0.2)")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", type=Path, required=True, metavar="DIR")
    g.set_defaults(handler=cmd_synth_gen_topology, pipeline=False)

    g = ssub.add_parser("gen-flows", help="write flows.csv and labels.csv")
    g.add_argument("--topology", type=Path, required=True, metavar="FILE")
    g.add_argument("--n-flows", type=int, default=10000)
    g.add_argument("--spoof-rate", type=float, default=0.0)
    g.add_argument("--sample-rate", type=int, default=1)
    g.add_argument("--include-bogon", action="store_true",
                   help="let spoofed sources come from bogon space")
    g.add_argument("--include-unrouted", action="store_true",
                   help="let spoofed sources come from unannounced space")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", type=Path, required=True, metavar="DIR")
    g.set_defaults(handler=cmd_synth_gen_flows, pipeline=False)

    g = ssub.add_parser("drop-visibility",
                        help="drop collector feeds; write routes.txt and relationships.txt")
    g.add_argument("--topology", type=Path, required=True, metavar="FILE")
    g.add_argument("--routes", nargs="+", type=Path, required=True, metavar="FILE")
    g.add_argument("--loss", type=float, required=True, help="fraction of feeds to drop, in [0, 1)")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", type=Path, required=True, metavar="DIR")
    g.set_defaults(handler=cmd_synth_drop_visibility, pipeline=False)

    g = ssub.add_parser("evaluate", help="confusion counts, precision and recall per variant")
    g.add_argument("--labels", type=Path, required=True, metavar="FILE")
    g.add_argument("--verdicts", type=Path, required=True, metavar="FILE")
    g.add_argument("--seed", type=int, default=None,
                   help="unused; evaluation involves no randomness")
    g.add_argument("--out", type=Path, metavar="FILE", help="write JSON here instead of stdout")
    g.set_defaults(handler=cmd_synth_evaluate, pipeline=False)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.pipeline:
            written = args.handler(resolve_config(args))
        else:
            written = args.handler(args)
    except (IxpSpoofError, ValueError) as exc:
        print(f"ixpspoof: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print(f"ixpspoof: error: {where}{exc.strerror or exc}", file=sys.stderr)
        return 2
    for path in written:
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
