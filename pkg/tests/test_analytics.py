import ipaddress
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ixpspoof.analytics import (ANOMALOUS, DEFAULT_TCP_PORTS, DEFAULT_UDP_PORTS, member_fractions,
                                port_bucket, size_cdf, time_series, traffic_mix,
                                write_member_ccdf_csv, write_member_fractions_csv,
                                write_size_cdf_csvs, write_timeseries_csv, write_traffic_mix_csv)
from ixpspoof.classifier import CLASSES, ClassTotals, Counts, TrafficClass
from ixpspoof.flow_ingest import ICMP, TCP, UDP, FlowRecord

A = ipaddress.ip_address
BOGON, UNROUTED, INVALID, REGULAR = (TrafficClass.BOGON, TrafficClass.UNROUTED,
                                     TrafficClass.INVALID, TrafficClass.REGULAR)


def rec(ts=0, member=1, proto=UDP, dport=53, packets=1, nbytes=None, rate=1):
    return FlowRecord(ts, member, A("20.0.0.1"), A("20.0.0.2"), proto,
                      1000 if proto in (TCP, UDP) else 0, dport if proto in (TCP, UDP) else 0,
                      bytes=nbytes if nbytes is not None else 100 * packets, packets=packets,
                      sample_rate=rate)


def random_stream(seed, n=200):
    rng = random.Random(seed)
    flows, verdicts = [], []
    for _ in range(n):
        proto = rng.choice((TCP, UDP, ICMP, 47))
        packets = rng.randint(1, 20)
        flows.append(rec(ts=rng.randrange(0, 86400), member=rng.choice((1, 2, 3, 4)), proto=proto,
                         dport=rng.choice((53, 80, 443, 123, 8080, 50000, 65535, 0)),
                         packets=packets, nbytes=packets * rng.randint(40, 1500),
                         rate=rng.choice((1, 100))))
        verdicts.append(rng.choice(CLASSES))
    return flows, verdicts


class TestTimeSeries:
    def test_hour_mark_lands_in_second_bin(self):
        ts = time_series([rec(ts=3600)], {"full": [REGULAR]}, 3600, start=0, end=3 * 3600)
        per_bin = [c.packets for c in ts.bins["full"][REGULAR]]
        assert per_bin == [0, 1, 0]
        assert ts.bin_starts() == [0, 3600, 7200]

    def test_empty_stream(self):
        ts = time_series([], {"full": []}, 3600, start=0, end=7200)
        assert ts.n_bins == 2
        for cls in CLASSES:
            assert all(c == Counts() for c in ts.bins["full"][cls])

    def test_truncated_last_bin_and_outside(self):
        flows = [rec(ts=t) for t in (0, 5000, 9999, 10000, -1)]
        ts = time_series(flows, {"v": [REGULAR] * 5}, 3600, start=0, end=10000)
        assert ts.n_bins == 3 and ts.outside == 2
        assert [c.flows for c in ts.bins["v"][REGULAR]] == [1, 1, 1]

    def test_rejects_bad_width(self):
        with pytest.raises(ValueError):
            time_series([], {}, 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_per_flow_binning(self, seed):
        flows, verdicts = random_stream(seed)
        width = random.Random(seed).choice((60, 900, 3600, 7000))
        ts = time_series(flows, {"v": verdicts}, width)
        start = min(f.timestamp for f in flows) // width * width
        expected = {}
        for f, c in zip(flows, verdicts):
            key = (c, (f.timestamp - start) // width)
            expected[key] = expected.get(key, 0) + f.packets * f.sample_rate
        got = {(c, i): n.packets_upscaled for c in CLASSES
               for i, n in enumerate(ts.bins["v"][c]) if n.flows}
        assert got == expected

    @pytest.mark.parametrize("seed", range(3))
    def test_bins_conserve_class_totals(self, seed):
        flows, verdicts = random_stream(seed)
        ts = time_series(flows, {"v": verdicts}, 3600)
        totals = ClassTotals()
        for f, c in zip(flows, verdicts):
            totals[c].add(f)
        for c in CLASSES:
            assert ts.class_total("v", c) == totals[c]


class TestMemberFractions:
    def test_all_regular(self):
        mf = member_fractions([rec(packets=5), rec(packets=7)], [REGULAR, REGULAR])
        assert mf.fractions[1][ANOMALOUS] == 0.0

    def test_one_in_a_hundred(self):
        mf = member_fractions([rec(packets=99), rec(packets=1)], [REGULAR, INVALID])
        assert mf.fractions[1]["invalid"] == 0.01
        assert mf.fractions[1][ANOMALOUS] == 0.01

    @pytest.mark.parametrize("seed", range(5))
    def test_fractions_sum_to_one(self, seed):
        flows, verdicts = random_stream(seed)
        for weight in ("packets", "bytes"):
            mf = member_fractions(flows, verdicts, weight)
            for row in mf.fractions.values():
                assert sum(row[c.value] for c in CLASSES) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_ccdf_matches_scan(self, seed):
        rng = random.Random(seed)
        flows, verdicts = [], []
        for m in range(30):
            for _ in range(rng.randint(1, 5)):
                flows.append(rec(member=m, packets=rng.randint(1, 4)))
                verdicts.append(rng.choice((REGULAR, REGULAR, INVALID, BOGON)))
        mf = member_fractions(flows, verdicts)
        for cls in ("invalid", ANOMALOUS):
            values = [row[cls] for row in mf.fractions.values()]
            expected = [(v, sum(1 for w in values if w >= v) / len(values))
                        for v in sorted(set(values))]
            assert mf.ccdf(cls) == expected


class TestSizeCdf:
    def test_single_step(self):
        cdf = size_cdf([rec(packets=3, nbytes=4500)], [REGULAR])
        assert cdf[REGULAR] == [(1500, 3, 1.0)]
        assert cdf[INVALID] == []

    def test_disjoint_classes(self):
        cdf = size_cdf([rec(packets=2, nbytes=80), rec(packets=1, nbytes=1400)], [INVALID, REGULAR])
        assert cdf[INVALID] == [(40, 2, 1.0)]
        assert cdf[REGULAR] == [(1400, 1, 1.0)]

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_expanded_samples(self, seed):
        flows, verdicts = random_stream(seed, n=80)
        cdf = size_cdf(flows, verdicts)
        for cls in CLASSES:
            samples = sorted(s for f, c in zip(flows, verdicts) if c is cls
                             for s in [f.packet_size] * f.packets)
            expected = [(v, sum(1 for s in samples if s <= v),
                         sum(1 for s in samples if s <= v) / len(samples))
                        for v in sorted(set(samples))]
            assert cdf[cls] == expected


class TestTrafficMix:
    def test_default_columns(self):
        assert DEFAULT_UDP_PORTS == (53, 123, 161, 443, 19302)
        assert DEFAULT_TCP_PORTS == (80, 443, 27015, 10100)

    def test_all_tcp_443(self):
        flows = [rec(proto=TCP, dport=443, packets=n) for n in (3, 4)]
        mix = traffic_mix(flows, [INVALID, INVALID])
        assert mix.share("tcp", "443") == 1.0
        assert mix.share("tcp") == 1.0
        assert mix.share("icmp") == 0.0

    def test_buckets(self):
        assert port_bucket(443, DEFAULT_TCP_PORTS) == "443"
        assert port_bucket(49152, DEFAULT_TCP_PORTS) == "ephemeral"
        assert port_bucket(49151, DEFAULT_TCP_PORTS) == "other"
        assert port_bucket(8080, DEFAULT_TCP_PORTS, ephemeral_min=1024) == "ephemeral"

    def test_no_invalid(self):
        mix = traffic_mix([rec()], [REGULAR])
        assert mix.total_packets == 0 and mix.share("udp") == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_counts_and_sums(self, seed):
        flows, verdicts = random_stream(seed, n=100)
        mix = traffic_mix(flows, verdicts)
        invalid = [f for f, c in zip(flows, verdicts) if c is INVALID]
        assert mix.total_packets == sum(f.packets for f in invalid)
        expected = {}
        for f in invalid:
            proto = {TCP: "tcp", UDP: "udp", ICMP: "icmp"}.get(f.proto, "other")
            if proto in ("tcp", "udp"):
                named = DEFAULT_TCP_PORTS if proto == "tcp" else DEFAULT_UDP_PORTS
                b = (str(f.dst_port) if f.dst_port in named
                     else "ephemeral" if f.dst_port >= 49152 else "other")
                expected[(proto, b)] = expected.get((proto, b), 0) + f.packets
        got = {(p, b): n for p, row in mix.packets.items() for b, n in row.items()
               if b != "total" and n}
        assert got == expected
        if mix.total_packets:
            shares = mix.shares()
            assert sum(shares[p]["total"] for p in shares) == pytest.approx(1.0, abs=1e-9)
            for p in ("tcp", "udp"):
                parts = sum(v for b, v in shares[p].items() if b != "total")
                assert parts == pytest.approx(shares[p]["total"], abs=1e-9)


def test_writers_deterministic(tmp_path):
    flows, verdicts = random_stream(7)
    vmap = {"full": verdicts, "naive": verdicts[::-1]}
    for d in ("a", "b"):
        out = tmp_path / d
        out.mkdir()
        write_timeseries_csv(out / "ts.csv", time_series(flows, vmap, 3600), scale=0.5)
        mf = {k: member_fractions(flows, v) for k, v in vmap.items()}
        write_member_ccdf_csv(out / "ccdf.csv", mf)
        write_member_fractions_csv(out / "mf.csv", mf)
        write_size_cdf_csvs(out, {k: size_cdf(flows, v) for k, v in vmap.items()})
        write_traffic_mix_csv(out / "mix.csv", {k: traffic_mix(flows, v) for k, v in vmap.items()})
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 8
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "ts.csv").read_text().splitlines()
    assert header[0].endswith("packets_scaled,bytes_scaled")
    assert header[1].startswith("naive,")
