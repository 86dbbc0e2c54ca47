import ipaddress
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ixpspoof.prefix_index import (DEFAULT_BOGONS, RFC1918, RFC5735, RFC6598, PrefixIndex,
                                   PrefixTrie, SourceKind, build_index, judge_source,
                                   read_bogon_file)
from ixpspoof.errors import ParseError

P = ipaddress.ip_network
A = ipaddress.ip_address


def test_bogon_list_is_exact():
    expected = {
        "10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16",
        "0.0.0.0/8", "127.0.0.0/8", "169.254.0.0/16", "192.0.0.0/24", "192.0.2.0/24",
        "198.18.0.0/15", "198.51.100.0/24", "203.0.113.0/24", "224.0.0.0/4", "240.0.0.0/4",
        "255.255.255.255/32", "100.64.0.0/10",
    }
    assert {str(p) for p in DEFAULT_BOGONS if p.version == 4} == expected
    assert set(RFC1918) | set(RFC5735) | set(RFC6598) == expected


def test_private_space_is_bogon():
    index = build_index({}, [P("10.0.0.0/8")])
    assert judge_source(index, "10.1.2.3").kind is SourceKind.BOGON


def test_empty_table_everything_unrouted():
    index = build_index({})
    for text in ("8.8.8.8", "1.1.1.1", "2001:db8::1"):
        assert judge_source(index, text).kind is SourceKind.UNROUTED
    assert judge_source(index, "192.168.1.1").kind is SourceKind.BOGON


def test_bogon_beats_routed():
    index = build_index({P("192.168.0.0/16"): {64500}})
    assert judge_source(index, "192.168.5.5").kind is SourceKind.BOGON


def test_routed_match_and_unrouted_without_bogons():
    # documentation ranges are bogons by default, so these use an empty bogon list
    index = build_index({P("203.0.113.0/24"): {64520}}, bogons=[])
    verdict = judge_source(index, "203.0.113.7")
    assert verdict.kind is SourceKind.ROUTED
    assert verdict.origins == {64520}
    assert verdict.matched_prefix == P("203.0.113.0/24")
    assert judge_source(index, "198.51.100.9").kind is SourceKind.UNROUTED


def test_documentation_ranges_are_bogons_by_default():
    index = build_index({P("203.0.113.0/24"): {64520}})
    assert judge_source(index, "203.0.113.7").kind is SourceKind.BOGON


def test_default_route_ignored():
    index = build_index({P("0.0.0.0/0"): {1}, P("::/0"): {1}, P("8.0.0.0/8"): {2}})
    assert judge_source(index, "9.9.9.9").kind is SourceKind.UNROUTED
    assert judge_source(index, "2001:db8::1").kind is SourceKind.UNROUTED
    assert judge_source(index, "8.8.8.8").origins == {2}


def test_duplicate_prefix_origins_merge():
    trie = PrefixTrie(4)
    trie.insert(P("8.0.0.0/8"), frozenset({1}), merge=frozenset.union)
    trie.insert(P("8.0.0.0/8"), frozenset({2}), merge=frozenset.union)
    assert trie.longest_match(int(A("8.1.1.1")))[1] == {1, 2}
    assert len(trie) == 1


def test_ipv6_bogons_and_lpm():
    index = build_index({P("2001:db8::/32"): {1}, P("2001:db8:1::/48"): {2}})
    assert judge_source(index, "2001:db8:1::5").origins == {2}
    assert judge_source(index, "2001:db8:2::5").origins == {1}
    for text in ("::1", "fe80::1", "fc00::1", "ff02::1", "4000::1"):
        assert judge_source(index, text).kind is SourceKind.BOGON
    assert judge_source(index, "2a00::1").kind is SourceKind.UNROUTED


def test_trichotomy_and_routed_has_origins():
    rng = random.Random(2)
    origins = {P(f"{rng.randrange(1, 223)}.{rng.randrange(256)}.0.0/16"): {rng.randrange(1, 99)}
               for _ in range(30)}
    index = build_index(origins)
    for _ in range(2000):
        v = index.judge(A(rng.getrandbits(32)))
        assert v.kind in set(SourceKind)
        assert (v.kind is SourceKind.ROUTED) == bool(v.origins)
        assert (v.kind is SourceKind.ROUTED) == (v.matched_prefix is not None)


def _random_prefixes(rng, n, base=None):
    out = {}
    for _ in range(n):
        if base is None:
            plen = rng.randint(1, 32)
            net = P((rng.getrandbits(32), plen), strict=False)
        else:
            plen = rng.randint(base.prefixlen, 32)
            net = P((int(base.network_address) + rng.getrandbits(32 - base.prefixlen), plen),
                    strict=False)
        out.setdefault(net, set()).add(rng.randrange(1, 1000))
    return out


def test_thousand_random_prefixes_match_linear_scan():
    rng = random.Random(7)
    origins = _random_prefixes(rng, 1000)
    index = build_index(origins, bogons=[])
    entries = list(origins.items())
    for _ in range(1500):
        # half the probes land inside some prefix
        if rng.random() < 0.5:
            net = rng.choice(entries)[0]
            addr = net[rng.randrange(net.num_addresses)]
        else:
            addr = A(rng.getrandbits(32))
        hit = index.longest_match(addr)
        expected = oracles.lpm_linear(entries, addr)
        assert (hit is None) == (expected is None)
        if hit is not None:
            assert hit[0] == expected[0] and hit[1] == expected[1]


@settings(max_examples=40)
@given(st.lists(st.tuples(st.integers(0, 2**32 - 1), st.integers(0, 32)), max_size=40),
       st.lists(st.integers(0, 2**32 - 1), min_size=1, max_size=40))
def test_lpm_property(nets, probes):
    entries = {}
    for net, plen in nets:
        entries[P((net, plen), strict=False)] = {plen + 1}
    trie = PrefixTrie(4)
    for prefix, value in entries.items():
        trie.insert(prefix, value)
    for probe in probes:
        expected = oracles.lpm_linear(list(entries.items()), A(probe))
        hit = trie.longest_match(probe)
        assert (hit is None) == (expected is None)
        if hit:
            assert hit[0] == expected[0]


def test_trie_items_round_trip():
    rng = random.Random(1)
    origins = _random_prefixes(rng, 200)
    index = build_index(origins, bogons=[])
    assert index.routed_prefixes() == {p: frozenset(v) for p, v in origins.items()
                                       if p.prefixlen > 0}


def test_read_bogon_file(tmp_path):
    path = tmp_path / "bogons.txt"
    path.write_text("# custom\n10.0.0.0/8\n\n192.0.2.0/24  # doc\n")
    assert read_bogon_file(path) == [P("10.0.0.0/8"), P("192.0.2.0/24")]
    path.write_text("10.0.0.0/8\nnot-a-prefix\n")
    with pytest.raises(ParseError) as info:
        read_bogon_file(path)
    assert info.value.lineno == 2


def test_custom_bogons_replace_defaults():
    index = PrefixIndex({P("10.0.0.0/8"): {5}}, bogons=[P("8.0.0.0/8")])
    assert index.judge(A("10.1.1.1")).kind is SourceKind.ROUTED
    assert index.judge(A("8.8.8.8")).kind is SourceKind.BOGON
