import json
import subprocess
import sys
from pathlib import Path

import pytest

from ixpspoof.cli import build_parser, main, resolve_config

DEMO = Path(__file__).resolve().parents[1] / "src" / "ixpspoof" / "data" / "demo"
GOLDEN = Path(__file__).parent / "golden"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def demo_config(tmp_path, **changes):
    doc = json.loads((DEMO / "demo.json").read_text())
    for key in ("routes", "flows"):
        doc[key] = [str(DEMO / p) for p in doc[key]]
    for key in ("relationships", "orgs"):
        doc[key] = str(DEMO / doc[key])
    for key, value in changes.items():
        if value is None:
            doc.pop(key, None)
        else:
            doc[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


class TestConfigErrors:
    def test_caida_without_relationships(self, tmp_path, capsys):
        config = demo_config(tmp_path, relationships=None, org_ext=False)
        out = tmp_path / "out"
        code, _, err = run(["classify", "--config", config, "--cone", "caida", "--out", out],
                           capsys)
        assert code != 0
        lines = err.strip().splitlines()
        assert len(lines) == 1 and "relationships" in lines[0]
        assert lines[0].startswith("ixpspoof: error:")
        assert not out.exists()

    def test_org_ext_without_orgs(self, tmp_path, capsys):
        config = demo_config(tmp_path, orgs=None)
        code, _, err = run(["build-cones", "--config", config, "--out", tmp_path / "o"], capsys)
        assert code == 2 and "orgs" in err

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["classify", "--routes", tmp_path / "nope.txt", "--flows",
                            DEMO / "flows.csv", "--cone", "naive", "--out", tmp_path / "o"], capsys)
        assert code == 2 and "nope.txt" in err and len(err.strip().splitlines()) == 1

    def test_inverted_window(self, tmp_path, capsys):
        config = demo_config(tmp_path, window_start=10, window_end=5)
        code, _, err = run(["classify", "--config", config, "--out", tmp_path / "o"], capsys)
        assert code == 2 and "window" in err

    def test_parse_error_names_line(self, tmp_path, capsys):
        bad = tmp_path / "flows.csv"
        text = (DEMO / "flows.csv").read_text().splitlines()
        bad.write_text("\n".join(text[:3] + ["garbage"]) + "\n")
        code, _, err = run(["classify", "--routes", DEMO / "routes.txt", "--flows", bad,
                            "--cone", "naive", "--out", tmp_path / "o"], capsys)
        assert code == 2 and "line 4" in err

    def test_unknown_config_key(self, tmp_path, capsys):
        config = demo_config(tmp_path, colour="blue")
        code, _, err = run(["classify", "--config", config, "--out", tmp_path / "o"], capsys)
        assert code == 2 and "colour" in err


def test_flags_win_over_config(tmp_path):
    config = demo_config(tmp_path, workers=1, bin_width=60)
    args = build_parser().parse_args(["report", "--config", str(config), "--cone", "full",
                                      "--workers", "3", "--bin-width", "900", "--out",
                                      str(tmp_path / "x")])
    cfg = resolve_config(args)
    assert cfg.cones == ["full"] and cfg.workers == 3 and cfg.bin_width == 900
    assert cfg.out == tmp_path / "x"
    assert cfg.org_ext is True
    assert cfg.variant_names() == ["full", "full+org"]


def test_config_paths_relative_to_config_file(tmp_path):
    args = build_parser().parse_args(["classify", "--config", str(DEMO / "demo.json")])
    cfg = resolve_config(args)
    assert [Path(p) for p in cfg.routes] == [DEMO / "routes.txt"]


def test_report_matches_golden(tmp_path, capsys):
    out = tmp_path / "out"
    code, _, _ = run(["report", "--config", DEMO / "demo.json", "--cone", "full", "--org-ext",
                      "--out", out], capsys)
    assert code == 0
    expected = sorted(p.name for p in (GOLDEN / "demo_full_org").iterdir())
    assert sorted(p.name for p in out.iterdir()) == expected
    for name in expected:
        assert (out / name).read_bytes() == (GOLDEN / "demo_full_org" / name).read_bytes(), name


def test_demo_shares_match_reference(tmp_path, capsys):
    """Shares from the CLI agree with the brute-force reference values to 0.001."""
    reference = json.loads((GOLDEN / "demo_shares.json").read_text())
    code, _, _ = run(["classify", "--config", DEMO / "demo.json", "--out", tmp_path], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "totals.json").read_text())
    assert set(doc["variants"]) == set(reference)
    for variant, classes in reference.items():
        for cls, shares in classes.items():
            got = doc["variants"][variant][cls]
            assert got["bytes_upscaled_share"] == pytest.approx(shares["bytes"], abs=1e-3)
            assert got["packets_upscaled_share"] == pytest.approx(shares["packets"], abs=1e-3)


def test_build_cones(tmp_path, capsys):
    code, _, _ = run(["build-cones", "--config", DEMO / "demo.json", "--out", tmp_path], capsys)
    assert code == 0
    rows = (tmp_path / "cones.csv").read_text().splitlines()
    assert rows[0] == "variant,member,entry"
    assert {r.split(",")[0] for r in rows[1:]} == {"naive", "caida", "caida+org", "full",
                                                   "full+org"}


def test_synth_round_trip(tmp_path, capsys):
    topo_dir, flow_dir, drop_dir = tmp_path / "t", tmp_path / "f", tmp_path / "d"
    assert run(["synth", "gen-topology", "--n-ases", 30, "--n-members", 8, "--seed", 1,
                "--out", topo_dir], capsys)[0] == 0
    assert run(["synth", "gen-flows", "--topology", topo_dir / "topology.json", "--n-flows", 400,
                "--spoof-rate", 0.2, "--seed", 2, "--include-bogon", "--out", flow_dir],
               capsys)[0] == 0
    assert run(["synth", "drop-visibility", "--topology", topo_dir / "topology.json", "--routes",
                topo_dir / "routes.txt", "--loss", 0.5, "--seed", 3, "--out", drop_dir],
               capsys)[0] == 0
    full_lines = (topo_dir / "routes.txt").read_text().count("\n")
    assert 0 < (drop_dir / "routes.txt").read_text().count("\n") < full_lines

    cls_dir = tmp_path / "c"
    assert run(["classify", "--routes", drop_dir / "routes.txt", "--relationships",
                drop_dir / "relationships.txt", "--orgs", topo_dir / "orgs.txt", "--flows",
                flow_dir / "flows.csv", "--cone", "naive", "--cone", "caida", "--cone", "full",
                "--org-ext", "--out", cls_dir], capsys)[0] == 0
    code, out, _ = run(["synth", "evaluate", "--labels", flow_dir / "labels.csv", "--verdicts",
                        cls_dir / "verdicts.csv"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert list(doc) == ["naive", "caida", "caida+org", "full", "full+org"]
    assert all(doc[v]["sanitized"] <= 400 for v in doc)
    assert run(["synth", "evaluate", "--labels", flow_dir / "labels.csv", "--verdicts",
                cls_dir / "verdicts.csv", "--out", tmp_path / "e.json"], capsys)[0] == 0
    assert json.loads((tmp_path / "e.json").read_text()) == doc


def test_evaluate_length_mismatch(tmp_path, capsys):
    (tmp_path / "l.csv").write_text("flow_line_no,truth,sender,claimed_origin\n1,legit,1,1\n")
    (tmp_path / "v.csv").write_text("flow_line_no,variant,class\n1,full,regular\n2,full,invalid\n")
    code, _, err = run(["synth", "evaluate", "--labels", tmp_path / "l.csv", "--verdicts",
                        tmp_path / "v.csv"], capsys)
    assert code == 2 and "2 verdicts" in err


@pytest.mark.parametrize("argv", [["--help"], ["report", "--help"], ["synth", "gen-flows", "--help"]])
def test_help(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 0
    assert "usage:" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ixpspoof", "--version"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.strip().startswith("ixpspoof ")
