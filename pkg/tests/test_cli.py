import csv
import io
import json
import subprocess
import sys

import pytest

from manasim.cli import main
from manasim.config import ConfigError, UnknownSweepKey, config_from_dict, parse_vary, sweep_configs
from manasim.mana import ManaConfig
from manasim.regions import RegionGeometry
from manasim.trace import load_trace


@pytest.fixture
def seg_trace(tmp_path):
    path = tmp_path / "seg.mit"
    assert main(["gen", "segmented", "--segments", "8", "--blocks", "16", "--iters", "50", "--out", str(path)]) == 0
    return path


@pytest.fixture
def small_l1(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"l1": {"kb": 16, "ways": 4}, "prefetcher": {"kind": "mana"}}))
    return path


def test_gen_counts(tmp_path):
    out = tmp_path / "a.mit"
    main(["gen", "loop", "--segments", "1", "--blocks", "2", "--iters", "2", "--out", str(out)])
    assert len(load_trace(out)) == 4
    main(["gen", "loop", "--segments", "8", "--blocks", "16", "--iters", "100", "--out", str(out)])
    assert len(load_trace(out)) == 12_800


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for p in (a, b):
        main(["gen", "random", "--segments", "4", "--blocks", "32", "--iters", "3", "--seed", "7", "--out", str(p)])
    assert a.read_bytes() == b.read_bytes()


def test_gen_text_format(tmp_path):
    out = tmp_path / "t.txt"
    main(["gen", "calls", "--segments", "2", "--blocks", "4", "--format", "text", "--out", str(out)])
    assert " c+" in out.read_text()
    assert len(load_trace(out)) > 0


def test_run_none(seg_trace, tmp_path):
    out = tmp_path / "r.json"
    assert main(["run", "--trace", str(seg_trace), "--set", "l1.kb=16", "--set", "l1.ways=4", "--out", str(out)]) == 0
    r = json.loads(out.read_text())
    assert r["covered_fraction"] == 0 and r["prefetches_issued"] == 0 and r["prefetcher"] == "none"


def test_run_mana_beats_none_and_is_deterministic(seg_trace, small_l1, tmp_path):
    a, b, n = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "n.json"
    main(["run", "--trace", str(seg_trace), "--config", str(small_l1), "--out", str(a)])
    main(["run", "--trace", str(seg_trace), "--config", str(small_l1), "--out", str(b)])
    main(["run", "--trace", str(seg_trace), "--config", str(small_l1), "--set", "prefetcher={\"kind\": \"none\"}", "--out", str(n)])
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["covered_fraction"] > json.loads(n.read_text())["covered_fraction"]


def test_run_csv(seg_trace, small_l1, capsys):
    main(["run", "--trace", str(seg_trace), "--config", str(small_l1), "--csv"])
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 2 and rows[0][0] == "prefetcher"


def read_sweep(path):
    return list(csv.DictReader(path.open()))


def test_sweep_lookahead(seg_trace, small_l1, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--trace", str(seg_trace), "--config", str(small_l1), "--vary", "lookahead=1,3", "--out", str(out)]) == 0
    rows = read_sweep(out)
    assert [r["sweep_value"] for r in rows] == ["1", "3"]
    assert float(rows[1]["covered_fraction"]) >= float(rows[0]["covered_fraction"])


def test_sweep_parallel_matches_serial(seg_trace, small_l1, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--trace", str(seg_trace), "--config", str(small_l1), "--vary", "l1.kb=16,8,32"]
    main(args + ["--out", str(a)])
    main(args + ["--jobs", "3", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    assert [r["sweep_value"] for r in read_sweep(a)] == ["16", "8", "32"]


def test_sweep_l1_sizes_non_decreasing(seg_trace, small_l1, tmp_path):
    out = tmp_path / "s.csv"
    main(["sweep", "--trace", str(seg_trace), "--config", str(small_l1), "--vary", "l1.kb=32,16,8", "--out", str(out)])
    reqs = [int(r["l1_external_requests"]) for r in read_sweep(out)]
    assert reqs == sorted(reqs)


def test_sweep_errors(seg_trace, capsys):
    assert main(["sweep", "--trace", str(seg_trace), "--vary", "lookahead="]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "UnknownSweepKey"
    assert main(["sweep", "--trace", str(seg_trace), "--vary", "colour=1"]) == 2


def test_storage_command(capsys):
    assert main(["storage", "--partial-tag", "2"]) == 0
    out = capsys.readouterr().out
    assert "0.44 KB" in out and "14.5 KB" in out and "14.94 KB" in out
    main(["storage", "--partial-tag", "all", "--csv"])
    assert len(capsys.readouterr().out.splitlines()) == 7
    assert main(["storage", "--partial-tag", "99"]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "InvalidGeometry"
    assert main(["storage", "--partial-tag", "3", "--hobp-index-bits", "6"]) == 0


def test_count_records(seg_trace, capsys):
    assert main(["count-records", "--trace", str(seg_trace), "--kind", "mana_trigger"]) == 0
    assert capsys.readouterr().out.strip() == "16"


def test_exit_codes(tmp_path, seg_trace, capsys):
    assert main([]) == 2
    assert main(["run", "--trace", str(tmp_path / "missing.mit")]) == 3
    bad = tmp_path / "bad.mit"
    bad.write_bytes(b"MIT1\x01" + b"\x00" * 4)
    assert main(["run", "--trace", str(bad)]) == 3
    capsys.readouterr()
    assert main(["run", "--trace", str(seg_trace), "--set", "l1.colour=1"]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err == {"error": "ConfigError", "message": "unknown key l1.colour", "key": "l1.colour"}


def test_invariant_violation_exit_code(seg_trace, monkeypatch):
    import manasim.cli as cli
    from manasim.engine import InvariantViolation

    def broken(*a, **k):
        raise InvariantViolation("forced")

    monkeypatch.setattr(cli, "run", broken)
    assert main(["run", "--trace", str(seg_trace)]) == 4


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "manasim", "storage", "--partial-tag", "11"], capture_output=True, text=True)
    assert out.returncode == 0 and "17.02 KB" in out.stdout


# -- config parsing ---------------------------------------------------------


def test_config_defaults():
    cfg = config_from_dict({})
    assert cfg.l1.total_bytes == 32 * 1024 and cfg.l2.total_bytes == 512 * 1024
    assert cfg.beyond_l2_latency == 20 and cfg.prefetcher is None and cfg.warmup is None


def test_config_mana_params():
    cfg = config_from_dict({"prefetcher": {"kind": "mana", "lookahead": 2, "geometry": "2:6"}, "warmup": 10})
    assert cfg.prefetcher == ManaConfig(lookahead=2, geometry=RegionGeometry(2, 6))
    assert cfg.warmup == 10
    assert config_from_dict({"prefetcher": {"kind": "pif", "geometry": [1, 7]}}).prefetcher.geometry == RegionGeometry(1, 7)


@pytest.mark.parametrize(
    "data,key",
    [
        ({"l3": {}}, "l3"),
        ({"l1": {"size": 4}}, "l1.size"),
        ({"latency": {"dram": 4}}, "latency.dram"),
        ({"prefetcher": {"kind": "mana", "depth": 4}}, "prefetcher.depth"),
        ({"prefetcher": {"kind": "nextline", "lookahead": 4}}, "prefetcher.lookahead"),
        ({"prefetcher": {"kind": "magic"}}, "prefetcher.kind"),
        ({"prefetcher": {"kind": "mana", "geometry": "2-6"}}, "prefetcher.geometry"),
        ({"l1": {"kb": "big"}}, "l1.kb"),
        ({"warmup": -1}, "warmup"),
    ],
)
def test_config_errors_name_the_key(data, key):
    with pytest.raises(ConfigError) as err:
        config_from_dict(data)
    assert err.value.key == key


def test_sweep_key_resolution():
    assert parse_vary("lookahead=1,2")[0] == "prefetcher.lookahead"
    assert parse_vary("l1.kb=8")[0] == "l1.kb"
    with pytest.raises(UnknownSweepKey):
        parse_vary("nonsense=1")
    rows = sweep_configs({"prefetcher": {"kind": "mana"}}, "geometry=0:8,2:6")
    assert [cfg.prefetcher.geometry for _, cfg in rows] == [RegionGeometry(0, 8), RegionGeometry(2, 6)]
