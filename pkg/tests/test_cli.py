import json

import numpy as np
import pytest

from tierkv.cli import main


@pytest.fixture
def trace_path(tmp_path):
    params = {"n_prefill": 600, "n_decode": 12, "d": 16, "heads": 2,
              "clusters_per_segment": 8, "segment_size": 600, "seed": 21}
    pfile = tmp_path / "params.json"
    pfile.write_text(json.dumps(params))
    out = tmp_path / "trace.bin"
    assert main(["gen-trace", "--params", str(pfile), "--out", str(out)]) == 0
    return out


def load(path):
    with open(path) as f:
        return json.load(f)


def test_run_report_schema(trace_path, tmp_path):
    report_path = tmp_path / "report.json"
    rc = main(["run", "--trace", str(trace_path), "--report", str(report_path),
               "--with-oracle"])
    assert rc == 0
    report = load(report_path)
    assert report["schema_version"] == 1
    assert set(report["config"]) >= {"retrieval_fraction", "cache_fraction", "rng_seed"}
    assert report["trace"] == {"n_heads": 2, "d": 16, "n_prefill": 600, "n_decode": 12}
    for head in report["per_head"]:
        steps = head["steps"]
        assert len(steps["recall"]) == 12
        assert all(x is not None for x in steps["rel_error"])
    agg = report["aggregates"]
    for field in ("mean_recall", "mean_rel_error", "p50_rel_error", "p90_rel_error",
                  "p99_rel_error", "cumulative_hit_ratio", "total_bytes_slow_to_fast"):
        assert agg[field] is not None
        assert not (isinstance(agg[field], float) and np.isnan(agg[field]))


def test_run_determinism_modulo_timestamp(trace_path, tmp_path):
    r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
    for path in (r1, r2):
        assert main(["run", "--trace", str(trace_path), "--report", str(path)]) == 0
    a, b = load(r1), load(r2)
    a.pop("timestamp"), b.pop("timestamp")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_oracle_matches_run_with_oracle(trace_path, tmp_path):
    o1, o2 = tmp_path / "o1.npz", tmp_path / "o2.npz"
    assert main(["oracle", "--trace", str(trace_path), "--out", str(o1)]) == 0
    assert main(["run", "--trace", str(trace_path), "--report",
                 str(tmp_path / "r.json"), "--with-oracle", "--oracle-out", str(o2)]) == 0
    a = np.load(o1)["outputs"]
    b = np.load(o2)["outputs"]
    assert np.array_equal(a, b)


def test_sweep_emits_one_report_per_point(trace_path, tmp_path):
    out_dir = tmp_path / "sweep"
    rc = main(["sweep", "--trace", str(trace_path), "--axis", "cache_fraction",
               "--values", "0.05,0.5", "--out-dir", str(out_dir)])
    assert rc == 0
    reports = sorted(out_dir.glob("report_cache_fraction_*.json"))
    assert len(reports) == 2
    values = {load(p)["sweep"]["value"] for p in reports}
    assert values == {0.05, 0.5}
    for p in reports:
        assert "build_seconds" in load(p)["timestamp"]


def test_config_file_round_trip(trace_path, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(
        {"engine": {"retrieval_fraction": 0.2, "kmeans_iters": 2, "rng_seed": 7}}))
    report_path = tmp_path / "r.json"
    assert main(["run", "--trace", str(trace_path), "--config", str(cfg_path),
                 "--report", str(report_path)]) == 0
    echoed = load(report_path)["config"]
    assert echoed["retrieval_fraction"] == 0.2
    assert echoed["kmeans_iters"] == 2
    assert echoed["rng_seed"] == 7


def test_bad_config_key_machine_readable_error(trace_path, tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"engine": {"no_such_knob": 1}}))
    rc = main(["run", "--trace", str(trace_path), "--config", str(cfg_path),
               "--report", str(tmp_path / "r.json")])
    assert rc != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    assert "no_such_knob" in err["message"]


def test_missing_trace_errors(tmp_path, capsys):
    rc = main(["run", "--trace", str(tmp_path / "nope.bin"),
               "--report", str(tmp_path / "r.json")])
    assert rc != 0
    err = json.loads(capsys.readouterr().err)
    assert "error" in err and "message" in err


def test_corrupt_trace_errors(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    rc = main(["run", "--trace", str(bad), "--report", str(tmp_path / "r.json")])
    assert rc != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "TraceFormatError"
