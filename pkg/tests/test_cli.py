import os

import msgspec
import pytest

from conftest import FIXTURES
from iolens import synth
from iolens.cli import main


@pytest.fixture
def store_dir(tmp_path):
    return str(tmp_path / "store")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


FIG2A = str(FIXTURES / "fluentbit_v1.jsonl")
FIG2B = str(FIXTURES / "fluentbit_v2.jsonl")


def test_ingest_and_query_table(capsys, store_dir):
    code, out, _ = run(capsys, "ingest", FIG2A, "--session", "fig2a",
                       "--store", store_dir)
    assert code == 0
    assert "produced=12" in out and "stored=12" in out
    assert "0.0% unresolved" in out

    code, out, _ = run(capsys, "query", "--session", "fig2a", "--store", store_dir)
    assert code == 0
    lines = [l for l in out.splitlines() if l.strip()]
    assert len(lines) == 1 + 12  # header + events
    assert "app.log" in out
    # narrative order: both writes at offset 0, final read at offset 26
    data_rows = [l for l in lines[1:] if " read " in l or " write " in l]
    assert len(data_rows) == 4
    assert data_rows[-1].split()[-3:] == ["26", "0", "0"]  # offset, bytes, ret


def test_ingest_missing_file_exits_2(capsys, store_dir):
    code, _, err = run(capsys, "ingest", "/no/such/trace.jsonl",
                       "--session", "x", "--store", store_dir)
    assert code == 2
    assert "/no/such/trace.jsonl" in err


def test_ingest_malformed_reports_line(tmp_path, capsys, store_dir):
    bad = tmp_path / "bad.jsonl"
    bad.write_bytes(msgspec.json.encode(synth.fluentbit_records()[0]) + b"\n{broken\n")
    code, _, err = run(capsys, "ingest", str(bad), "--session", "x",
                       "--store", store_dir)
    assert code == 2
    assert "line 2" in err


def test_ingest_empty_file(tmp_path, capsys, store_dir):
    empty = tmp_path / "empty.jsonl"
    empty.write_bytes(b"")
    code, out, _ = run(capsys, "ingest", str(empty), "--session", "e",
                       "--store", store_dir)
    assert code == 0
    assert "produced=0" in out


def test_ingest_with_tid_filter_matches_oracle(capsys, store_dir, tmp_path):
    recs, _ = synth.contention_records(duration_s=5)
    trace = tmp_path / "t.jsonl"
    trace.write_bytes(b"".join(msgspec.json.encode(r) + b"\n" for r in recs))
    code, out, _ = run(capsys, "ingest", str(trace), "--session", "t",
                       "--store", store_dir, "--tids", "900,901", "--no-resolve")
    assert code == 0
    want = sum(1 for r in recs if r["tid"] in (900, 901))
    assert f"stored={want}" in out


def test_report_stale_offset_exit_codes(capsys, store_dir):
    run(capsys, "ingest", FIG2A, "--session", "fig2a", "--store", store_dir)
    run(capsys, "ingest", FIG2B, "--session", "fig2b", "--store", store_dir)

    code, out, _ = run(capsys, "report", "--session", "fig2a",
                       "--store", store_dir, "stale-offset")
    assert code == 1
    assert "app.log" in out and "26" in out

    code, out, _ = run(capsys, "report", "--session", "fig2b",
                       "--store", store_dir, "stale-offset")
    assert code == 0
    assert "no findings" in out


def test_report_contention_threshold_unreachable(capsys, store_dir, tmp_path):
    recs, _ = synth.contention_records(duration_s=30, contended=[(5, 10)])
    trace = tmp_path / "kvs.jsonl"
    trace.write_bytes(b"".join(msgspec.json.encode(r) + b"\n" for r in recs))
    run(capsys, "ingest", str(trace), "--session", "kvs", "--store", store_dir,
        "--no-resolve")
    code, out, _ = run(capsys, "report", "--session", "kvs", "--store", store_dir,
                       "contention", "--k-threshold", "99")
    assert code == 0 and "no findings" in out
    code, out, _ = run(capsys, "report", "--session", "kvs", "--store", store_dir,
                       "contention")
    assert code == 1


def test_report_unknown_detector(capsys, store_dir):
    run(capsys, "ingest", FIG2A, "--session", "s", "--store", store_dir)
    code, _, err = run(capsys, "report", "--session", "s", "--store", store_dir,
                       "nonsense")
    assert code == 2 and "unknown detector" in err


def test_export_reingest_round_trip(capsys, store_dir, tmp_path):
    run(capsys, "ingest", FIG2A, "--session", "a", "--store", store_dir)
    dump = tmp_path / "dump.jsonl"
    code, _, _ = run(capsys, "export", "--session", "a", "--store", store_dir,
                     "-o", str(dump))
    assert code == 0
    code, out, _ = run(capsys, "ingest", str(dump), "--session", "b",
                       "--store", store_dir)
    assert code == 0 and "stored=12" in out
    from iolens import analyze
    from iolens.store import Store
    st = Store(store_dir)
    sa = analyze.session_summary(st, "a")
    sb = analyze.session_summary(st, "b")
    for key in ("per_kind", "per_file_type", "per_thread", "stored",
                "unresolved", "inconsistencies"):
        assert sa[key] == sb[key]


def test_export_csv_aggregate(capsys, store_dir, tmp_path):
    run(capsys, "ingest", FIG2A, "--session", "a", "--store", store_dir)
    out_file = tmp_path / "agg.csv"
    code, _, _ = run(capsys, "export", "--session", "a", "--store", store_dir,
                     "--format", "csv", "-o", str(out_file))
    assert code == 0
    lines = out_file.read_text().splitlines()
    assert lines[0] == "comm,kind,bucket_ns,count"
    assert any(l.startswith("app,write") for l in lines)


def test_resolve_command(capsys, store_dir):
    run(capsys, "ingest", FIG2A, "--session", "a", "--store", store_dir,
        "--no-resolve")
    code, out, _ = run(capsys, "resolve", "--session", "a", "--store", store_dir)
    assert code == 0
    assert "resolved=11" in out and "unresolved=0" in out


def test_unknown_session_exits_2(capsys, store_dir):
    os.makedirs(store_dir, exist_ok=True)
    code, _, err = run(capsys, "query", "--session", "ghost", "--store", store_dir)
    assert code == 2 and "ghost" in err


def test_config_precedence(capsys, tmp_path, monkeypatch):
    """flag > config file > env var > default, for the store directory."""
    cfg_store = tmp_path / "from-config"
    env_store = tmp_path / "from-env"
    flag_store = tmp_path / "from-flag"
    cfg = tmp_path / "io.toml"
    cfg.write_text(f'[store]\ndir = "{cfg_store}"\n[session]\nname = "cfg-sess"\n')

    monkeypatch.setenv("IOLENS_STORE_DIR", str(env_store))
    code, _, _ = run(capsys, "ingest", FIG2A, "--config", str(cfg))
    assert code == 0
    assert (cfg_store / "sessions" / "cfg-sess").is_dir()  # file beats env

    code, _, _ = run(capsys, "ingest", FIG2A, "--session", "s2")
    assert code == 0
    assert (env_store / "sessions" / "s2").is_dir()  # env beats default

    code, _, _ = run(capsys, "ingest", FIG2A, "--config", str(cfg),
                     "--session", "s3", "--store", str(flag_store))
    assert code == 0
    assert (flag_store / "sessions" / "s3").is_dir()  # flag beats file


def test_missing_config_file_exits_2_naming_path(capsys, store_dir):
    code, _, err = run(capsys, "record", "--config", "/no/such/io.toml",
                       "--store", store_dir, "/bin/true")
    assert code == 2
    assert "/no/such/io.toml" in err


def test_serve_bind_failure_propagates_nonzero(capsys, store_dir, monkeypatch):
    import uvicorn

    def failing_run(*a, **k):
        raise SystemExit(1)  # what uvicorn does when the port is taken

    monkeypatch.setattr(uvicorn, "run", failing_run)
    code = main(["serve", "--store", store_dir, "--port", "1"])
    assert code == 1


def test_record_without_live_support_exits_3(capsys, store_dir, monkeypatch):
    import iolens.capture.live as live
    monkeypatch.setattr(live, "platform_supported",
                        lambda: (False, "forced off for test"))
    code, _, err = run(capsys, "record", "--session", "r", "--store", store_dir,
                       "/bin/true")
    assert code == 3
    assert "unsupported" in err.lower() or "forced off" in err
