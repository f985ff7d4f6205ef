import csv
import io
import json
from pathlib import Path

import pytest

from ticsim.errors import ConfigError, Overcommitted
from ticsim.harness import Scenario, load_scenario, run
from ticsim.harness import simulation as simulation_mod
from ticsim.harness.cli import check_orthogonality, main, throughput
from ticsim.monitor_stream import ARCHIVE_HEADER

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def test_throughput_cli(capsys):
    assert main(["throughput", "--dlc", "8"]) == 0
    out = capsys.readouterr().out
    assert "3816.8" in out and "PASS" in out


def test_throughput_bad_dlc(capsys):
    assert main(["throughput", "--dlc", "9"]) == 2
    assert "error" in capsys.readouterr().err


def test_throughput_value():
    ops, ok = throughput(0, out=io.StringIO())
    assert ok and round(float(ops), 1) == 7462.7


def test_orthogonality_cli(capsys):
    assert main(["check-orthogonality", "--antennas", "4", "--verbose"]) == 0
    out = capsys.readouterr().out
    assert out.count(" ok") == 16
    assert main(["check-orthogonality", "--antennas", "64"]) == 2


def test_orthogonality_rows():
    rows = check_orthogonality(5, out=io.StringIO())
    assert len(rows) == 25
    assert {r[2] for r in rows if r[0] != r[1]} == {(0, 0)}


def test_run_cli_writes_outputs(tmp_path, capsys):
    assert main(["run", "--duration", "2", "--seed", "3", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["violations"] == 0
    assert (tmp_path / "archive.csv").read_text().startswith(ARCHIVE_HEADER + "\n")
    assert json.loads(capsys.readouterr().out)["events"] == 41


def test_run_cli_bad_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"buses": [], "devices": [{"name": "X"}]}))
    assert main(["run", "--config", str(bad), "--duration", "1", "--out", str(tmp_path / "o")]) == 2


def test_scenario_validation():
    with pytest.raises(ConfigError):
        Scenario(latency_ns=(0, 48_000_001))
    with pytest.raises(ConfigError):
        Scenario(latency_ns=(5, 5))
    with pytest.raises(ConfigError):
        Scenario(pulse_jitter_ns=(0, 30_000_000))
    with pytest.raises(ConfigError):
        Scenario(duration_s=1, script=[{"at_ns": 2_000_000_000, "op": "set", "device": "X"}])
    Scenario(min_lead_events=3, latency_ns=(0, 96_000_000))


def test_scenario_file_schema(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"duration_s": "long"}))
    with pytest.raises(ConfigError):
        load_scenario(p)


def test_sample_scenario_runs():
    sc = load_scenario(SCENARIOS / "fringe_tracking.json")
    _, report = run(sc)
    assert report.violations == 0
    assert report.rejected_late == 1
    assert report.accepted == 4
    assert report.channel_samples["fringe"] > 0
    assert report.records_archived == report.samples_collected


def test_single_late_command_is_not_a_violation():
    script = [{"at_ns": 1_000_000_000, "op": "set", "device": "ANT1/CRYO", "property": "SETPOINT",
               "value": 5, "lead_events": 1}]
    _, report = run(Scenario(duration_s=3, script=script))
    assert (report.rejected, report.rejected_late, report.violations) == (1, 1, 0)


def test_client_errors_are_counted_not_fatal():
    script = [{"at_ns": 0, "op": "set", "device": "ANT1/CRYO", "property": "SETPOINT",
               "value": 5000, "lead_events": 3}]
    _, report = run(Scenario(duration_s=1, script=script))
    assert report.client_errors == 1 and report.accepted == 0


def _archive(tmp_path, name, seed, duration=10):
    out = tmp_path / name
    run(Scenario(duration_s=duration, seed=seed), out)
    return (out / "archive.csv").read_bytes()


def test_same_seed_byte_identical(tmp_path):
    assert _archive(tmp_path, "a", 11) == _archive(tmp_path, "b", 11)


def test_archive_contents_default_run(tmp_path):
    sim, report = run(Scenario(duration_s=10, seed=1), tmp_path)
    with open(tmp_path / "archive.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == report.samples_collected == report.records_archived
    last = {}
    for r in rows:
        key = (r["device"], r["property"])
        t = (int(r["event_seq"]), int(r["offset_ns"]))
        assert key not in last or t > last[key]
        last[key] = t
    assert report.batches_contiguous
    assert {r["quality"] for r in rows} <= {"ok", "range", "timeout"}


def test_partial_archive_marker(tmp_path, monkeypatch):
    def boom(self, sink=None):
        raise OSError("disk full")

    monkeypatch.setattr(simulation_mod.Simulation, "run", boom)
    with pytest.raises(OSError):
        run(Scenario(duration_s=1), tmp_path)
    assert (tmp_path / "archive.csv.partial").exists()


@pytest.mark.parametrize("n, zeros, diag", [(1, 0, 1), (3, 6, 3), (63, 3906, 63)])
def test_orthogonality_counts(n, zeros, diag):
    rows = check_orthogonality(n, out=io.StringIO())
    assert sum(r[2] == (0, 0) for r in rows if r[0] != r[1]) == zeros
    assert sum(r[2] == (4096, 0) for r in rows if r[0] == r[1]) == diag


def _overcommit_scenario():
    step = {"at_ns": 0, "op": "monitor", "device": "ANT1/FTS", "property": "STATUS", "period_events": 1}
    return Scenario(duration_s=1, script=[dict(step) for _ in range(200)])


def test_overcommit_fails_the_run():
    with pytest.raises(Overcommitted):
        run(_overcommit_scenario())


def test_overcommit_cli_diagnostics(tmp_path, capsys):
    p = tmp_path / "s.json"
    sc = _overcommit_scenario()
    p.write_text(json.dumps({"duration_s": 1, "script": sc.script}))
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "Overcommitted" in capsys.readouterr().err
