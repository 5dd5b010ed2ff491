import csv

import pytest

from harvestsim.cli import main
from harvestsim.presets import bundled


def read_metrics(path):
    out = {}
    for line in path.read_text().splitlines():
        k, _, v = line.partition("=")
        out[k] = v
    return out


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    assert capsys.readouterr().out.split() == sorted(bundled())


def test_run_bundle(tmp_path, capsys):
    assert main(["run", "fig12_defective", "--out", str(tmp_path)]) == 0
    assert "disconnect" in capsys.readouterr().out
    for name in ("trace.csv", "timeseries.csv", "metrics.txt", "windows.csv", "tasks.csv", "scenario.ini"):
        assert (tmp_path / name).exists()
    with (tmp_path / "trace.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["timestamp_s", "kind", "source", "payload_json"]
    disc = [r for r in rows if r["kind"] == "load-disconnected"]
    starts = [r for r in rows if r["kind"] == "task-start" and '"task3"' in r["payload_json"]]
    assert len(disc) == 1
    delay = float(disc[0]["timestamp_s"]) - float(starts[-1]["timestamp_s"])
    assert delay == pytest.approx(0.2, abs=0.05)
    with (tmp_path / "timeseries.csv").open() as fh:
        assert next(csv.reader(fh)) == ["timestamp_s", "signal", "value", "unit"]


def test_env_default_out(tmp_path, monkeypatch):
    monkeypatch.setenv("HARVESTSIM_OUT", str(tmp_path))
    assert main(["run", "fig11_regular"]) == 0
    assert (tmp_path / "fig11_regular" / "metrics.txt").exists()


def test_step_override(tmp_path):
    assert main(["run", "fig11_regular", "--out", str(tmp_path), "--step", "50 us"]) == 0
    assert read_metrics(tmp_path / "metrics.txt")["step_s"] == repr(50e-6)


def test_fig7_curve_shape(tmp_path):
    assert main(["run", "fig7_staircase", "--out", str(tmp_path)]) == 0
    with (tmp_path / "windows.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    rates = [float(r["pulse_rate_Hz"]) for r in rows]
    currents = [float(r["i_source_A"]) for r in rows]
    knee = currents.index(5e-3)
    assert all(b > a for a, b in zip(rates[:knee], rates[1:knee + 1]))
    assert max(rates[knee:]) - min(rates[knee:]) < 0.02 * rates[knee]


def test_empty_file_is_parse_error(tmp_path, capsys):
    p = tmp_path / "e.ini"
    p.write_text("")
    assert main(["run", str(p)]) == 1
    assert "e.ini:1:1" in capsys.readouterr().err


def test_bare_number_is_validation_error(tmp_path, capsys):
    p = tmp_path / "b.ini"
    p.write_text("[run]\nduration = 3\n")
    assert main(["run", str(p)]) == 1
    assert "run.duration" in capsys.readouterr().err


def test_runtime_error_exit(tmp_path):
    p = tmp_path / "r.ini"
    p.write_text("[run]\nduration = 1 s\n[storage]\nC1 = 15 mF, 3 V, disconnected\n"
                 "[icu]\nenabled = false\n[load]\ntasks = a: 5 mA 50 ms\ninter_task_gap = 100 ms\n")
    assert main(["run", str(p)]) == 2
    assert main(["run", str(tmp_path / "missing.ini")]) == 2


SWEEP = """[run]
duration = 15 s
report_period = 100 ms
[sources]
solar = 0 A
teg = 0 A
[storage]
C1 = 15 mF, 0 V, to-supply
C2 = 33 mF, 0 V, to-combiner
[icu]
enabled = false
"""


def test_sweep_aggregate(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text(SWEEP)
    values = ["0.5 mA"] + [f"{k} mA" for k in range(1, 21)]
    out = tmp_path / "out"
    assert main(["sweep", str(p), "--param", "sources.combined", "--values", ",".join(values),
                 "--out", str(out), "--jobs", "2"]) == 0
    with (out / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["value"] for r in rows] == values
    assert all(float(r["efficiency"]) >= 0.88 for r in rows)
    assert len(list(out.iterdir())) == len(values) + 1


def test_single_value_sweep_matches_run(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text(SWEEP.replace("solar = 0 A", "solar = 2 mA"))
    assert main(["run", str(p), "--out", str(tmp_path / "run")]) == 0
    assert main(["sweep", str(p), "--param", "sources.solar", "--values", "2 mA", "--out", str(tmp_path / "sw")]) == 0
    bundle = next(d for d in (tmp_path / "sw").iterdir() if d.is_dir())
    assert read_metrics(bundle / "metrics.txt") == read_metrics(tmp_path / "run" / "metrics.txt")
    assert (bundle / "trace.csv").read_bytes() == (tmp_path / "run" / "trace.csv").read_bytes()


def test_sweep_ilimit_moves_knee(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text(SWEEP.replace("solar = 0 A", "solar = 4 mA").replace("teg = 0 A", "teg = 4 mA"))
    out = tmp_path / "out"
    assert main(["sweep", str(p), "--param", "combiner.i_limit", "--values", "5 mA,10 mA", "--out", str(out)]) == 0
    with (out / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    est = [float(r["i_est_swing_A"]) for r in rows]
    assert est[0] == pytest.approx(5e-3, rel=0.05)
    assert est[1] == pytest.approx(8e-3, rel=0.05)


def test_sweep_unknown_parameter(tmp_path, capsys):
    assert main(["sweep", "fig11_regular", "--param", "combiner.nope", "--values", "1 mA",
                 "--out", str(tmp_path)]) == 1
    assert "unknown parameter" in capsys.readouterr().err
