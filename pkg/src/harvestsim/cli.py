"""Command-line front end: ``run``, ``sweep`` and ``list-scenarios``.

Exit status is 0 on success, 1 for parse/validation problems and 2 for
runtime failures (I/O, a load with no supply, ...).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .engine import RunResult, ScenarioInvalid, run
from .metrics import task_table, window_table
from .presets import SCENARIO_DIR
from .scenario_file import ScenarioDocument, ScenarioParseError, build_scenario, dump_scenario, read_scenario_file
from .units import TIME, Quantity, UnitError, format_quantity, parse_quantity

OUT_ENV = "HARVESTSIM_OUT"
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

HEADLINE = ("efficiency", "efficiency_end_to_end", "efficiency_gross", "pulses", "pulse_rate_Hz",
            "e_store_err_raw", "e_store_err_corrected", "i_est_count_A", "i_est_swing_A",
            "i_est_interval_A", "ledger_max_residual", "tasks_detected", "load_disconnected")
SWEEP_BRIEF = ("efficiency", "pulses", "pulse_rate_Hz", "tasks_detected", "load_disconnected")


def bundled_names() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.ini"))


def resolve_scenario(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    q = SCENARIO_DIR / f"{arg}.ini"
    if q.exists():
        return q
    raise FileNotFoundError(f"no scenario file or bundled scenario named {arg!r}")


def _ts(ns: int) -> str:
    return f"{ns // 1_000_000_000}.{ns % 1_000_000_000:09d}"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _write_table(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})


def write_bundle(result: RunResult, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "trace.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_s", "kind", "source", "payload_json"])
        for e in result.trace:
            w.writerow([_ts(e.timestamp), e.kind.value, e.source, json.dumps(e.payload, sort_keys=True)])
    with (out_dir / "timeseries.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_s", "signal", "value", "unit"])
        for t, row in zip(result.ts_time, result.ts_values):
            ts = _ts(int(t))
            for (name, unit), v in zip(result.ts_signals, row):
                w.writerow([ts, name, repr(float(v)), unit])
    with (out_dir / "metrics.txt").open("w", encoding="utf-8") as fh:
        for k, v in result.metrics.items():
            fh.write(f"{k}={_fmt(v)}\n")
    _write_table(out_dir / "windows.csv", window_table(result))
    _write_table(out_dir / "tasks.csv", task_table(result))
    (out_dir / "scenario.ini").write_text(dump_scenario(result.scenario), encoding="utf-8")
    return out_dir


def summary(result: RunResult) -> str:
    m = result.metrics
    lines = [f"scenario {result.scenario.name}: {m['duration_s']:g} s simulated, {len(result.trace)} trace events"]
    for k in HEADLINE:
        if k in m:
            lines.append(f"  {k:28s} {_fmt(m[k])}")
    if m.get("load_disconnected"):
        lines.append(f"  disconnect at {m['disconnect_time_s']:.4f} s "
                     f"({m.get('disconnect_task', '?')} + {m.get('disconnect_after_task_start_s', math.nan) * 1e3:.1f} ms)")
    return "\n".join(lines)


def _default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "harvestsim-out")) / name


def _load_doc(arg: str, step: str | None) -> ScenarioDocument:
    doc = read_scenario_file(resolve_scenario(arg))
    if step is not None:
        doc.set("run.step", step)
    return doc


def cmd_run(args) -> int:
    doc = _load_doc(args.scenario, args.step)
    sc = build_scenario(doc)
    result = run(sc)
    out = write_bundle(result, Path(args.out) if args.out else _default_out(sc.name))
    print(summary(result))
    print(f"bundle written to {out}")
    return EXIT_OK


def _sweep_one(job):
    text, path, param, value, out_dir = job
    from .scenario_file import read_document

    doc = read_document(text, path)
    _apply(doc, param, value)
    result = run(build_scenario(doc))
    write_bundle(result, Path(out_dir))
    return {k: result.metrics.get(k, math.nan) for k in HEADLINE}


def _apply(doc: ScenarioDocument, param: str, value: str) -> None:
    if param == "sources.combined":
        ids = [k for k in doc.parser["sources"]] if doc.parser.has_section("sources") else []
        if ids and "combined" not in ids:
            total = parse_quantity(value).value
            for sid in ids:
                doc.parser["sources"][sid] = format_quantity(Quantity(total / len(ids), "A"))
            return
    doc.set(param, value)


def cmd_sweep(args) -> int:
    path = resolve_scenario(args.scenario)
    doc = read_scenario_file(path)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ScenarioParseError("--values is empty")
    # validate every variant up front so a bad value fails before any run starts
    try:
        for v in values:
            probe = read_scenario_file(path)
            _apply(probe, args.param, v)
            build_scenario(probe)
    except KeyError:
        raise ScenarioParseError(f"unknown parameter {args.param!r}") from None
    except ScenarioParseError as exc:
        if "unknown key" in str(exc):
            raise ScenarioParseError(f"unknown parameter {args.param!r}") from None
        raise
    sc = build_scenario(doc)
    base = Path(args.out) if args.out else _default_out(f"{sc.name}_sweep")
    jobs = [(doc.text, str(path), args.param, v, str(base / f"{k:03d}_{v.replace(' ', '')}"))
            for k, v in enumerate(values)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    base.mkdir(parents=True, exist_ok=True)
    agg = [{"value": v, **r} for v, r in zip(values, rows)]
    _write_table(base / "sweep.csv", agg)
    for row in agg:
        print(f"{args.param}={row['value']}: " + ", ".join(f"{k}={_fmt(row[k])}" for k in SWEEP_BRIEF))
    print(f"aggregate written to {base / 'sweep.csv'}")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in bundled_names():
        print(name)
    return EXIT_OK


def _duration(text: str) -> str:
    parse_quantity(text, TIME)
    return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="harvestsim", description="Multi-source harvesting and storage simulator.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one scenario and write a report bundle")
    p.add_argument("scenario", help="scenario file or bundled scenario name")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name> or ./harvestsim-out/<name>)")
    p.add_argument("--step", type=_duration, help="override the integration step, e.g. '50 us'")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="run a scenario once per parameter value")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help="section.key, e.g. combiner.i_limit or sources.combined")
    p.add_argument("--values", required=True, help="comma-separated values with units")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("list-scenarios", help="list bundled scenarios")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioParseError, ScenarioInvalid, UnitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - report, don't trace back
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
