"""Derived figures of merit computed from a finished run."""
from __future__ import annotations

import math
from typing import TYPE_CHECKING

from . import kernels as K
from .combiner import (
    OVER,
    harvester_current_estimate,
    harvester_current_from_intervals,
    harvester_current_measured_swing,
    stored_energy_estimate,
)
from .units import EventKind

if TYPE_CHECKING:
    from .engine import RunResult, Window


def _ratio(num: float, den: float) -> float:
    # nothing flowed: report zero rather than NaN
    return num / den if den > 0 else 0.0


def _rel_err(est: float, true: float) -> float:
    if true > 0:
        return abs(est - true) / true
    return 0.0 if est == 0 else math.inf


def window_row(result: "RunResult", w: "Window") -> dict[str, float]:
    cfg = result.scenario.combiner
    span = (w.end - w.start) * 1e-9
    pulses = [p for p in result.pulses if w.start < p.time <= w.end]
    d = w.ledger_end - w.ledger_start
    src = d[K.L_SRC]
    reg_out = d[K.L_REG_OUT]
    d_buf = w.buf_energy_end - w.buf_energy_start
    e_true = sum(p.e_out for p in pulses)
    row = {
        "start_s": w.start * 1e-9,
        "end_s": w.end * 1e-9,
        "i_source_A": w.i_source,
        "pulses": len(pulses),
        "pulses_over": sum(p.regime == OVER for p in pulses),
        "pulse_rate_Hz": _ratio(len(pulses), span),
        "energy_source_J": src,
        "energy_regulator_out_J": reg_out,
        "efficiency_end_to_end": _ratio(reg_out, src - d_buf),
        "efficiency_gross": _ratio(reg_out, src),
        "overflow_J": d[K.L_OVERFLOW],
        "e_store_true_J": e_true,
        "e_store_est_raw_J": stored_energy_estimate(pulses, cfg, corrected=False),
        "e_store_est_corrected_J": stored_energy_estimate(pulses, cfg, corrected=True),
        "e_store_est_visible_J": stored_energy_estimate(pulses, cfg, corrected=True, classify="visible"),
    }
    if span > 0:
        row["i_est_count_A"] = harvester_current_estimate(len(pulses), span, cfg).value
        row["i_est_swing_A"] = harvester_current_measured_swing(pulses, span, cfg).value
    row["i_est_interval_A"] = harvester_current_from_intervals(pulses, cfg).value
    return row


def window_table(result: "RunResult") -> list[dict[str, float]]:
    return [window_row(result, w) for w in result.windows if w.end > w.start]


def task_table(result: "RunResult") -> list[dict[str, float]]:
    """Comparator response per load task: detection delay and release delay."""
    rises = [e.timestamp for e in result.events(EventKind.LMM_RISE)]
    falls = [e.timestamp for e in result.events(EventKind.LMM_FALL)]
    disc = result.events(EventKind.LOAD_DISCONNECTED)
    t_disc = disc[0].timestamp if disc else None
    wins = result.scenario.load.windows
    rows = []
    for k, w in enumerate(wins):
        a, b = round(w.start * 1e9), round(w.end * 1e9)
        nxt = round(wins[k + 1].start * 1e9) if k + 1 < len(wins) else math.inf
        if t_disc is not None and t_disc < a:
            break
        rise = next((t for t in rises if a <= t <= b), None)
        row = {"task": w.name, "index": w.index, "current_A": w.current,
               "start_s": w.start, "end_s": w.end, "detected": rise is not None,
               "t1_s": (rise - a) * 1e-9 if rise is not None else math.nan, "t2_s": math.nan}
        if rise is not None:
            # release delay only exists if the comparator was still high at the task end
            fall = next((t for t in falls if b < t < nxt), None)
            if fall is not None:
                row["t2_s"] = (fall - b) * 1e-9
        rows.append(row)
    return rows


def compute_metrics(result: "RunResult") -> dict[str, float]:
    sc = result.scenario
    cfg = sc.combiner
    led = result.ledger
    pulses = result.pulses
    m: dict[str, float] = {
        "duration_s": sc.duration,
        "step_s": sc.step,
        "pulses": len(pulses),
        "pulses_over": sum(p.regime == OVER for p in pulses),
        "pulses_over_visible": sum(p.regime_visible == OVER for p in pulses),
    }
    m["pulse_rate_Hz"] = _ratio(len(pulses), sc.duration)
    m.update(led)
    d_buf = result.final_buffer_energy - result.initial_buffer_energy
    m["efficiency_gross"] = _ratio(led["regulator_output_J"], led["energy_from_sources_J"])
    m["efficiency_end_to_end"] = _ratio(led["regulator_output_J"], led["energy_from_sources_J"] - d_buf)
    m["efficiency"] = m["efficiency_end_to_end"]
    e_true = sum(p.e_out for p in pulses)
    m["e_store_true_J"] = e_true
    for key, corrected, cls in (("raw", False, "true"), ("corrected", True, "true"),
                                ("visible", True, "visible")):
        est = stored_energy_estimate(pulses, cfg, corrected=corrected, classify=cls)
        m[f"e_store_est_{key}_J"] = est
        m[f"e_store_err_{key}"] = _rel_err(est, e_true)
    if sc.duration > 0:
        m["i_est_count_A"] = harvester_current_estimate(len(pulses), sc.duration, cfg).value
        m["i_est_swing_A"] = harvester_current_measured_swing(pulses, sc.duration, cfg).value
    else:
        m["i_est_count_A"] = m["i_est_swing_A"] = 0.0
    m["i_est_interval_A"] = harvester_current_from_intervals(pulses, cfg).value

    tasks = task_table(result)
    m["tasks_seen"] = len(tasks)
    m["tasks_detected"] = sum(r["detected"] for r in tasks)
    disc = result.events(EventKind.LOAD_DISCONNECTED)
    m["load_disconnected"] = bool(disc)
    if disc:
        t = disc[0].timestamp
        m["disconnect_time_s"] = t * 1e-9
        w = sc.load.window_at(t * 1e-9) or next(
            (w for w in reversed(sc.load.windows) if w.start * 1e9 <= t), None)
        if w is not None:
            m["disconnect_task"] = w.name
            m["disconnect_after_task_start_s"] = t * 1e-9 - w.start
    m["switch_count"] = len(result.events(EventKind.CSTORE_SWITCH))
    for cid, v in result.final_voltages.items():
        m[f"final_v_{cid}"] = v
    return m
