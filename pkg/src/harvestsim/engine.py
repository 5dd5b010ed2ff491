"""Deterministic fixed-step orchestration.

Time is counted in integer steps of ``scenario.step``; the kernel runs
stretches of steps between *boundaries* (a source level change, a task
start/end, a control-unit timer).  Anything the kernel raises in step ``k``
(a comparator edge, an undervoltage) is handled before step ``k + 1``.
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import kernels as K
from .combiner import CombinerConfig, CombinerState, Pulse
from .icu import Icu, IcuConfig
from .lmm import LmmConfig, LmmState, discharge_current_from_vdiff
from .load import LoadProfile
from .source import SourceModel
from .storage import ArrayConfig, NoSupplyError, StorageArray
from .units import EventKind, TraceEvent, UnitError, seconds_to_ticks

log = logging.getLogger(__name__)


class ScenarioInvalid(ValueError):
    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{k}: {msg}" for k, msg in problems))


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    sources: tuple[SourceModel, ...] = (SourceModel.constant("solar", 0.0), SourceModel.constant("teg", 0.0))
    combiner: CombinerConfig = field(default_factory=CombinerConfig)
    storage: ArrayConfig = field(default_factory=ArrayConfig)
    lmm: LmmConfig = field(default_factory=LmmConfig)
    icu: IcuConfig = field(default_factory=IcuConfig)
    load: LoadProfile = field(default_factory=LoadProfile)
    duration: float = 1.0           # s
    step: float = 100e-6            # s
    report_period: float = 10e-3    # s
    seed: int = 0

    def validate(self) -> None:
        problems: list[tuple[str, str]] = []

        def ticks(name: str, seconds: float) -> int | None:
            try:
                return seconds_to_ticks(seconds)
            except UnitError as exc:
                problems.append((name, str(exc)))
                return None

        step = ticks("run.step", self.step)
        dur = ticks("run.duration", self.duration)
        rep = ticks("run.report_period", self.report_period)
        if step is not None and step <= 0:
            problems.append(("run.step", "must be positive"))
            step = None
        if dur is not None and dur < 0:
            problems.append(("run.duration", "must be non-negative"))
        if step:
            if dur is not None and dur % step:
                problems.append(("run.duration", "must be a whole number of steps"))
            if rep is not None and (rep <= 0 or rep % step):
                problems.append(("run.report_period", "must be a positive whole number of steps"))
            for src in self.sources:
                for t, _ in src.segments:
                    tt = ticks(f"sources.{src.id}", t)
                    if tt is not None and tt % step:
                        problems.append((f"sources.{src.id}", f"change at {t} s is off the step grid"))
            for w in self.load.windows:
                for t in (w.start, w.end):
                    tt = ticks("load.tasks", t)
                    if tt is not None and tt % step:
                        problems.append(("load.tasks", f"{w.name} edge at {t} s is off the step grid"))
            for name in ("sample_period", "settle_delay", "margin"):
                if getattr(self.icu, name) % step:
                    problems.append((f"icu.{name}", "must be a whole number of steps"))
            if self.lmm.tau <= self.step:
                problems.append(("lmm.tau", "must exceed the integration step"))
        if not self.sources:
            problems.append(("sources", "at least one source is required"))
        ids = [s.id for s in self.sources]
        if len(set(ids)) != len(ids):
            problems.append(("sources", "source ids must be unique"))
        cap_ids = {c.id for c in self.storage.caps}
        if self.icu.enabled:
            for _, cap in self.icu.table.rules:
                if cap not in cap_ids:
                    problems.append(("icu.table", f"unknown capacitor {cap}"))
            if self.icu.initial_cstore not in cap_ids:
                problems.append(("icu.initial_cstore", f"unknown capacitor {self.icu.initial_cstore}"))
        if problems:
            raise ScenarioInvalid(problems)


@dataclass
class Window:
    start: int
    end: int
    ledger_start: np.ndarray
    ledger_end: np.ndarray
    buf_energy_start: float
    buf_energy_end: float
    i_source: float


@dataclass
class RunResult:
    scenario: Scenario
    trace: list[TraceEvent]
    pulses: list[Pulse]
    ts_time: np.ndarray                 # ns
    ts_values: np.ndarray               # rows x signals
    ts_signals: list[tuple[str, str]]   # (name, unit)
    ledger: dict[str, float]
    windows: list[Window]
    initial_buffer_energy: float
    final_buffer_energy: float
    initial_storage_energy: float
    final_storage_energy: float
    final_voltages: dict[str, float]
    metrics: dict[str, float] = field(default_factory=dict)

    def events(self, kind: EventKind) -> list[TraceEvent]:
        return [e for e in self.trace if e.kind == kind]

    def signal(self, name: str) -> np.ndarray:
        names = [n for n, _ in self.ts_signals]
        return self.ts_values[:, names.index(name)]


LEDGER_NAMES = {
    K.L_SRC: "energy_from_sources_J",
    K.L_REG_IN: "regulator_input_J",
    K.L_REG_OUT: "regulator_output_J",
    K.L_REG_LOSS: "regulator_loss_J",
    K.L_DISCARD: "discarded_no_storage_J",
    K.L_OVERFLOW: "storage_overflow_J",
    K.L_LOAD: "load_energy_J",
    K.L_LEAK: "leakage_J",
    K.L_CURTAIL_Q: "curtailed_charge_C",
    K.L_EQUALIZE: "equalization_loss_J",
    K.L_E0: "initial_stored_J",
    K.L_MAX_RESID: "ledger_max_residual",
    K.L_DELIVERED: "delivered_to_storage_J",
}


class _Sim:
    """One run's mutable state; discarded after :func:`run`."""

    PULSE_CAP = 4096
    TS_CAP = 4096

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.step_ns = seconds_to_ticks(sc.step)
        self.n_total = seconds_to_ticks(sc.duration) // self.step_ns
        self.report_every = seconds_to_ticks(sc.report_period) // self.step_ns
        self.rng = np.random.default_rng(sc.seed)

        self.comb = CombinerState(sc.combiner, len(sc.sources), sc.step)
        self.ledger = self.comb.ledger
        self.storage = StorageArray(sc.storage, self.ledger)
        self.ledger[K.L_EQUALIZE] = 0.0
        self.storage.ledger[K.L_EQUALIZE] = 0.0
        sup = self.storage.supply_ids
        self.lmm = LmmState(sc.lmm, self.storage.supply_voltage, sc.step, sup[0] if len(sup) == 1 else None)
        self.icu = Icu(sc.icu) if sc.icu.enabled else None
        if self.icu is not None and sup:
            self.icu.active_cstore = sup[0]

        self.trace: list[TraceEvent] = []
        self.pulses: list[Pulse] = []
        self.ts_time: list[np.ndarray] = []
        self.ts_vals: list[np.ndarray] = []
        self.load_disconnected = False
        self.outputs = K.alloc_outputs(len(self.comb.buf_v), len(self.storage.ids), self.PULSE_CAP, self.TS_CAP)

        # source and load schedules on the step grid
        self.src_steps = [([seconds_to_ticks(t) // self.step_ns for t, _ in s.segments],
                           [i for _, i in s.segments]) for s in sc.sources]
        self.src_changes = sorted({seconds_to_ticks(t) // self.step_ns
                                   for s in sc.sources for t in s.starts if t > 0})
        self.load_edges: dict[int, list[tuple[str, Any]]] = {}
        self.win_steps: list[tuple[int, int, float]] = []
        for w in sc.load.windows:
            a = seconds_to_ticks(w.start) // self.step_ns
            b = seconds_to_ticks(w.end) // self.step_ns
            self.win_steps.append((a, b, w.current))
            self.load_edges.setdefault(a, []).append(("start", w))
            self.load_edges.setdefault(b, []).append(("end", w))
        self.load_edge_steps = sorted(self.load_edges)
        self._win_starts = [a for a, _, _ in self.win_steps]
        self.windows: list[Window] = []

    # -- helpers ------------------------------------------------------------

    def t_ns(self, step: int) -> int:
        return step * self.step_ns

    def source_currents(self, step: int) -> np.ndarray:
        out = np.empty(len(self.src_steps))
        for j, (starts, levels) in enumerate(self.src_steps):
            out[j] = levels[bisect.bisect_right(starts, step) - 1]
        return out

    def load_current(self, step: int) -> float:
        # resolved on the integer grid; float window edges may be off by an ulp
        if self.load_disconnected:
            return 0.0
        k = bisect.bisect_right(self._win_starts, step) - 1
        if k >= 0 and step < self.win_steps[k][1]:
            return self.win_steps[k][2]
        return self.sc.load.sleep_current

    def stored_energy(self) -> float:
        return self.comb.buffer_energy + self.storage.energy

    def measure_current(self) -> float:
        i = discharge_current_from_vdiff(self.lmm.v_diff, self.storage.supply_capacitance,
                                         self.sc.lmm.gain)
        if self.sc.icu.adc_noise > 0:
            i += float(self.rng.normal(0.0, self.sc.icu.adc_noise))
        return i

    def emit(self, ev: TraceEvent) -> None:
        self.trace.append(ev)

    def apply_actions(self, actions, now: int) -> None:
        for act in actions:
            if act.kind == "switch":
                for old in self.storage.supply_ids:
                    if old != act.cap:
                        for ev in self.storage.set_mode(old, self.sc.icu.release_mode, now):
                            self.emit(ev)
                for ev in self.storage.set_mode(act.cap, "to-supply", now):
                    self.emit(ev)
                self.lmm.select_cap(act.cap, self.storage.supply_voltage)
            elif act.kind == "disconnect":
                self.disconnect(now, "abnormality")

    def disconnect(self, now: int, reason: str) -> None:
        if self.load_disconnected:
            return
        self.load_disconnected = True
        payload = {"reason": reason, "supply_V": self.storage.supply_voltage}
        payload.update({f"v_{cid}": float(v) for cid, v in zip(self.storage.ids, self.storage.cap_v)})
        self.emit(TraceEvent(now, "engine", EventKind.LOAD_DISCONNECTED, payload))

    def handle_boundaries(self, step: int) -> None:
        now = self.t_ns(step)
        for what, w in self.load_edges.get(step, ()):
            if self.load_disconnected:
                continue
            kind = EventKind.TASK_START if what == "start" else EventKind.TASK_END
            self.emit(TraceEvent(now, "load", kind, {"task": w.name, "index": w.index, "current_A": w.current}))
        if self.icu is None:
            return
        for what in self.icu.due(now):
            measured = self.measure_current()
            if what == "read":
                actions, events = self.icu.on_settle_read(measured, now)
            else:
                actions, events = self.icu.on_sample_timer(measured, now)
            for ev in events:
                self.emit(ev)
            self.apply_actions(actions, now)

    def next_boundary(self, step: int) -> int:
        cands = [self.n_total]
        for seq in (self.src_changes, self.load_edge_steps):
            for s in seq:
                if s > step:
                    cands.append(s)
                    break
        if self.icu is not None:
            d = self.icu.next_deadline()
            if d is not None:
                cands.append(max(step + 1, -(-d // self.step_ns)))
        return min(cands)

    def open_window(self, step: int) -> None:
        if self.windows:
            w = self.windows[-1]
            w.end = self.t_ns(step)
            w.ledger_end = self.ledger.copy()
            w.buf_energy_end = self.comb.buffer_energy
        if step < self.n_total:
            self.windows.append(Window(self.t_ns(step), self.t_ns(step), self.ledger.copy(), self.ledger.copy(),
                                       self.comb.buffer_energy, self.comb.buffer_energy,
                                       float(self.source_currents(step).sum())))

    def collect(self, n_pulses: int, n_ts: int) -> None:
        p_step, p_buf, p_vals, ts_step, ts_vals = self.outputs
        for k in range(n_pulses):
            pulse = self.comb.make_pulse(int(p_step[k]) * self.step_ns, int(p_buf[k]),
                                         float(p_vals[k, K.PV_VSTART]), float(p_vals[k, K.PV_EIN]),
                                         float(p_vals[k, K.PV_EOUT]), float(p_vals[k, K.PV_ISRC]))
            self.pulses.append(pulse)
            self.emit(TraceEvent(pulse.time, "combiner", EventKind.PULSE_EMITTED, {
                "source": self.sc.sources[pulse.source].id,
                "buffer": pulse.buffer,
                "v_start_V": pulse.v_start,
                "energy_J": pulse.e_out,
                "regime": pulse.regime,
                "regime_visible": pulse.regime_visible,
            }))
        if n_ts:
            self.ts_time.append(ts_step[:n_ts] * self.step_ns)
            self.ts_vals.append(ts_vals[:n_ts].copy())

    # -- main loop ----------------------------------------------------------

    def run(self) -> None:
        sc = self.sc
        self.ledger[K.L_E0] = self.stored_energy()
        step = 0
        self.open_window(0)
        src_i = self.source_currents(0)
        warned = {"discard": False, "overflow": False, "curtail": False}
        while step < self.n_total:
            if step in self.src_changes:
                self.open_window(step)
                src_i = self.source_currents(step)
            self.handle_boundaries(step)
            stop_at = self.next_boundary(step)
            load_i = self.load_current(step)
            before_discard = self.ledger[K.L_DISCARD]
            before_overflow = self.ledger[K.L_OVERFLOW]
            before_curtail = self.ledger[K.L_CURTAIL_Q]
            p_step, p_buf, p_vals, ts_step, ts_vals = self.outputs
            reason, done, n_p, n_ts, edge, undervolt = K.run_segment(
                step, stop_at - step, self.report_every, load_i, src_i,
                self.comb.buf_v, self.comb.buf_phase, self.comb.buf_order, self.comb.buf_vstart,
                self.comb.buf_ein, self.comb.buf_eout, self.comb.reg, self.comb.params,
                self.storage.cap_c, self.storage.cap_v, self.storage.cap_leak,
                self.storage.comb_mask, self.storage.sup_mask, self.storage.params,
                self.lmm.arr, self.ledger,
                p_step, p_buf, p_vals, ts_step, ts_vals)
            self.collect(n_p, n_ts)
            if reason == K.STOP_NO_SUPPLY:
                raise NoSupplyError(f"load draws {load_i} A at t={(step + done) * sc.step:.6f} s "
                                    "but no capacitor is connected to the supply")
            since = self.t_ns(step) * 1e-9  # the warnings below happened somewhere in [since, now]
            step += done
            now = self.t_ns(step)
            if self.ledger[K.L_DISCARD] > before_discard and not warned["discard"]:
                warned["discard"] = True
                self.emit(TraceEvent(now, "combiner", EventKind.WARNING,
                                     {"warning": "no-storage-connected", "detail": "harvested energy discarded", "since_s": since}))
            if self.ledger[K.L_OVERFLOW] > before_overflow and not warned["overflow"]:
                warned["overflow"] = True
                self.emit(TraceEvent(now, "storage", EventKind.WARNING,
                                     {"warning": "storage-at-v-max", "detail": "excess energy discarded", "since_s": since}))
            if self.ledger[K.L_CURTAIL_Q] > before_curtail and not warned["curtail"]:
                warned["curtail"] = True
                self.emit(TraceEvent(now, "combiner", EventKind.WARNING,
                                     {"warning": "buffer-clamped", "detail": "source charge curtailed at the clamp", "since_s": since}))
            if edge:
                self.emit(self.lmm.note_edge(edge, now))
                if self.icu is not None:
                    actions, events = self.icu.on_lmm_interrupt("rise" if edge > 0 else "fall",
                                                                self.measure_current(), now)
                    for ev in events:
                        self.emit(ev)
                    self.apply_actions(actions, now)
            if undervolt:
                self.disconnect(now, "undervoltage")
        self.open_window(step)

    def result(self, initial_storage: float, initial_buf: float) -> RunResult:
        names = [(f"v_{cid}", "V") for cid in self.storage.ids]
        names += [("v_diff", "V"), ("comparator", "1"), ("load_current", "A"), ("source_current", "A")]
        names += [(f"v_buf{j}", "V") for j in range(len(self.comb.buf_v))]
        if self.ts_time:
            ts_time = np.concatenate(self.ts_time)
            ts_vals = np.vstack(self.ts_vals)
        else:
            ts_time = np.zeros(0, np.int64)
            ts_vals = np.zeros((0, len(names)))
        ledger = {name: float(self.ledger[i]) for i, name in LEDGER_NAMES.items()}
        return RunResult(
            scenario=self.sc,
            trace=self.trace,
            pulses=self.pulses,
            ts_time=ts_time,
            ts_values=ts_vals,
            ts_signals=names,
            ledger=ledger,
            windows=self.windows,
            initial_buffer_energy=initial_buf,
            final_buffer_energy=self.comb.buffer_energy,
            initial_storage_energy=initial_storage,
            final_storage_energy=self.storage.energy,
            final_voltages={cid: float(v) for cid, v in zip(self.storage.ids, self.storage.cap_v)},
        )


def run(scenario: Scenario) -> RunResult:
    """Execute ``scenario`` and return its trace, timeseries and metrics."""
    from .metrics import compute_metrics

    scenario.validate()
    sim = _Sim(scenario)
    initial_storage = sim.storage.energy
    initial_buf = sim.comb.buffer_energy
    sim.run()
    result = sim.result(initial_storage, initial_buf)
    result.metrics = compute_metrics(result)
    return result
