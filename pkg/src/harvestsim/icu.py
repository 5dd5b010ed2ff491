"""Control unit: buffer selection from the lookup table and abnormality watch.

The unit never knows the load's task list.  It segments activity from its
own current readings: a *task* is a run of samples that fall into the same
lookup-table class, and its learned baseline is the elapsed time at the
first sample that no longer matched.  Baselines are keyed by that class.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .units import EventKind, TraceEvent

DORMANT = "dormant"
MONITORING = "monitoring"
HALTED = "halted"


@dataclass(frozen=True)
class LookupTable:
    """Ordered ``(upper_bound_A, cap_id)`` rules; bounds are inclusive."""

    rules: tuple[tuple[float, str], ...] = (
        (1e-3, "C1"),
        (10e-3, "C2"),
        (20e-3, "C3"),
        (math.inf, "C4"),
    )

    def __post_init__(self):
        bounds = [b for b, _ in self.rules]
        if not self.rules or bounds[-1] != math.inf:
            raise ValueError("lookup table must end with an unbounded rule")
        if any(b1 <= b0 for b0, b1 in zip(bounds, bounds[1:])):
            raise ValueError("lookup bounds must strictly increase")
        if bounds[0] < 0:
            raise ValueError("lookup bounds must be non-negative")

    def select(self, current: float) -> str:
        i = max(0.0, current)
        for upper, cap in self.rules:
            if i <= upper:
                return cap
        raise AssertionError("unreachable: table ends with +inf")


@dataclass(frozen=True)
class IcuConfig:
    enabled: bool = True
    table: LookupTable = field(default_factory=LookupTable)
    sample_period: int = 50_000_000      # ns
    settle_delay: int = 20_000_000       # ns from rising edge to the switching read
    margin: int = 50_000_000             # ns beyond baseline before flagging
    idle_current: float = 0.25e-3        # A, below this the load counts as asleep
    release_mode: str = "to-combiner"    # where the previous supply cap goes
    initial_cstore: str = "C1"
    adc_noise: float = 0.0               # A, std-dev of additive read noise

    def __post_init__(self):
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")
        if self.settle_delay < 0 or self.margin < 0:
            raise ValueError("settle_delay and margin must be non-negative")
        if self.release_mode not in ("to-combiner", "disconnected"):
            raise ValueError("release_mode must be 'to-combiner' or 'disconnected'")


@dataclass
class Action:
    kind: str               # "switch" or "disconnect"
    cap: str | None = None


@dataclass
class _Task:
    cls: str | None
    start: int


class Icu:
    def __init__(self, config: IcuConfig):
        self.config = config
        self.mode = DORMANT
        self.active_cstore = config.initial_cstore
        self.task_baselines: dict[str, int] = {}
        self.abnormality_flag = False
        self.task: _Task | None = None
        self.pending_read: int | None = None
        self.next_sample: int | None = None
        self.samples_in_task = 0

    # -- scheduling ---------------------------------------------------------

    def next_deadline(self) -> int | None:
        times = [t for t in (self.pending_read, self.next_sample) if t is not None]
        return min(times) if times else None

    def due(self, now: int) -> list[str]:
        out = []
        if self.pending_read is not None and self.pending_read <= now:
            out.append("read")
        if self.next_sample is not None and self.next_sample <= now:
            out.append("sample")
        return out

    # -- helpers ------------------------------------------------------------

    def _select(self, cls: str, now: int, events: list[TraceEvent]) -> list[Action]:
        if cls == self.active_cstore:
            return []
        self.active_cstore = cls
        return [Action("switch", cls)]

    def _close_task(self, now: int) -> int | None:
        task = self.task
        self.task = None
        self.samples_in_task = 0
        if task is None or task.cls is None:
            return None
        duration = now - task.start
        self.task_baselines.setdefault(task.cls, duration)
        return duration

    # -- event handlers -----------------------------------------------------

    def on_lmm_interrupt(self, edge: str, measured_current: float, now: int
                         ) -> tuple[list[Action], list[TraceEvent]]:
        events = [TraceEvent(now, "icu", EventKind.SAMPLE_TAKEN,
                             {"trigger": f"lmm-{edge}", "current_A": measured_current})]
        if self.mode == HALTED:
            return [], events
        if edge == "fall":
            return [], events
        if edge != "rise":
            raise ValueError(f"unknown edge {edge!r}")
        self._close_task(now)
        self.task = _Task(None, now)
        self.mode = MONITORING
        self.next_sample = now + self.config.sample_period
        if self.config.settle_delay == 0:
            return self.on_settle_read(measured_current, now)[0], events
        self.pending_read = now + self.config.settle_delay
        return [], events

    def on_settle_read(self, measured_current: float, now: int
                       ) -> tuple[list[Action], list[TraceEvent]]:
        self.pending_read = None
        cls = self.config.table.select(measured_current)
        if self.task is not None and self.task.cls is None:
            self.task.cls = cls
        events = [TraceEvent(now, "icu", EventKind.SAMPLE_TAKEN,
                             {"trigger": "settle", "current_A": measured_current, "class": cls})]
        return self._select(cls, now, events), events

    def on_sample_timer(self, measured_current: float, now: int
                        ) -> tuple[list[Action], list[TraceEvent]]:
        cfg = self.config
        cls = cfg.table.select(measured_current)
        idle = measured_current < cfg.idle_current
        payload = {"trigger": "timer", "current_A": measured_current, "class": cls}
        actions: list[Action] = []
        task = self.task
        if task is not None and task.cls == cls and not idle:
            self.samples_in_task += 1
            elapsed = now - task.start
            payload["elapsed_s"] = elapsed * 1e-9
            baseline = self.task_baselines.get(cls)
            if baseline is not None and elapsed > baseline + cfg.margin:
                self.abnormality_flag = True
                self.mode = HALTED
                self.next_sample = None
                self.pending_read = None
                payload["abnormal"] = True
                actions.append(Action("disconnect"))
                return actions, [TraceEvent(now, "icu", EventKind.SAMPLE_TAKEN, payload)]
        else:
            duration = self._close_task(now)
            if duration is not None:
                payload["closed_task_s"] = duration * 1e-9
            if idle:
                self.mode = DORMANT
            else:
                self.task = _Task(cls, now)
        self.next_sample = now + cfg.sample_period if self.mode == MONITORING else None
        events = [TraceEvent(now, "icu", EventKind.SAMPLE_TAKEN, payload)]
        actions += self._select(cls, now, events)
        return actions, events


def task_detectable(current: float, c_store: float, v_ref: float, gain: float) -> bool:
    """Whether a steady discharge reaches the comparator (boundary inclusive)."""
    return c_store * v_ref / gain <= current
