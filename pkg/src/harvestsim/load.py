"""Task-based constant-current load profiles."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from functools import cached_property


@dataclass(frozen=True)
class TaskSpec:
    name: str
    current: float      # A
    duration: float     # s
    repeat: int = 1

    def __post_init__(self):
        if self.current < 0:
            raise ValueError(f"task {self.name}: current must be >= 0")
        if self.duration <= 0:
            raise ValueError(f"task {self.name}: duration must be > 0")
        if self.repeat < 1:
            raise ValueError(f"task {self.name}: repeat must be >= 1")


@dataclass(frozen=True)
class TaskWindow:
    start: float
    end: float
    name: str
    index: int          # position in the flattened execution order
    current: float


@dataclass(frozen=True)
class LoadProfile:
    """Tasks run back to back, each execution preceded by ``inter_task_gap``.

    Between tasks, and after the last one, the load draws ``sleep_current``.
    """

    tasks: tuple[TaskSpec, ...] = ()
    inter_task_gap: float = 0.5
    sleep_current: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.inter_task_gap < 0:
            raise ValueError("inter_task_gap must be >= 0")
        if self.sleep_current < 0:
            raise ValueError("sleep_current must be >= 0")

    @cached_property
    def windows(self) -> tuple[TaskWindow, ...]:
        out = []
        t = 0.0
        idx = 0
        for task in self.tasks:
            for _ in range(task.repeat):
                t += self.inter_task_gap
                out.append(TaskWindow(t, t + task.duration, task.name, idx, task.current))
                t += task.duration
                idx += 1
        return tuple(out)

    @cached_property
    def _starts(self) -> list[float]:
        return [w.start for w in self.windows]

    @property
    def end(self) -> float:
        return self.windows[-1].end if self.windows else 0.0

    def window_at(self, t: float) -> TaskWindow | None:
        k = bisect.bisect_right(self._starts, t) - 1
        if k >= 0 and t < self.windows[k].end:
            return self.windows[k]
        return None

    def current_at(self, t: float, disconnected: bool = False) -> float:
        if t < 0:
            raise ValueError("time must be non-negative")
        if disconnected:
            return 0.0
        w = self.window_at(t)
        return w.current if w is not None else self.sleep_current

    def total_charge(self, horizon: float) -> float:
        """Exact charge drawn over ``[0, horizon]``."""
        q = self.sleep_current * horizon
        for w in self.windows:
            overlap = min(w.end, horizon) - min(w.start, horizon)
            q += (w.current - self.sleep_current) * overlap
        return q

    def then(self, other: "LoadProfile") -> "LoadProfile":
        """Concatenate two profiles (keeps this profile's gap and sleep current)."""
        return replace(self, tasks=self.tasks + other.tasks)


def load_current_at(profile: LoadProfile, t: float, disconnected: bool = False) -> float:
    return profile.current_at(t, disconnected)


def regular_profile(gap: float = 0.5) -> LoadProfile:
    return LoadProfile(
        tasks=(
            TaskSpec("task1", 5e-3, 50e-3),
            TaskSpec("task2", 1e-3, 50e-3, repeat=2),
            TaskSpec("task3", 12e-3, 100e-3),
            TaskSpec("task4", 25e-3, 100e-3),
        ),
        inter_task_gap=gap,
    )


def defective_profile(gap: float = 0.5) -> LoadProfile:
    """The regular profile with task3 stuck for 300 ms instead of 100 ms."""
    regular = regular_profile(gap)
    tasks = tuple(replace(t, duration=300e-3) if t.name == "task3" else t for t in regular.tasks)
    return replace(regular, tasks=tasks)


def pulse_train(currents, duration: float = 30e-3, gap: float = 0.5) -> LoadProfile:
    """Isolated constant-current pulses, e.g. for minimum-detectable tests."""
    tasks = tuple(TaskSpec(f"pulse_{i * 1e3:g}mA", i, duration) for i in currents)
    return LoadProfile(tasks=tasks, inter_task_gap=gap)
