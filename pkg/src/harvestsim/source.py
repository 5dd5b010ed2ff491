"""Harvester outputs modelled as piecewise-constant current sources."""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class SourceModel:
    """A named current source; ``segments`` are ``(start_s, current_A)`` pairs.

    The first segment starts at 0 s and start times strictly increase. The
    schedule is right-continuous: a change at ``t`` applies from ``t`` on.
    """

    id: str
    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        segs = tuple((float(t), float(i)) for t, i in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError(f"source {self.id!r} has an empty schedule")
        if segs[0][0] != 0.0:
            raise ValueError(f"source {self.id!r}: first segment must start at 0 s")
        for (t0, _), (t1, _) in zip(segs, segs[1:]):
            if t1 <= t0:
                raise ValueError(f"source {self.id!r}: segment starts must strictly increase")
        for _, cur in segs:
            if cur < 0:
                raise ValueError(f"source {self.id!r}: negative current {cur}")

    @classmethod
    def constant(cls, id: str, current: float) -> "SourceModel":
        return cls(id, ((0.0, current),))

    @classmethod
    def staircase(cls, id: str, start: float, step: float, period: float, count: int) -> "SourceModel":
        """``count`` levels ``start, start+step, ...`` each held for ``period`` seconds."""
        if count < 1 or period <= 0:
            raise ValueError("staircase needs count >= 1 and period > 0")
        return cls(id, tuple((k * period, start + k * step) for k in range(count)))

    @property
    def starts(self) -> list[float]:
        return [t for t, _ in self.segments]

    def current_at(self, t: float) -> float:
        if t < 0:
            raise ValueError("time must be non-negative")
        k = bisect.bisect_right(self.starts, t) - 1
        return self.segments[k][1]

    def charge_between(self, t0: float, t1: float) -> float:
        """Exact integral of the current over ``[t0, t1]``."""
        if t1 < t0:
            raise ValueError("t1 must be >= t0")
        edges = [t for t in self.starts if t0 < t < t1]
        pts = [t0, *edges, t1]
        return sum(self.current_at(a) * (b - a) for a, b in zip(pts, pts[1:]))


def current_at(src: SourceModel, t: float) -> float:
    return src.current_at(t)


def combined_current(sources: Sequence[SourceModel], t: float) -> float:
    return sum(s.current_at(t) for s in sources)


def change_times(sources: Sequence[SourceModel]) -> list[float]:
    """All instants (after 0) at which any source changes level."""
    return sorted({t for s in sources for t in s.starts if t > 0})
