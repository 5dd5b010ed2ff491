"""Independent reference models used to freeze expected values.

These are written from the physical description alone, in plain Python,
without touching the simulator's kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class _Buf:
    v: float
    state: str          # idle / charging / full / draining
    full_at: int = -1
    v_start: float = 0.0


def combiner_pulses(currents, horizon_s, *, c=500e-6, v_l=2.5, v_h=3.2, v_over=3.28,
                    i_limit=5e-3, dt=100e-6):
    """Brute-force step integration of the two-buffer-per-source combiner.

    Returns ``(step_index, buffer, v_start)`` for each completed drain.
    """
    bufs = []
    for _ in currents:
        bufs += [_Buf(v_l, "charging"), _Buf(v_l, "idle")]
    busy = None
    out = []
    for k in range(round(horizon_s / dt)):
        for s, cur in enumerate(currents):
            for b in bufs[2 * s:2 * s + 2]:
                if b.state in ("charging", "full"):
                    vn = b.v + cur * dt / c
                    b.v = vn if vn <= v_over else max(b.v, v_over)
                    if b.state == "charging" and b.v >= v_h:
                        b.state, b.full_at = "full", k
        if busy is not None:
            b = bufs[busy]
            b.v -= i_limit * dt / c
            if b.v <= v_l:
                b.v, b.state = v_l, "idle"
                out.append((k + 1, busy, b.v_start))
                busy = None
        if busy is None:
            waiting = [(b.full_at, j) for j, b in enumerate(bufs) if b.state == "full"]
            if waiting:
                _, j = min(waiting)
                busy = j
                bufs[j].state, bufs[j].v_start = "draining", bufs[j].v
                if bufs[j ^ 1].state == "idle":
                    bufs[j ^ 1].state = "charging"
    return out


def store_voltage_after_pulses(c, v0, energies):
    """Per-pulse iteration of E -> V on one capacitor."""
    v = v0
    for e in energies:
        v = math.sqrt(v * v + 2 * e / c)
    return v


def first_order_crossing(v_final, threshold, tau):
    """Time for a first-order lag from 0 towards ``v_final`` to reach ``threshold``."""
    if abs(v_final) <= threshold:
        return math.inf
    return -tau * math.log(1 - threshold / abs(v_final))


def first_order_release(v_start, threshold, tau):
    """Time for a first-order decay from ``v_start`` to fall below ``threshold``."""
    if abs(v_start) < threshold:
        return 0.0
    return tau * math.log(abs(v_start) / threshold)
