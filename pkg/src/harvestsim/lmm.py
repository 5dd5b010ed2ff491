"""Load monitor: differentiator on the supply capacitor plus a comparator.

``r_f * c_1`` scales the output (volts per V/s of supply slope) while
``tau`` sets how fast the output follows.  With r_f * c_1 = 0.1 s as the
settling constant too, a 15 mA edge on 100 mF would take over 150 ms to
trip the comparator, so the two are configured independently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels as K
from .units import EventKind, TraceEvent


@dataclass(frozen=True)
class LmmConfig:
    r_f: float = 100e3          # Ohm
    c_1: float = 1e-6           # F
    tau: float = 4e-3           # s, settling time constant of the output
    v_ref: float = 18e-3        # V, comparator reference
    # per-capacitor reference override, selected with the supply capacitor
    v_ref_by_cap: Mapping[str, float] = field(default_factory=lambda: {"C4": 13.5e-3})
    hysteresis: float = 0.0     # V
    rail: float = 3.3           # V, output saturation

    def __post_init__(self):
        if self.r_f <= 0 or self.c_1 <= 0 or self.v_ref <= 0 or self.tau <= 0:
            raise ValueError("r_f, c_1, tau and v_ref must be positive")
        if self.hysteresis < 0 or self.hysteresis >= self.v_ref:
            raise ValueError("hysteresis must lie in [0, v_ref)")
        for cid, v in self.v_ref_by_cap.items():
            if v <= 0:
                raise ValueError(f"v_ref override for {cid} must be positive")

    @property
    def gain(self) -> float:
        return self.r_f * self.c_1

    def v_ref_for(self, cap_id: str | None) -> float:
        if cap_id is not None and cap_id in self.v_ref_by_cap:
            return self.v_ref_by_cap[cap_id]
        return self.v_ref


class LmmState:
    """Differentiator output, comparator level and last edge times."""

    def __init__(self, config: LmmConfig, v_supply: float, dt: float, cap_id: str | None = None):
        if config.tau <= dt:
            raise ValueError("settling time constant must exceed the integration step")
        self.config = config
        self.arr = np.zeros(K.N_LMM)
        self.arr[K.M_VPREV] = v_supply
        self.arr[K.M_GAIN] = config.gain
        self.arr[K.M_ALPHA] = -math.expm1(-dt / config.tau)
        self.arr[K.M_VREF] = config.v_ref_for(cap_id)
        self.arr[K.M_HYST] = config.hysteresis
        self.arr[K.M_RAIL] = config.rail
        self.last_rise: int | None = None
        self.last_fall: int | None = None

    @property
    def v_diff(self) -> float:
        return float(self.arr[K.M_VDIFF])

    @property
    def comparator_out(self) -> bool:
        return bool(self.arr[K.M_COMP])

    @property
    def v_ref(self) -> float:
        return float(self.arr[K.M_VREF])

    def select_cap(self, cap_id: str | None, v_supply: float) -> None:
        """Re-point the monitor after a supply switch.

        The derivative reference is reset so the voltage step between the old
        and new capacitor is not read as a discharge.
        """
        self.arr[K.M_VREF] = self.config.v_ref_for(cap_id)
        self.arr[K.M_VPREV] = v_supply

    def note_edge(self, edge: int, time: int) -> TraceEvent:
        if edge > 0:
            self.last_rise = time
            kind = EventKind.LMM_RISE
        else:
            self.last_fall = time
            kind = EventKind.LMM_FALL
        return TraceEvent(time, "lmm", kind, {"v_diff_V": self.v_diff, "v_ref_V": self.v_ref})


def step_lmm(state: LmmState, v_store_prev: float, v_store_now: float, dt: float,
             time: int = 0) -> list[TraceEvent]:
    """One differentiator/comparator update from two consecutive supply samples."""
    state.arr[K.M_VPREV] = v_store_prev
    edge = K.lmm_update(state.arr, v_store_now, dt)
    if edge == 0:
        return []
    return [state.note_edge(edge, time)]


def discharge_current_from_vdiff(v_diff: float, c_store: float, gain: float) -> float:
    """Invert the differentiator: positive result means the capacitor is discharging."""
    if gain <= 0:
        raise ValueError("differentiator gain must be positive")
    return c_store * (-v_diff) / gain


def min_detectable_current(c_store: float, config: LmmConfig, cap_id: str | None = None) -> float:
    """Steady discharge current whose differentiator output just reaches the reference."""
    return c_store * config.v_ref_for(cap_id) / config.gain
