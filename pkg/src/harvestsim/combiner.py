"""Capacitor-to-capacitor energy combiner and the estimators built on its pulses.

Each source owns a pair of temporary buffers.  One buffer of the pair is
always on the source; when it reaches ``v_h`` it queues for the shared
regulator, which drains it at ``i_limit`` down to ``v_l`` into the storage
node.  Every completed drain is a *pulse*.  A queued buffer stays on its
source and keeps charging up to ``v_overshoot``; this is what makes the
per-pulse energy grow once the combined source current exceeds the
regulator's input limit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels as K
from .units import energy_between

NOMINAL = "nominal"
OVER = "over"


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CombinerConfig:
    c: float = 500e-6               # F, per temporary buffer
    v_h: float = 3.2                # V
    v_l: float = 2.5                # V
    v_overshoot: float = 3.28       # V
    i_limit: float = 5e-3           # A, regulator input-current limit
    efficiency: float = 0.93
    # optional (input current A, efficiency) points; evaluated at i_limit
    efficiency_curve: tuple[tuple[float, float], ...] = ()
    e_cap_nominal: float = 930e-6   # J credited per pulse at or below the limit
    e_cap_over: float = 1030e-6     # J credited per pulse above the limit

    def __post_init__(self):
        if not (self.c > 0):
            raise ValueError("temporary buffer capacitance must be positive")
        if not (0 <= self.v_l < self.v_h <= self.v_overshoot):
            raise ValueError("need 0 <= v_l < v_h <= v_overshoot")
        if not (self.i_limit > 0):
            raise ValueError("i_limit must be positive")
        if not (0 < self.eta <= 1):
            raise ValueError("regulator efficiency must lie in (0, 1]")
        if self.e_cap_nominal > self.e_cap_over:
            raise ValueError("e_cap_nominal must not exceed e_cap_over")

    @property
    def eta(self) -> float:
        if self.efficiency_curve:
            pts = sorted(self.efficiency_curve)
            return float(np.interp(self.i_limit, [p[0] for p in pts], [p[1] for p in pts]))
        return self.efficiency

    @property
    def swing(self) -> float:
        return self.v_h - self.v_l

    @property
    def ideal_cycle_energy(self) -> float:
        """Energy a buffer gives up swinging from v_h to v_l (before the regulator)."""
        return energy_between(self.c, self.v_h, self.v_l)

    @property
    def nominal_cycle_energy(self) -> float:
        return self.eta * self.ideal_cycle_energy

    @property
    def overshoot_cycle_energy(self) -> float:
        """Regulator-output energy of a pulse that starts from the clamp voltage."""
        return self.eta * energy_between(self.c, self.v_overshoot, self.v_l)

    @property
    def visible_over_threshold(self) -> float:
        # a buffer crossing v_h overshoots by up to one step's worth of charge;
        # only a start voltage past the midpoint counts as a held-over buffer
        return 0.5 * (self.v_h + self.v_overshoot)

    def params(self, dt: float) -> np.ndarray:
        p = np.zeros(K.N_COMB_PARAMS)
        p[K.P_C] = self.c
        p[K.P_VL] = self.v_l
        p[K.P_VH] = self.v_h
        p[K.P_VOVER] = self.v_overshoot
        p[K.P_ILIM] = self.i_limit
        p[K.P_ETA] = self.eta
        p[K.P_DT] = dt
        return p


@dataclass(frozen=True)
class Pulse:
    """One completed buffer drain as seen on the pulse line."""

    time: int          # ns, end of the drain
    source: int        # index of the source owning the buffer
    buffer: int
    v_start: float     # buffer voltage when the drain began
    e_in: float        # J taken from the buffer
    e_out: float       # J delivered to the storage node
    i_source: float    # true combined source current at emission
    regime: str        # classification from the true source current
    regime_visible: str  # classification from the buffer start voltage


class CombinerState:
    """Mutable array state for ``n_sources`` buffer pairs."""

    def __init__(self, config: CombinerConfig, n_sources: int, dt: float):
        if n_sources < 1:
            raise ValueError("the combiner needs at least one source")
        nb = 2 * n_sources
        self.config = config
        self.n_sources = n_sources
        self.dt = dt
        self.params = config.params(dt)
        self.buf_v = np.full(nb, config.v_l)
        self.buf_phase = np.zeros(nb, np.int64)
        self.buf_phase[0::2] = K.CHARGING
        self.buf_order = np.zeros(nb, np.int64)
        self.buf_vstart = np.zeros(nb)
        self.buf_ein = np.zeros(nb)
        self.buf_eout = np.zeros(nb)
        self.reg = np.full(1, -1, np.int64)
        self.ledger = np.zeros(K.N_LEDGER)

    @property
    def buffer_energy(self) -> float:
        return float(0.5 * self.config.c * np.sum(self.buf_v ** 2))

    def phases(self) -> list[str]:
        names = {K.IDLE: "idle", K.CHARGING: "charging", K.WAITING: "waiting-full",
                 K.DISCHARGING: "discharging"}
        return [names[int(p)] for p in self.buf_phase]

    def make_pulse(self, time: int, buffer: int, v_start: float, e_in: float, e_out: float,
                   i_source: float) -> Pulse:
        cfg = self.config
        return Pulse(
            time=time,
            source=buffer // 2,
            buffer=buffer,
            v_start=v_start,
            e_in=e_in,
            e_out=e_out,
            i_source=i_source,
            regime=OVER if i_source > cfg.i_limit else NOMINAL,
            regime_visible=OVER if v_start >= cfg.visible_over_threshold else NOMINAL,
        )


def step_combiner(state: CombinerState, currents: Sequence[float], storage, step: int) -> list[Pulse]:
    """Advance the combiner by one step, delivering into ``storage``.

    ``storage`` is a :class:`~harvestsim.storage.StorageArray`.  Returns the
    pulses completed during the step (zero or one).
    """
    src = np.asarray(currents, dtype=float)
    if src.shape != (state.n_sources,):
        raise ValueError(f"expected {state.n_sources} source currents")
    ledger = state.ledger
    i_tot = K.charge_buffers(state.buf_v, state.buf_phase, state.buf_order, src,
                             state.params, ledger, step)
    done = K.regulator_step(state.buf_v, state.buf_phase, state.buf_vstart, state.buf_ein,
                            state.buf_eout, state.reg, state.params, ledger,
                            storage.cap_c, storage.cap_v, storage.comb_mask, storage.params)
    pulses = []
    if done >= 0:
        t = (step + 1) * round(state.dt * 1e9)
        pulses.append(state.make_pulse(t, done, state.buf_vstart[done], state.buf_ein[done],
                                       state.buf_eout[done], i_tot))
    K.select_next(state.buf_v, state.buf_phase, state.buf_order, state.buf_vstart,
                  state.buf_ein, state.buf_eout, state.reg)
    return pulses


# ---------------------------------------------------------------------------
# estimators

@dataclass
class CombinerCounters:
    """Running pulse statistics as the control unit would keep them."""

    config: CombinerConfig
    window_start: int = 0
    n: int = 0
    e_store_estimate: float = 0.0
    e_store_true: float = 0.0
    pulses: list[Pulse] = field(default_factory=list)

    def record(self, pulse: Pulse, corrected: bool = True) -> None:
        self.n += 1
        self.pulses.append(pulse)
        self.e_store_estimate += pulse_credit(pulse, self.config, corrected)
        self.e_store_true += pulse.e_out


def pulse_credit(pulse: Pulse, config: CombinerConfig, corrected: bool = True,
                 classify: str = "true") -> float:
    if not corrected:
        return config.e_cap_nominal
    regime = pulse.regime if classify == "true" else pulse.regime_visible
    return config.e_cap_over if regime == OVER else config.e_cap_nominal


def stored_energy_estimate(pulses: Iterable[Pulse], config: CombinerConfig, corrected: bool = True,
                           classify: str = "true") -> float:
    """Count-based stored energy: one credit per pulse, two-regime corrected."""
    if classify not in ("true", "visible"):
        raise ValueError("classify must be 'true' or 'visible'")
    return float(sum(pulse_credit(p, config, corrected, classify) for p in pulses))


def stored_energy_from_counts(n_nominal: int, n_over: int, config: CombinerConfig) -> float:
    return n_nominal * config.e_cap_nominal + n_over * config.e_cap_over


@dataclass(frozen=True)
class CurrentEstimate:
    value: float  # A
    low_confidence: bool = False


def harvester_current_estimate(n_pulses: int, window: float, config: CombinerConfig,
                               swing: float | None = None) -> CurrentEstimate:
    """Average harvester current ``C * N * swing / T`` over a counting window."""
    if window <= 0:
        raise ValueError("counting window must be positive")
    if n_pulses <= 0:
        return CurrentEstimate(0.0, True)
    dv = config.swing if swing is None else swing
    return CurrentEstimate(config.c * n_pulses * dv / window, n_pulses < 2)


def harvester_current_measured_swing(pulses: Sequence[Pulse], window: float,
                                     config: CombinerConfig) -> CurrentEstimate:
    """As the count estimate, but each pulse contributes its actual start-voltage swing."""
    if window <= 0:
        raise ValueError("counting window must be positive")
    if not pulses:
        return CurrentEstimate(0.0, True)
    q = config.c * sum(p.v_start - config.v_l for p in pulses)
    return CurrentEstimate(q / window, len(pulses) < 2)


def harvester_current_from_intervals(pulses: Sequence[Pulse], config: CombinerConfig) -> CurrentEstimate:
    """Per-source charge over the span between that source's first and last pulse.

    Unlike a plain count, this does not lose up to one cycle per source to
    window-edge quantisation, which dominates at low harvesting rates.
    """
    by_src: dict[int, list[Pulse]] = {}
    for p in pulses:
        by_src.setdefault(p.source, []).append(p)
    total = 0.0
    low = not by_src
    for plist in by_src.values():
        plist = sorted(plist, key=lambda p: p.time)
        if len(plist) < 2:
            low = True
            continue
        span = (plist[-1].time - plist[0].time) * 1e-9
        q = config.c * sum(p.v_start - config.v_l for p in plist[1:])
        total += q / span
    return CurrentEstimate(total, low)


def calibrate_capacitance(e_store: float, v: float) -> float:
    """Capacitance implied by the energy accumulated from empty: ``2E / V^2``."""
    if v <= 0:
        raise CalibrationError("calibration voltage must be positive")
    if e_store < 0:
        raise CalibrationError("stored energy cannot be negative")
    return 2.0 * e_store / (v * v)
