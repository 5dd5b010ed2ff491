"""Reconfigurable supercapacitor array.

Every capacitor can sit on the combiner output, the supply regulator input,
both, or neither.  Capacitors sharing a node are in parallel and therefore
share one voltage; joining capacitors at different voltages equalises them
instantly and the lost energy is booked in the ledger.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels as K
from .units import EventKind, TraceEvent

DISCONNECTED = "disconnected"
TO_COMBINER = "to-combiner"
TO_SUPPLY = "to-supply"
BOTH = "both"

MODES = {DISCONNECTED: 0, TO_COMBINER: 1, TO_SUPPLY: 2, BOTH: 3}


class StorageError(Exception):
    pass


class UnknownCapacitor(StorageError, KeyError):
    pass


class NotConnectedError(StorageError):
    pass


class NoSupplyError(StorageError):
    pass


@dataclass(frozen=True)
class StorageCap:
    id: str
    capacitance: float
    voltage: float = 0.0
    mode: str = DISCONNECTED
    leakage_current: float = 0.0

    def __post_init__(self):
        if self.capacitance <= 0:
            raise ValueError(f"{self.id}: capacitance must be positive")
        if self.voltage < 0:
            raise ValueError(f"{self.id}: voltage must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"{self.id}: unknown mode {self.mode!r}")
        if self.leakage_current < 0:
            raise ValueError(f"{self.id}: leakage must be non-negative")


@dataclass(frozen=True)
class ArrayConfig:
    caps: tuple[StorageCap, ...] = field(default_factory=lambda: default_caps())
    v_max: float = 3.3
    v_min_supply: float = 1.8

    def __post_init__(self):
        ids = [c.id for c in self.caps]
        if len(set(ids)) != len(ids):
            raise ValueError("capacitor ids must be unique")
        if not self.caps:
            raise ValueError("the array needs at least one capacitor")
        for c in self.caps:
            if c.voltage > self.v_max:
                raise ValueError(f"{c.id}: initial voltage above v_max")

    def with_cap(self, id: str, **changes) -> "ArrayConfig":
        caps = tuple(replace(c, **changes) if c.id == id else c for c in self.caps)
        return replace(self, caps=caps)


def default_caps() -> tuple[StorageCap, ...]:
    return (
        StorageCap("C1", 15e-3, mode=TO_SUPPLY),
        StorageCap("C2", 33e-3, mode=TO_COMBINER),
        StorageCap("C3", 68e-3),
        StorageCap("C4", 100e-3),
    )


class StorageArray:
    """Runtime array state as flat arrays shared with the step kernel."""

    def __init__(self, config: ArrayConfig, ledger: np.ndarray | None = None):
        self.config = config
        self.ids = [c.id for c in config.caps]
        self.index = {cid: i for i, cid in enumerate(self.ids)}
        self.cap_c = np.array([c.capacitance for c in config.caps], dtype=float)
        self.cap_v = np.array([c.voltage for c in config.caps], dtype=float)
        self.cap_leak = np.array([c.leakage_current for c in config.caps], dtype=float)
        self.modes = [c.mode for c in config.caps]
        self.comb_mask = np.zeros(len(self.ids), np.int64)
        self.sup_mask = np.zeros(len(self.ids), np.int64)
        self.params = np.array([config.v_max, config.v_min_supply], dtype=float)
        self.ledger = np.zeros(K.N_LEDGER) if ledger is None else ledger
        self._refresh()

    # -- topology -----------------------------------------------------------

    def _refresh(self) -> float:
        codes = [MODES[m] for m in self.modes]
        if any(c == 3 for c in codes):
            # a capacitor on both buses ties them into one node
            joined = [1 if c else 0 for c in codes]
            self.comb_mask[:] = joined
            self.sup_mask[:] = joined
        else:
            self.comb_mask[:] = [1 if c & 1 else 0 for c in codes]
            self.sup_mask[:] = [1 if c & 2 else 0 for c in codes]
        return self._equalize(self.comb_mask) + self._equalize(self.sup_mask)

    def _equalize(self, mask: np.ndarray) -> float:
        idx = np.flatnonzero(mask)
        if len(idx) < 2:
            return 0.0
        c, v = self.cap_c[idx], self.cap_v[idx]
        if np.all(v == v[0]):
            return 0.0
        v_eq = float(np.sum(c * v) / np.sum(c))
        loss = float(0.5 * np.sum(c * v * v) - 0.5 * np.sum(c) * v_eq * v_eq)
        self.cap_v[idx] = v_eq
        self.ledger[K.L_EQUALIZE] += loss
        return loss

    def _idx(self, id: str) -> int:
        try:
            return self.index[id]
        except KeyError:
            raise UnknownCapacitor(id) from None

    def mode_of(self, id: str) -> str:
        return self.modes[self._idx(id)]

    def set_mode(self, id: str, mode: str, time: int = 0) -> list[TraceEvent]:
        """Flip one capacitor's switches (ideal, instantaneous)."""
        i = self._idx(id)
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        old = self.modes[i]
        if old == mode:
            return []
        self.modes[i] = mode
        loss = self._refresh()
        payload = {"cap": id, "old": old, "new": mode}
        if loss > 0:
            payload["equalization_loss_J"] = loss
        return [TraceEvent(time, "storage", EventKind.CSTORE_SWITCH, payload)]

    def members(self, mode: str) -> list[str]:
        return [cid for cid, m in zip(self.ids, self.modes) if m == mode]

    @property
    def supply_ids(self) -> list[str]:
        return [cid for cid, s in zip(self.ids, self.sup_mask) if s]

    @property
    def supply_capacitance(self) -> float:
        return float(np.sum(self.cap_c * self.sup_mask))

    @property
    def combiner_capacitance(self) -> float:
        return float(np.sum(self.cap_c * self.comb_mask))

    @property
    def supply_voltage(self) -> float:
        return float(K.supply_voltage(self.cap_v, self.sup_mask))

    @property
    def energy(self) -> float:
        return float(0.5 * np.sum(self.cap_c * self.cap_v ** 2))

    def voltage(self, id: str) -> float:
        return float(self.cap_v[self._idx(id)])

    # -- charge transfer ----------------------------------------------------

    def apply_charge(self, id: str, energy: float) -> bool:
        """Add ``energy`` to one combiner-side capacitor.

        Returns True when the result was clamped at ``v_max`` (excess dropped).
        """
        i = self._idx(id)
        if not (MODES[self.modes[i]] & 1):
            raise NotConnectedError(f"{id} is not connected to the combiner")
        if energy < 0:
            raise ValueError("energy must be non-negative")
        c = self.cap_c[i]
        v = self.cap_v[i]
        v_new = float(np.sqrt(v * v + 2.0 * energy / c))
        vmax = self.config.v_max
        if v_new > vmax:
            self.ledger[K.L_OVERFLOW] += 0.5 * c * (v_new ** 2 - vmax ** 2)
            self.cap_v[i] = vmax
            return True
        self.cap_v[i] = v_new
        return False

    def apply_discharge(self, load_current: float, dt: float) -> bool:
        """Draw ``load_current`` for ``dt`` from the supply node.

        Returns True on undervoltage (supply fell below ``v_min_supply``).
        """
        if load_current < 0 or dt <= 0:
            raise ValueError("need load_current >= 0 and dt > 0")
        if load_current > 0 and not self.sup_mask.any():
            raise NoSupplyError("load draws current but no capacitor feeds the supply")
        status = K.discharge_supply(load_current, dt, self.cap_c, self.cap_v, self.sup_mask,
                                    self.params, self.ledger)
        return status == 1
