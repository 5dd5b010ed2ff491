"""Unit-tagged scalars, the integer-tick simulation clock and trace vocabulary.

Only a handful of quantity kinds exist; arithmetic between them is restricted
to the products and quotients listed in ``_PRODUCTS``.  Hot loops never see a
:class:`Quantity` -- they work on plain floats in SI base units.
"""
from __future__ import annotations

import math
import re
from decimal import Decimal
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

VOLTAGE = "V"
CURRENT = "A"
CAPACITANCE = "F"
ENERGY = "J"
TIME = "s"
RESISTANCE = "Ohm"
CHARGE = "C"
POWER = "W"
DIMENSIONLESS = "1"

KINDS = (VOLTAGE, CURRENT, CAPACITANCE, ENERGY, TIME, RESISTANCE, CHARGE, POWER, DIMENSIONLESS)
_NON_NEGATIVE = {CAPACITANCE, RESISTANCE, TIME}

# (left, right) -> result kind for multiplication
_PRODUCTS = {
    (CAPACITANCE, VOLTAGE): CHARGE,
    (CURRENT, TIME): CHARGE,
    (VOLTAGE, CURRENT): POWER,
    (POWER, TIME): ENERGY,
    (CHARGE, VOLTAGE): ENERGY,
    (RESISTANCE, CAPACITANCE): TIME,
    (RESISTANCE, CURRENT): VOLTAGE,
}
# (numerator, denominator) -> result kind for division
_QUOTIENTS = {
    (VOLTAGE, RESISTANCE): CURRENT,
    (CHARGE, CAPACITANCE): VOLTAGE,
    (CHARGE, TIME): CURRENT,
    (CHARGE, VOLTAGE): CAPACITANCE,
    (CHARGE, CURRENT): TIME,
    (ENERGY, TIME): POWER,
    (ENERGY, VOLTAGE): CHARGE,
    (POWER, VOLTAGE): CURRENT,
    (VOLTAGE, CURRENT): RESISTANCE,
}


class UnitError(ValueError):
    """Raised for malformed quantity strings or kind-mismatched arithmetic."""


@dataclass(frozen=True, order=False)
class Quantity:
    value: float
    kind: str = DIMENSIONLESS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnitError(f"unknown quantity kind {self.kind!r}")
        if not math.isfinite(self.value):
            raise UnitError(f"non-finite {self.kind} quantity: {self.value}")
        if self.kind in _NON_NEGATIVE and self.value < 0:
            raise UnitError(f"{self.kind} quantity must be >= 0, got {self.value}")

    def _same(self, other: Any, op: str) -> "Quantity":
        if not isinstance(other, Quantity):
            if self.kind == DIMENSIONLESS and isinstance(other, (int, float)):
                return Quantity(float(other))
            raise UnitError(f"cannot {op} {self.kind} and {type(other).__name__}")
        if other.kind != self.kind:
            raise UnitError(f"cannot {op} {self.kind} and {other.kind}")
        return other

    def __add__(self, other):
        other = self._same(other, "add")
        return Quantity(self.value + other.value, self.kind)

    def __sub__(self, other):
        other = self._same(other, "subtract")
        return Quantity(self.value - other.value, self.kind)

    def __neg__(self):
        return Quantity(-self.value, self.kind)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Quantity(self.value * other, self.kind)
        if not isinstance(other, Quantity):
            return NotImplemented
        if other.kind == DIMENSIONLESS:
            return Quantity(self.value * other.value, self.kind)
        if self.kind == DIMENSIONLESS:
            return Quantity(self.value * other.value, other.kind)
        kind = _PRODUCTS.get((self.kind, other.kind)) or _PRODUCTS.get((other.kind, self.kind))
        if kind is None:
            raise UnitError(f"undefined product {self.kind}*{other.kind}")
        return Quantity(self.value * other.value, kind)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return Quantity(self.value / other, self.kind)
        if not isinstance(other, Quantity):
            return NotImplemented
        if other.kind == DIMENSIONLESS:
            return Quantity(self.value / other.value, self.kind)
        if other.kind == self.kind:
            return Quantity(self.value / other.value)
        kind = _QUOTIENTS.get((self.kind, other.kind))
        if kind is None:
            raise UnitError(f"undefined quotient {self.kind}/{other.kind}")
        return Quantity(self.value / other.value, kind)

    def _cmp(self, other) -> float:
        other = self._same(other, "compare")
        return self.value - other.value

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __float__(self):
        return float(self.value)

    def __str__(self):
        return format_quantity(self)


def V(x: float) -> Quantity:
    return Quantity(float(x), VOLTAGE)


def A(x: float) -> Quantity:
    return Quantity(float(x), CURRENT)


def F(x: float) -> Quantity:
    return Quantity(float(x), CAPACITANCE)


def J(x: float) -> Quantity:
    return Quantity(float(x), ENERGY)


def S(x: float) -> Quantity:
    return Quantity(float(x), TIME)


# ---------------------------------------------------------------------------
# parsing / formatting

_PREFIXES = {"p": -12, "n": -9, "u": -6, "µ": -6, "μ": -6, "m": -3, "k": 3, "M": 6}
_UNITS = {
    "V": VOLTAGE,
    "A": CURRENT,
    "F": CAPACITANCE,
    "J": ENERGY,
    "s": TIME,
    "Ohm": RESISTANCE,
    "ohm": RESISTANCE,
    "Ω": RESISTANCE,
    "C": CHARGE,
    "W": POWER,
}
_SYMBOL = {VOLTAGE: "V", CURRENT: "A", CAPACITANCE: "F", ENERGY: "J", TIME: "s",
           RESISTANCE: "Ohm", CHARGE: "C", POWER: "W", DIMENSIONLESS: ""}

_QTY_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d]*)\s*$")


def parse_unit(unit: str) -> tuple[int, str]:
    """Return ``(decimal_exponent, kind)`` for a unit symbol such as ``mA``."""
    if unit in _UNITS:
        return 0, _UNITS[unit]
    if unit == "%":
        return -2, DIMENSIONLESS
    if len(unit) > 1 and unit[0] in _PREFIXES and unit[1:] in _UNITS:
        return _PREFIXES[unit[0]], _UNITS[unit[1:]]
    raise UnitError(f"unknown unit {unit!r}")


def _scaled(number: str, exp: int) -> float:
    # decimal scaling keeps "50 us" == 50e-6 exactly, unlike 50 * 1e-6
    return float(Decimal(number).scaleb(exp))


def parse_quantity(text: str, kind: str | None = None, *, allow_bare: bool = False) -> Quantity:
    """Parse ``"3.2 V"``, ``"500uF"``, ``"93 %"`` and friends.

    Bare numbers are rejected unless ``allow_bare`` is set, in which case they
    are interpreted as dimensionless.
    """
    m = _QTY_RE.match(text)
    if not m:
        raise UnitError(f"malformed quantity {text!r}")
    number, unit = m.group(1), m.group(2)
    if unit == "":
        if not allow_bare:
            raise UnitError(f"quantity {text!r} is missing a unit suffix")
        exp, parsed_kind = 0, DIMENSIONLESS
    else:
        exp, parsed_kind = parse_unit(unit)
    if kind is not None and parsed_kind != kind:
        raise UnitError(f"expected a {kind} quantity, got {text!r}")
    return Quantity(_scaled(number, exp), parsed_kind)


def format_quantity(q: Quantity, digits: int = 12) -> str:
    """Render with an engineering prefix; parses back to the same value."""
    sym = _SYMBOL[q.kind]
    if q.kind == DIMENSIONLESS:
        return repr(float(q.value))
    v = q.value
    if v == 0:
        return f"0 {sym}"
    exp3 = int(math.floor(math.log10(abs(v)) / 3)) * 3
    exp3 = max(-12, min(6, exp3))
    prefix = {-12: "p", -9: "n", -6: "u", -3: "m", 0: "", 3: "k", 6: "M"}[exp3]
    mant = v / 10.0 ** exp3
    text = f"{mant:.{digits}g}"
    # guard against round-off in the prefix scaling
    if _scaled(text, exp3) != v:
        return f"{v!r} {sym}"
    return f"{text} {prefix}{sym}"


# ---------------------------------------------------------------------------
# clock

NS_PER_S = 1_000_000_000


def seconds_to_ticks(seconds: float) -> int:
    """Convert seconds to integer nanosecond ticks, rejecting sub-ns residue."""
    ticks = round(seconds * NS_PER_S)
    if abs(ticks - seconds * NS_PER_S) > 1e-3:
        raise UnitError(f"{seconds} s is not representable in whole nanoseconds")
    return int(ticks)


def ticks_to_seconds(ticks: int) -> float:
    return ticks / NS_PER_S


@dataclass(frozen=True)
class SimClock:
    now: int = 0  # ns
    step: int = 100_000  # ns

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("clock step must be positive")
        if self.now < 0:
            raise ValueError("clock time must be non-negative")

    @property
    def now_s(self) -> float:
        return ticks_to_seconds(self.now)


def advance(clock: SimClock) -> SimClock:
    return SimClock(clock.now + clock.step, clock.step)


# ---------------------------------------------------------------------------
# trace vocabulary

class EventKind(str, Enum):
    PULSE_EMITTED = "pulse-emitted"
    LMM_RISE = "lmm-interrupt-rise"
    LMM_FALL = "lmm-interrupt-fall"
    CSTORE_SWITCH = "cstore-switch"
    LOAD_DISCONNECTED = "load-disconnected"
    TASK_START = "task-start"
    TASK_END = "task-end"
    SAMPLE_TAKEN = "sample-taken"
    WARNING = "warning"


@dataclass(frozen=True)
class TraceEvent:
    timestamp: int  # ns
    source: str
    kind: EventKind
    payload: Mapping[str, Any] = field(default_factory=dict)

    @property
    def t(self) -> float:
        return ticks_to_seconds(self.timestamp)


def energy_in_capacitor(c: float, v: float) -> float:
    """Stored energy 1/2 C V^2 in joules (plain floats, SI units)."""
    if c < 0:
        raise ValueError("capacitance must be non-negative")
    return 0.5 * c * v * v


def energy_between(c: float, v_high: float, v_low: float) -> float:
    """Energy released when a capacitor swings from ``v_high`` down to ``v_low``."""
    return energy_in_capacitor(c, v_high) - energy_in_capacitor(c, v_low)
