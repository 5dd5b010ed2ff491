"""INI-style scenario files.

Every physical value carries a unit suffix (``v_h = 3.2 V``).  Sections and
keys::

    [run]       name, duration, step, report_period, seed
    [sources]   <id> = <current>  |  <t>: <current>; <t>: <current>; ...
    [combiner]  c, v_h, v_l, v_overshoot, i_limit, efficiency,
                efficiency_curve, e_cap_nominal, e_cap_over
    [storage]   v_max, v_min_supply, <cap id> = <C>, <V>, <mode>[, <leakage>]
    [lmm]       r_f, c_1, tau, v_ref, v_ref.<cap id>, hysteresis, rail
    [icu]       enabled, table, sample_period, settle_delay, margin,
                idle_current, release_mode, initial_cstore, adc_noise
    [load]      tasks, inter_task_gap, sleep_current

``tasks`` lists ``name: <current> <duration> [xN]`` entries separated by
``;`` or newlines.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .engine import Scenario, ScenarioInvalid
from .icu import LookupTable
from .load import LoadProfile, TaskSpec
from .source import SourceModel
from .storage import MODES, StorageCap
from .units import (
    CAPACITANCE,
    CURRENT,
    DIMENSIONLESS,
    ENERGY,
    RESISTANCE,
    TIME,
    VOLTAGE,
    Quantity,
    UnitError,
    format_quantity,
    parse_quantity,
    seconds_to_ticks,
)

SECTIONS = ("run", "sources", "combiner", "storage", "lmm", "icu", "load")

_COMBINER_KEYS = {
    "c": CAPACITANCE, "v_h": VOLTAGE, "v_l": VOLTAGE, "v_overshoot": VOLTAGE,
    "i_limit": CURRENT, "efficiency": DIMENSIONLESS, "e_cap_nominal": ENERGY, "e_cap_over": ENERGY,
}
_LMM_KEYS = {"r_f": RESISTANCE, "c_1": CAPACITANCE, "tau": TIME, "v_ref": VOLTAGE,
             "hysteresis": VOLTAGE, "rail": VOLTAGE}
_RUN_KEYS = {"duration": TIME, "step": TIME, "report_period": TIME}
_ICU_TIMES = ("sample_period", "settle_delay", "margin")


class ScenarioParseError(ValueError):
    def __init__(self, msg: str, line: int | None = None, col: int | None = None, path: str = "<scenario>"):
        self.line, self.col, self.path = line, col, path
        where = path if line is None else f"{path}:{line}:{col or 1}"
        super().__init__(f"{where}: {msg}")


@dataclass
class ScenarioDocument:
    """Parsed but not yet interpreted scenario text."""

    parser: configparser.ConfigParser
    text: str
    path: str = "<scenario>"

    def locate(self, section: str, key: str | None = None) -> tuple[int | None, int | None]:
        in_sec = False
        for n, raw in enumerate(self.text.splitlines(), 1):
            line = raw.strip()
            if line.startswith("["):
                in_sec = line.strip("[]").strip() == section
                if in_sec and key is None:
                    return n, raw.index("[") + 1
                continue
            if in_sec and key is not None:
                m = re.match(r"\s*([^=:#;\s][^=]*?)\s*=", raw)
                if m and m.group(1) == key:
                    return n, raw.index("=") + 2
        return None, None

    def error(self, section: str, key: str | None, msg: str) -> ScenarioParseError:
        line, col = self.locate(section, key)
        label = f"{section}.{key}" if key else section
        return ScenarioParseError(f"{label}: {msg}", line, col, self.path)

    def set(self, dotted: str, value: str) -> None:
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or not key:
            raise KeyError(dotted)
        if not self.parser.has_section(section):
            self.parser.add_section(section)
        self.parser[section][key] = value


def read_document(text: str, path: str = "<scenario>") -> ScenarioDocument:
    if not text.strip():
        raise ScenarioParseError("empty scenario file", 1, 1, path)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   delimiters=("=",))
    cp.optionxform = str  # keep capacitor ids case-sensitive
    try:
        cp.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioParseError("content before the first [section]", exc.lineno, 1, path) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ScenarioParseError(exc.message.split(": ", 1)[-1], exc.lineno, 1, path) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ScenarioParseError("malformed line", lineno, 1, path) from None
    doc = ScenarioDocument(cp, text, path)
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise doc.error(sec, None, "unknown section")
    if not cp.sections():
        raise ScenarioParseError("no sections found", 1, 1, path)
    return doc


def read_scenario_file(path: str | Path) -> ScenarioDocument:
    p = Path(path)
    return read_document(p.read_text(encoding="utf-8"), str(p))


# -- interpretation ----------------------------------------------------------

def _qty(doc: ScenarioDocument, sec: str, key: str, kind: str, text: str | None = None) -> float:
    raw = doc.parser[sec][key] if text is None else text
    try:
        return parse_quantity(raw, kind, allow_bare=kind == DIMENSIONLESS).value
    except UnitError as exc:
        raise doc.error(sec, key, str(exc)) from None


def _check_keys(doc: ScenarioDocument, sec: str, allowed) -> None:
    if not doc.parser.has_section(sec):
        return
    for key in doc.parser[sec]:
        if not allowed(key):
            raise doc.error(sec, key, "unknown key")


def _items(text: str) -> list[str]:
    return [p.strip() for p in re.split(r"[;\n]", text) if p.strip()]


def _parse_source(doc: ScenarioDocument, sid: str) -> SourceModel:
    raw = doc.parser["sources"][sid]
    parts = _items(raw)
    if len(parts) == 1 and ":" not in parts[0]:
        return SourceModel.constant(sid, _qty(doc, "sources", sid, CURRENT, parts[0]))
    segs = []
    for part in parts:
        t, sep, cur = part.partition(":")
        if not sep:
            raise doc.error("sources", sid, f"expected '<time>: <current>', got {part!r}")
        segs.append((_qty(doc, "sources", sid, TIME, t), _qty(doc, "sources", sid, CURRENT, cur)))
    try:
        return SourceModel(sid, tuple(segs))
    except ValueError as exc:
        raise doc.error("sources", sid, str(exc)) from None


def _parse_sources(doc: ScenarioDocument) -> tuple[SourceModel, ...] | None:
    if not doc.parser.has_section("sources"):
        return None
    sec = doc.parser["sources"]
    ids = [k for k in sec if k != "combined"]
    if "combined" in sec:
        if not ids:
            ids = ["solar", "teg"]
        total = _qty(doc, "sources", "combined", CURRENT)
        return tuple(SourceModel.constant(sid, total / len(ids)) for sid in ids)
    return tuple(_parse_source(doc, sid) for sid in ids)


def _parse_cap(doc: ScenarioDocument, cid: str) -> StorageCap:
    parts = [p.strip() for p in doc.parser["storage"][cid].split(",")]
    if len(parts) not in (3, 4):
        raise doc.error("storage", cid, "expected '<capacitance>, <voltage>, <mode>[, <leakage>]'")
    c = _qty(doc, "storage", cid, CAPACITANCE, parts[0])
    v = _qty(doc, "storage", cid, VOLTAGE, parts[1])
    if parts[2] not in MODES:
        raise doc.error("storage", cid, f"unknown mode {parts[2]!r}; choose from {sorted(MODES)}")
    leak = _qty(doc, "storage", cid, CURRENT, parts[3]) if len(parts) == 4 else 0.0
    return StorageCap(cid, c, v, parts[2], leak)


def _parse_table(doc: ScenarioDocument, text: str) -> LookupTable:
    rules = []
    for part in _items(text):
        bound, sep, cap = part.partition(":")
        if not sep:
            raise doc.error("icu", "table", f"expected '<current>: <cap>', got {part!r}")
        b = bound.strip()
        rules.append((math.inf if b in ("inf", "above") else _qty(doc, "icu", "table", CURRENT, b),
                      cap.strip()))
    return LookupTable(tuple(rules))


_TASK_RE = re.compile(r"^(?P<name>[^:]+):\s*(?P<cur>\S+\s*\S+)\s+(?P<dur>\S+\s*[a-zµμ]*s)(?:\s*x\s*(?P<n>\d+))?$")


def _parse_tasks(doc: ScenarioDocument, text: str) -> tuple[TaskSpec, ...]:
    tasks = []
    for part in _items(text):
        m = _TASK_RE.match(part)
        if not m:
            raise doc.error("load", "tasks", f"expected 'name: <current> <duration> [xN]', got {part!r}")
        tasks.append(TaskSpec(m["name"].strip(), _qty(doc, "load", "tasks", CURRENT, m["cur"]),
                              _qty(doc, "load", "tasks", TIME, m["dur"]), int(m["n"] or 1)))
    return tuple(tasks)


def _bool(doc: ScenarioDocument, sec: str, key: str) -> bool:
    try:
        return doc.parser.getboolean(sec, key)
    except ValueError:
        raise doc.error(sec, key, "expected true/false") from None


def build_scenario(doc: ScenarioDocument) -> Scenario:
    """Interpret a document; absent keys keep their defaults."""
    cp = doc.parser
    _check_keys(doc, "run", lambda k: k in _RUN_KEYS or k in ("name", "seed"))
    _check_keys(doc, "combiner", lambda k: k in _COMBINER_KEYS or k == "efficiency_curve")
    _check_keys(doc, "storage", lambda k: True)
    _check_keys(doc, "lmm", lambda k: k in _LMM_KEYS or k.startswith("v_ref."))
    _check_keys(doc, "icu", lambda k: k in _ICU_TIMES or k in (
        "enabled", "table", "idle_current", "release_mode", "initial_cstore", "adc_noise"))
    _check_keys(doc, "load", lambda k: k in ("tasks", "inter_task_gap", "sleep_current"))

    sc = Scenario()
    kw: dict = {}
    if cp.has_section("run"):
        sec = cp["run"]
        for key in _RUN_KEYS:
            if key in sec:
                kw[key] = _qty(doc, "run", key, TIME)
        if "name" in sec:
            kw["name"] = sec["name"].strip()
        if "seed" in sec:
            try:
                kw["seed"] = int(sec["seed"])
            except ValueError:
                raise doc.error("run", "seed", "expected an integer") from None
    try:
        sources = _parse_sources(doc)
        if sources is not None:
            kw["sources"] = sources

        if cp.has_section("combiner"):
            ck = {k: _qty(doc, "combiner", k, kind) for k, kind in _COMBINER_KEYS.items() if k in cp["combiner"]}
            if "efficiency_curve" in cp["combiner"]:
                pts = []
                for part in _items(cp["combiner"]["efficiency_curve"]):
                    i, _, e = part.partition(":")
                    pts.append((_qty(doc, "combiner", "efficiency_curve", CURRENT, i),
                                _qty(doc, "combiner", "efficiency_curve", DIMENSIONLESS, e)))
                ck["efficiency_curve"] = tuple(pts)
            kw["combiner"] = replace(sc.combiner, **ck)

        if cp.has_section("storage"):
            sec = cp["storage"]
            sk: dict = {}
            for key in ("v_max", "v_min_supply"):
                if key in sec:
                    sk[key] = _qty(doc, "storage", key, VOLTAGE)
            caps = tuple(_parse_cap(doc, cid) for cid in sec if cid not in ("v_max", "v_min_supply"))
            if caps:
                sk["caps"] = caps
            kw["storage"] = replace(sc.storage, **sk)

        if cp.has_section("lmm"):
            sec = cp["lmm"]
            lk = {k: _qty(doc, "lmm", k, kind) for k, kind in _LMM_KEYS.items() if k in sec}
            overrides = {k.split(".", 1)[1]: _qty(doc, "lmm", k, VOLTAGE) for k in sec if k.startswith("v_ref.")}
            if overrides or any(k.startswith("v_ref.") for k in sec):
                lk["v_ref_by_cap"] = overrides
            kw["lmm"] = replace(sc.lmm, **lk)

        if cp.has_section("icu"):
            sec = cp["icu"]
            ik: dict = {}
            if "enabled" in sec:
                ik["enabled"] = _bool(doc, "icu", "enabled")
            if "table" in sec:
                ik["table"] = _parse_table(doc, sec["table"])
            for key in _ICU_TIMES:
                if key in sec:
                    try:
                        ik[key] = seconds_to_ticks(_qty(doc, "icu", key, TIME))
                    except UnitError as exc:
                        raise doc.error("icu", key, str(exc)) from None
            for key in ("idle_current", "adc_noise"):
                if key in sec:
                    ik[key] = _qty(doc, "icu", key, CURRENT)
            for key in ("release_mode", "initial_cstore"):
                if key in sec:
                    ik[key] = sec[key].strip()
            kw["icu"] = replace(sc.icu, **ik)

        if cp.has_section("load"):
            sec = cp["load"]
            lk = {}
            if "tasks" in sec:
                lk["tasks"] = _parse_tasks(doc, sec["tasks"])
            if "inter_task_gap" in sec:
                lk["inter_task_gap"] = _qty(doc, "load", "inter_task_gap", TIME)
            if "sleep_current" in sec:
                lk["sleep_current"] = _qty(doc, "load", "sleep_current", CURRENT)
            kw["load"] = LoadProfile(**lk)
    except ScenarioParseError:
        raise
    except ValueError as exc:
        # config constructors reject out-of-range values; report as validation
        raise ScenarioInvalid([("scenario", str(exc))]) from None

    scenario = replace(sc, **kw)
    scenario.validate()
    return scenario


def parse_scenario(text: str, path: str = "<scenario>") -> Scenario:
    return build_scenario(read_document(text, path))


def load_scenario(path: str | Path) -> Scenario:
    return build_scenario(read_scenario_file(path))


# -- serialisation ------------------------------------------------------------

def _q(value: float, kind: str) -> str:
    if kind == DIMENSIONLESS:
        pct = f"{value * 100:.12g}"
        # ratios are written as percentages when that round-trips exactly
        return f"{pct} %" if parse_quantity(f"{pct} %").value == value else repr(value)
    return format_quantity(Quantity(value, kind))


def dump_scenario(sc: Scenario) -> str:
    """Serialise ``sc``; :func:`parse_scenario` gives back an equal scenario."""
    out = ["[run]", f"name = {sc.name}"]
    out += [f"{k} = {_q(getattr(sc, k), TIME)}" for k in _RUN_KEYS]
    out += [f"seed = {sc.seed}", "", "[sources]"]
    for s in sc.sources:
        if len(s.segments) == 1:
            out.append(f"{s.id} = {_q(s.segments[0][1], CURRENT)}")
        else:
            segs = "\n    ".join(f"{_q(t, TIME)}: {_q(i, CURRENT)}" for t, i in s.segments)
            out.append(f"{s.id} =\n    {segs}")
    out += ["", "[combiner]"]
    out += [f"{k} = {_q(getattr(sc.combiner, k), kind)}" for k, kind in _COMBINER_KEYS.items()]
    if sc.combiner.efficiency_curve:
        pts = "; ".join(f"{_q(i, CURRENT)}: {_q(e, DIMENSIONLESS)}" for i, e in sc.combiner.efficiency_curve)
        out.append(f"efficiency_curve = {pts}")
    out += ["", "[storage]", f"v_max = {_q(sc.storage.v_max, VOLTAGE)}",
            f"v_min_supply = {_q(sc.storage.v_min_supply, VOLTAGE)}"]
    for c in sc.storage.caps:
        out.append(f"{c.id} = {_q(c.capacitance, CAPACITANCE)}, {_q(c.voltage, VOLTAGE)}, {c.mode}, "
                   f"{_q(c.leakage_current, CURRENT)}")
    out += ["", "[lmm]"]
    out += [f"{k} = {_q(getattr(sc.lmm, k), kind)}" for k, kind in _LMM_KEYS.items()]
    out += [f"v_ref.{cid} = {_q(v, VOLTAGE)}" for cid, v in sc.lmm.v_ref_by_cap.items()]
    icu = sc.icu
    table = "; ".join(f"{'inf' if math.isinf(b) else _q(b, CURRENT)}: {cap}" for b, cap in icu.table.rules)
    out += ["", "[icu]", f"enabled = {'true' if icu.enabled else 'false'}", f"table = {table}"]
    out += [f"{k} = {_q(getattr(icu, k) * 1e-9, TIME)}" for k in _ICU_TIMES]
    out += [f"idle_current = {_q(icu.idle_current, CURRENT)}", f"adc_noise = {_q(icu.adc_noise, CURRENT)}",
            f"release_mode = {icu.release_mode}", f"initial_cstore = {icu.initial_cstore}"]
    out += ["", "[load]", f"inter_task_gap = {_q(sc.load.inter_task_gap, TIME)}",
            f"sleep_current = {_q(sc.load.sleep_current, CURRENT)}"]
    if sc.load.tasks:
        lines = [f"{t.name}: {_q(t.current, CURRENT)} {_q(t.duration, TIME)}" + (f" x{t.repeat}" if t.repeat > 1 else "")
                 for t in sc.load.tasks]
        out.append("tasks =\n    " + "\n    ".join(lines))
    return "\n".join(out) + "\n"
