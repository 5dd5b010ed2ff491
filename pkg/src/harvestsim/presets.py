"""Reference scenarios, built in code.

The bundled ``scenarios/*.ini`` files are generated from these builders
(``python -m harvestsim.presets``) and a test checks they stay in sync.
"""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .combiner import CombinerConfig
from .engine import Scenario
from .icu import IcuConfig
from .load import LoadProfile, defective_profile, pulse_train, regular_profile
from .source import SourceModel
from .storage import ArrayConfig, StorageCap

# combined harvesting levels of the staircase sweep, A
STAIRCASE_LEVELS = tuple([0.5e-3] + [k * 1e-3 for k in range(1, 21)])
STAIRCASE_PERIOD = 15.0


def _caps(voltages, modes) -> tuple[StorageCap, ...]:
    ids = ("C1", "C2", "C3", "C4")
    sizes = (15e-3, 33e-3, 68e-3, 100e-3)
    return tuple(StorageCap(i, c, v, m) for i, c, v, m in zip(ids, sizes, voltages, modes))


def staircase_sources(levels=STAIRCASE_LEVELS, period: float = STAIRCASE_PERIOD) -> tuple[SourceModel, ...]:
    """Two equal sources whose sum steps through ``levels``."""
    segs = tuple((k * period, i / 2) for k, i in enumerate(levels))
    return SourceModel("solar", segs), SourceModel("teg", segs)


def fig7_staircase() -> Scenario:
    return Scenario(
        name="fig7_staircase",
        sources=staircase_sources(),
        combiner=CombinerConfig(i_limit=5e-3),
        storage=ArrayConfig(caps=_caps((0.0,) * 4, ("to-supply", "to-combiner", "disconnected", "disconnected"))),
        icu=IcuConfig(enabled=False),
        duration=STAIRCASE_PERIOD * len(STAIRCASE_LEVELS),
        report_period=0.1,
    )


def fig8_current_sense(i_limit: float) -> Scenario:
    tag = f"{i_limit * 1e3:g}mA"
    return replace(fig7_staircase(), name=f"fig8_current_sense_{tag}", combiner=CombinerConfig(i_limit=i_limit))


MIN_DETECT_15MF = (1e-3, 2e-3, 2.7e-3, 3e-3, 5e-3)
MIN_DETECT_100MF = (10e-3, 13e-3, 15e-3, 20e-3, 100e-3)


def fig9_min_detect(cap: str) -> Scenario:
    currents = MIN_DETECT_15MF if cap == "C1" else MIN_DETECT_100MF
    modes = tuple("to-supply" if c == cap else "disconnected" for c in ("C1", "C2", "C3", "C4"))
    load = pulse_train(currents, duration=30e-3, gap=0.5)
    return Scenario(
        name=f"fig9_min_detect_{'15mF' if cap == 'C1' else '100mF'}",
        storage=ArrayConfig(caps=_caps((3.0,) * 4, modes)),
        icu=IcuConfig(enabled=False),
        load=load,
        duration=round(load.end + 0.5, 6),
        report_period=1e-3,
    )


_ICU_MODES = ("to-supply", "disconnected", "disconnected", "disconnected")


def fig11_regular() -> Scenario:
    load = regular_profile()
    return Scenario(
        name="fig11_regular",
        storage=ArrayConfig(caps=_caps((2.82, 2.85, 2.83, 2.89), _ICU_MODES)),
        icu=IcuConfig(release_mode="disconnected"),
        load=load,
        duration=round(load.end + 0.5, 6),
        report_period=1e-3,
    )


def fig12_defective() -> Scenario:
    """A regular cycle to learn baselines, then the cycle with the stuck task."""
    load: LoadProfile = regular_profile().then(defective_profile())
    return Scenario(
        name="fig12_defective",
        storage=ArrayConfig(caps=_caps((3.10, 3.12, 3.11, 3.16), _ICU_MODES)),
        icu=IcuConfig(release_mode="disconnected"),
        load=load,
        duration=round(load.end + 0.5, 6),
        report_period=1e-3,
    )


def bundled() -> dict[str, Scenario]:
    items = [
        fig7_staircase(),
        fig8_current_sense(5e-3),
        fig8_current_sense(10e-3),
        fig9_min_detect("C1"),
        fig9_min_detect("C4"),
        fig11_regular(),
        fig12_defective(),
    ]
    return {sc.name: sc for sc in items}


SCENARIO_DIR = Path(__file__).with_name("scenarios")


def write_bundled(directory: Path = SCENARIO_DIR) -> list[Path]:
    from .scenario_file import dump_scenario

    directory.mkdir(exist_ok=True)
    paths = []
    for name, sc in bundled().items():
        p = directory / f"{name}.ini"
        p.write_text(dump_scenario(sc), encoding="utf-8")
        paths.append(p)
    return paths


if __name__ == "__main__":
    for p in write_bundled():
        print(p)
