import pytest
from hypothesis import given
from hypothesis import strategies as st

from harvestsim.engine import Scenario, ScenarioInvalid
from harvestsim.presets import SCENARIO_DIR, bundled
from harvestsim.scenario_file import (
    ScenarioParseError,
    dump_scenario,
    load_scenario,
    parse_scenario,
    read_document,
    build_scenario,
)
from harvestsim.source import SourceModel


@pytest.mark.parametrize("name", sorted(bundled()))
def test_bundled_files_in_sync(name):
    assert load_scenario(SCENARIO_DIR / f"{name}.ini") == bundled()[name]


@pytest.mark.parametrize("name", sorted(bundled()))
def test_round_trip_bundled(name):
    sc = bundled()[name]
    assert parse_scenario(dump_scenario(sc)) == sc


@given(st.lists(st.floats(0, 0.05), min_size=1, max_size=5), st.integers(1, 50), st.floats(0.5, 3.3))
def test_round_trip_generated(levels, secs, v):
    src = SourceModel("s", tuple((k * 1.0, i) for k, i in enumerate(levels)))
    sc = Scenario(sources=(src,), duration=float(secs))
    sc = Scenario(sources=sc.sources, duration=sc.duration,
                  storage=sc.storage.with_cap("C1", voltage=round(v, 4)))
    assert parse_scenario(dump_scenario(sc)) == sc


def test_defaults_for_missing_keys():
    sc = parse_scenario("[run]\nduration = 2 s\n")
    assert sc.duration == 2.0
    assert sc.combiner == Scenario().combiner


MINIMAL = """[run]
duration = 1 s
[sources]
solar = 0 s: 1 mA; 0.5 s: 2 mA
teg = 3 mA
[load]
tasks = a: 5 mA 50 ms; b: 1 mA 20 ms x3
[lmm]
v_ref.C2 = 10 mV
[icu]
table = 2 mA: C1; inf: C2
"""


def test_parse_features():
    sc = parse_scenario(MINIMAL)
    assert sc.sources[0].segments == ((0.0, 1e-3), (0.5, 2e-3))
    assert sc.sources[1].segments == ((0.0, 3e-3),)
    assert [t.repeat for t in sc.load.tasks] == [1, 3]
    assert sc.lmm.v_ref_by_cap == {"C2": 10e-3}
    assert sc.icu.table.select(5e-3) == "C2"


def test_combined_splits_evenly():
    sc = parse_scenario("[sources]\ncombined = 10 mA\n")
    assert [s.current_at(0) for s in sc.sources] == [5e-3, 5e-3]


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("duration = 1 s\n", 1),
    ("[run]\nduration = 1\n", 2),
    ("[run]\n\nbogus = 1 s\n", 3),
    ("[nowhere]\n", 1),
    ("[combiner]\nv_h = 3.2 A\n", 2),
    ("[load]\ntasks = a 5 mA\n", 2),
    ("[storage]\nC1 = 15 mF, 3 V, sideways\n", 2),
    ("[run]\nduration = 1 s\nduration = 2 s\n", 3),
])
def test_parse_errors_have_locations(text, line):
    with pytest.raises(ScenarioParseError) as exc:
        parse_scenario(text, "x.ini")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"x.ini:{line}:")


def test_validation_errors_name_key():
    with pytest.raises(ScenarioInvalid) as exc:
        parse_scenario("[run]\nduration = 1 s\nstep = 0.3 ms\n")
    assert "run.duration" in str(exc.value)


def test_document_set():
    doc = read_document("[run]\nduration = 1 s\n")
    doc.set("combiner.i_limit", "10 mA")
    assert build_scenario(doc).combiner.i_limit == pytest.approx(10e-3)
    with pytest.raises(KeyError):
        doc.set("nosuch.key", "1 s")
