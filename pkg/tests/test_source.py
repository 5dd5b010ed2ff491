import pytest
from hypothesis import given
from hypothesis import strategies as st

from harvestsim.source import SourceModel, change_times, combined_current


def test_constant():
    assert SourceModel.constant("s", 1e-3).current_at(5.0) == 1e-3


def test_staircase_fifteen_second_steps():
    s = SourceModel.staircase("s", 0.5e-3, 1e-3, 15.0, 20)
    assert s.current_at(16.0) == pytest.approx(1.5e-3)
    assert s.current_at(15.0) == pytest.approx(1.5e-3)  # right-continuous
    assert s.current_at(14.999) == pytest.approx(0.5e-3)


def test_outage():
    s = SourceModel("s", ((0.0, 1e-3), (10.0, 0.0)))
    assert s.current_at(12.0) == 0.0


@pytest.mark.parametrize("segs", [(), ((1.0, 1e-3),), ((0.0, 1e-3), (0.0, 2e-3)), ((0.0, -1e-3),)])
def test_invalid_schedules(segs):
    with pytest.raises(ValueError):
        SourceModel("s", segs)


def test_combined_and_changes():
    a = SourceModel("a", ((0.0, 1e-3), (2.0, 3e-3)))
    b = SourceModel("b", ((0.0, 2e-3), (1.0, 0.0)))
    assert combined_current([a, b], 0.5) == pytest.approx(3e-3)
    assert combined_current([a, b], 2.5) == pytest.approx(3e-3)
    assert change_times([a, b]) == [1.0, 2.0]


@given(st.lists(st.tuples(st.floats(0.01, 10), st.floats(0, 0.05)), min_size=1, max_size=6),
       st.floats(0, 60))
def test_charge_matches_riemann_sum(steps, horizon):
    t, segs = 0.0, []
    for dur, cur in steps:
        segs.append((t, cur))
        t += dur
    s = SourceModel("s", tuple(segs))
    n = 2000
    dt = horizon / n
    approx = sum(s.current_at((k + 0.5) * dt) for k in range(n)) * dt
    # the midpoint rule is exact between edges; each edge costs at most |di| * dt
    bound = sum(abs(b[1] - a[1]) for a, b in zip(segs, segs[1:])) * dt
    assert s.charge_between(0.0, horizon) == pytest.approx(approx, abs=bound + 1e-12)
