import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import worked_pair
from qtdma.errors import LatencyExceedsPeriodError, RateUnsupportableError, ScheduleTooLongError
from qtdma.metrics import check_schedule
from qtdma.oracle import brute_force_feasible
from qtdma.pts import (PeriodicTask, decompose_disjoint, hyperperiod, jitter_slack, np_edf,
                       np_edf_jitter, period_slots, schedule_pts, to_task)


def test_task_transformation():
    _, pairs = worked_pair(16.0)
    (d1, p1), (d2, p2) = pairs
    t1, t2 = to_task(d1, p1), to_task(d2, p2)
    assert (t1.phase, t1.wcet, t1.period) == (0, 5, 6)
    assert (t2.phase, t2.wcet, t2.period) == (0, 1, 6)
    assert hyperperiod([t1, t2]) == 6


def test_period_rounding():
    assert period_slots(20.0, 10.0) == 5
    assert period_slots(16.0, 10.0) == 6
    assert period_slots(12.5, 10.0) == 8
    assert period_slots(0.1953125, 10.0) == 512
    with pytest.raises(RateUnsupportableError):
        period_slots(100.0, 10.0)


def test_latency_exceeds_period():
    _, pairs = worked_pair(25.0)
    d1, p1 = pairs[0]
    with pytest.raises(LatencyExceedsPeriodError):
        to_task(d1, p1)


def test_hyperperiod_cap():
    tasks = [PeriodicTask("a", 1, 7), PeriodicTask("b", 1, 11)]
    assert hyperperiod(tasks) == 77
    with pytest.raises(ScheduleTooLongError):
        hyperperiod(tasks, cap=50)


def test_jitter_slack():
    assert jitter_slack(0.0, 10.0) == 0
    assert jitter_slack((1 / 16) ** 2, 10.0) == 6
    assert jitter_slack(0.0004, 10.0) == 2


def test_worked_schedule():
    s = np_edf([PeriodicTask("P1", 5, 6), PeriodicTask("P2", 1, 6)])
    assert s.starts == {"P1": [0], "P2": [5]}
    assert not s.unscheduled


def test_tie_rule_wcet():
    s = np_edf([PeriodicTask("P1", 5, 6), PeriodicTask("P2", 1, 6)], tie_break="wcet")
    assert s.starts == {"P1": [1], "P2": [0]}
    with pytest.raises(ValueError):
        np_edf([PeriodicTask("P1", 1, 2)], tie_break="nope")


def test_drops_unschedulable_instance():
    s = np_edf([PeriodicTask("a", 4, 6), PeriodicTask("b", 4, 6)])
    assert s.starts == {"a": [0], "b": []}
    assert s.unscheduled == {("b", 0)}
    assert not brute_force_feasible([PeriodicTask("a", 4, 6), PeriodicTask("b", 4, 6)]).feasible


def test_decomposition():
    _, pairs = worked_pair(16.0)
    assert decompose_disjoint(pairs) == [[0, 1]]
    from qtdma.io import load_topology
    from qtdma.model import Demand
    from qtdma.protoselect import select_protocol
    t = load_topology("symmetric")
    ds = [Demand("a", "e0", "e1", 0.55, 1), Demand("b", "e2", "e3", 0.55, 1),
          Demand("c", "e1", "e0", 0.55, 1)]
    prs = [(d, select_protocol(t, d)) for d in ds]
    assert decompose_disjoint(prs) == [[0, 2], [1]]


def test_schedule_pts_worked_examples():
    for r, want in [(16.0, {("P1", 0): 0, ("P2", 0): 5}), (20.0, {("P1", 0): 0})]:
        _, pairs = worked_pair(r)
        res = schedule_pts(pairs)
        assert dict(res.schedule.entries) == want
        assert check_schedule(res.schedule, pairs) == []


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 6), st.sampled_from([4, 6, 8, 12])), min_size=1,
                max_size=4))
def test_np_edf_invariants(specs):
    tasks = [PeriodicTask(f"t{i}", min(c, t), t) for i, (c, t) in enumerate(specs)]
    s = np_edf(tasks)
    h = s.hyperperiod
    busy = []
    for task in tasks:
        insts = s.instances[task.task_id]
        for j, st_ in zip(insts, s.starts[task.task_id]):
            assert j * task.period <= st_ <= (j + 1) * task.period - task.wcet
            busy.append((st_, st_ + task.wcet))
        dropped = {j for tid, j in s.unscheduled if tid == task.task_id}
        assert set(insts) | dropped == set(range(h // task.period))
    busy.sort()
    assert all(a[1] <= b[0] for a, b in zip(busy, busy[1:]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4), st.sampled_from([4, 6, 8, 12])), min_size=1,
                max_size=3), st.integers(0, 3))
def test_np_edf_jitter_bounds(specs, lam):
    tasks = [PeriodicTask(f"t{i}", min(c, t), t, 0, lam, lam) for i, (c, t) in enumerate(specs)]
    s = np_edf_jitter(tasks)
    for task in tasks:
        pts = sorted(zip(s.instances[task.task_id], s.starts[task.task_id]))
        for (i, a), (j, b) in zip(pts, pts[1:]):
            k = j - i
            assert k * (task.period - lam) <= b - a <= k * (task.period + lam)
        if len(pts) > 1:
            (i, a), (j, b) = pts[0], pts[-1]
            k = i + s.hyperperiod // task.period - j
            assert k * (task.period - lam) <= a + s.hyperperiod - b <= k * (task.period + lam)


def test_zero_jitter_is_periodic():
    tasks = [PeriodicTask("a", 2, 4, 0, 0, 0), PeriodicTask("b", 3, 8, 0, 0, 0)]
    s = np_edf_jitter(tasks)
    for t in tasks:
        starts = s.starts[t.task_id]
        assert all(b - a == t.period for a, b in zip(starts, starts[1:]))
