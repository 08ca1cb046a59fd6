import random

import pytest

from conftest import worked_pair
from qtdma.io import load_topology
from qtdma.metrics import check_schedule
from qtdma.model import Demand
from qtdma.oracle import brute_force_aon
from qtdma.protoselect import select_protocol
from qtdma.rcpsp import (GLOBAL_END, GLOBAL_START, add_jitter_lags, build_aon, build_full_aon,
                         condense_fpr, schedule_aon, schedule_rcpsp)


def test_fragment_of_printed_protocol(fig4):
    net = build_aon(fig4)
    acts = net.activities
    assert {"s", "e", "L1", "L2", "S1"} <= set(acts)
    occ = sorted((a.duration, sorted(map(str, a.resources))) for a in acts.values()
                 if a.origin.role == "occupation")
    # B's storage waits for the swap; A's and C's halves wait for the end
    assert occ == [(1, ["C-comm0"]), (2, ["B-storage0"]), (3, ["A-comm0"])]
    rigid = {(l.src, l.dst): l.min_lag for l in net.lags if l.rigid}
    assert rigid[("s", "L1")] == 0 and rigid[("s", "L2")] == 2 and rigid[("s", "S1")] == 4
    assert ("S1", "e") in rigid
    assert net.horizon == 5


def test_fpr_condensation(fig4):
    frag = build_aon(fig4)
    net = condense_fpr(frag)
    assert len(net.activities) == 3
    block = net.activities["fpr"]
    assert block.duration == 5
    assert block.resources == fig4.qubits()


def test_full_network_windows():
    _, pairs = worked_pair(16.0)
    net = build_full_aon(pairs)
    assert net.horizon == 6
    win = {l.dst: (l.min_lag, l.max_lag) for l in net.lags if l.src == GLOBAL_START}
    assert win["P1#0:s"] == (0, 1)
    assert win["P2#0:s"] == (0, 5)
    assert all(l.max_lag is None for l in net.lags if l.dst == GLOBAL_END)


def test_worked_example_both_heuristics():
    _, pairs = worked_pair(20.0)
    edf = schedule_rcpsp(pairs).schedule
    assert dict(edf.entries) == {("P1", 0): 0, ("P2", 0): 0}
    assert check_schedule(edf, pairs) == []
    fpr = schedule_rcpsp(pairs, fpr=True)
    assert dict(fpr.schedule.entries) == {("P1", 0): 0}
    assert fpr.withdrawn == {("P2", 0)}
    # the oracle confirms no FPR placement fits both
    assert not brute_force_aon(build_full_aon(pairs, fpr=True)).feasible
    assert brute_force_aon(build_full_aon(pairs)).feasible


def _random_pairs(rng, t, n):
    ends = t.end_nodes()
    out = []
    for i in range(n):
        a, b = rng.sample(ends, 2)
        d = Demand(f"d{i}", a, b, rng.choice([0.55, 0.6]), rng.choice([12.5, 6.25, 3.125]))
        p = select_protocol(t, d)
        if p.latency_slots <= int(1000 / (10 * d.r_min)):
            out.append((d, p))
    return out


@pytest.mark.parametrize("seed", range(20))
def test_random_schedules_valid(seed):
    rng = random.Random(seed)
    t = load_topology("symmetric")
    pairs = _random_pairs(rng, t, 6)
    for fpr in (False, True):
        res = schedule_rcpsp(pairs, fpr=fpr)
        assert check_schedule(res.schedule, pairs) == []
        placed = set(res.schedule.entries)
        assert placed.isdisjoint(res.withdrawn)
        total = sum(res.schedule.length // int(1000 / (10 * d.r_min)) for d, _ in pairs)
        assert len(placed) + len(res.withdrawn) == total


@pytest.mark.parametrize("rates", [(20.0, 20.0), (16.0, 16.0), (20.0, 10.0), (12.5, 25.0),
                                   (10.0, 20.0)])
def test_heuristic_placement_implies_oracle_feasible(line, rates):
    ds = [Demand("a", "A", "C", 0.6, rates[0]), Demand("b", "C", "D", 0.6, rates[1])]
    pairs = [(d, select_protocol(line, d)) for d in ds]
    for fpr in (True, False):
        net = build_full_aon(pairs, fpr=fpr)
        if len(net.activities) > 14:
            continue
        res = schedule_aon(net)
        orc = brute_force_aon(net)
        if not res.withdrawn:
            assert orc.feasible
        if not orc.feasible:
            assert res.withdrawn


def test_jitter_lags_zero_slack():
    t = load_topology("symmetric")
    ds = [Demand("a", "e0", "e1", 0.55, 3.125, 0.0), Demand("b", "e1", "e0", 0.55, 1.5625, 0.0)]
    pairs = [(d, select_protocol(t, d)) for d in ds]
    res = schedule_rcpsp(pairs, jitter=True)
    assert check_schedule(res.schedule, pairs) == []
    for d, _ in pairs:
        period = int(1000 / (10 * d.r_min))
        starts = res.schedule.starts(d.id)
        assert starts
        assert len({s % period for s in starts}) == 1


def test_jitter_lags_structure():
    _, pairs = worked_pair(16.0)
    (d1, p1), (d2, p2) = pairs
    pairs = [(Demand("P1", "A", "C", 0.6, 8.0, 0.0), p1), (Demand("P2", "C", "D", 0.6, 16.0, 0.0), p2)]
    net = add_jitter_lags(build_full_aon(pairs), [d for d, _ in pairs])
    assert net.horizon == 12
    lags = {(l.src, l.dst): (l.min_lag, l.max_lag) for l in net.lags}
    assert lags[("P2#0:s", "P2#1:s")] == (6, 6)
    assert lags[("P2#1:s", "P2#0:s")] == (6 - 12, 6 - 12)
    assert not any(l.src.startswith("P1#") and l.dst.startswith("P1#0:s") for l in net.lags)


def test_network_dump_is_sorted(fig4):
    dump = build_aon(fig4).dump()
    assert [a["id"] for a in dump["activities"]] == sorted(a["id"] for a in dump["activities"])
