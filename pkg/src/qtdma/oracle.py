"""Exhaustive feasibility search for tiny instances, used as a test oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .errors import OracleSizeError
from .pts import PeriodicTask, hyperperiod
from .rcpsp import GLOBAL_END, GLOBAL_START, ActivityNetwork, _groups

MAX_TASKS = 3
MAX_H = 24
MAX_ACTIVITIES = 12


@dataclass
class OracleResult:
    feasible: bool
    witness: dict = field(default_factory=dict)


def brute_force_feasible(tasks: Sequence[PeriodicTask], h: int | None = None,
                         work_conserving: bool = True) -> OracleResult:
    """Can every instance of `tasks` run on one processor without preemption?

    With `work_conserving` the processor never idles while an instance is
    released; otherwise idling until any later release is also explored.
    The witness maps task ids to start slots.
    """
    tasks = list(tasks)
    if not tasks:
        return OracleResult(True, {})
    if len(tasks) > MAX_TASKS:
        raise OracleSizeError(f"{len(tasks)} tasks exceed the oracle cap of {MAX_TASKS}")
    h = hyperperiod(tasks) if h is None else h
    if h > MAX_H:
        raise OracleSizeError(f"hyperperiod {h} exceeds the oracle cap of {MAX_H}")
    jobs = [(i, j, t.phase + j * t.period, t.phase + (j + 1) * t.period, t.wcet)
            for i, t in enumerate(tasks) for j in range(h // t.period)]

    def search(now, remaining, starts):
        if not remaining:
            return list(starts)
        if any(now + c > dl for (_, _, r, dl, c) in remaining if r <= now):
            return None
        released = [job for job in remaining if job[2] <= now]
        later = sorted({job[2] for job in remaining if job[2] > now})
        choices = [(now, job) for job in released]
        if not released:
            choices = [(later[0], None)]
        elif not work_conserving:
            choices += [(r, None) for r in later]
        for t, job in choices:
            if job is None:
                res = search(t, remaining, starts)
            else:
                rest = [x for x in remaining if x is not job]
                starts.append((job[0], job[1], t))
                res = search(t + job[4], rest, starts)
                starts.pop()
            if res is not None:
                return res
        return None

    found = search(0, jobs, [])
    if found is None:
        return OracleResult(False, {})
    witness = {t.task_id: [] for t in tasks}
    for i, _, s in sorted(found, key=lambda x: (x[0], x[1])):
        witness[tasks[i].task_id].append(s)
    return OracleResult(True, witness)


def brute_force_aon(net: ActivityNetwork) -> OracleResult:
    """Try every start slot of every instance of a tiny activity network.

    Feasible when all instances can be placed with qubit exclusivity and all
    time lags satisfied.  The witness maps (demand, instance) to start slots.
    """
    real = [a for a in net.activities if a not in (GLOBAL_START, GLOBAL_END)]
    if len(real) > MAX_ACTIVITIES:
        raise OracleSizeError(f"{len(real)} activities exceed the oracle cap of {MAX_ACTIVITIES}")
    if net.horizon > MAX_H:
        raise OracleSizeError(f"horizon {net.horizon} exceeds the oracle cap of {MAX_H}")
    groups = _groups(net)
    if not groups:
        return OracleResult(True, {})
    dur = {a: act.duration for a, act in net.activities.items()}

    def ok(assign):
        starts = {GLOBAL_START: 0, GLOBAL_END: net.horizon}
        for g, t in zip(groups, assign):
            for a, off in g.members.items():
                starts[a] = t + off
        for l in net.lags:
            if l.src in starts and l.dst in starts:
                gap = starts[l.dst] - (starts[l.src] + dur[l.src])
                if gap < l.min_lag or (l.max_lag is not None and gap > l.max_lag):
                    return False
        busy = {}
        for a, s in starts.items():
            for q in net.activities[a].resources:
                for x in range(s, s + dur[a]):
                    if (q, x) in busy:
                        return False
                    busy[(q, x)] = a
        return True

    def rec(i, assign):
        if i == len(groups):
            return list(assign) if ok(assign) else None
        g = groups[i]
        for t in range(g.est, g.lst + 1):
            assign.append(t)
            res = rec(i + 1, assign)
            assign.pop()
            if res is not None:
                return res
        return None

    found = rec(0, [])
    if found is None:
        return OracleResult(False, {})
    return OracleResult(True, {g.key: t for g, t in zip(groups, found)})
