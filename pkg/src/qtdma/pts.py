"""Periodic-task scheduling: each (demand, protocol) pair becomes a periodic
non-preemptive task, and tasks that share qubits are dispatched by NP-EDF on
one virtual processor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import LatencyExceedsPeriodError, RateUnsupportableError, ScheduleTooLongError
from .model import Demand, NetworkSchedule, RepeaterProtocol, to_slots

HYPERPERIOD_CAP = 2 ** 20
EPS = 1e-9


@dataclass(frozen=True)
class PeriodicTask:
    task_id: str
    wcet: int
    period: int
    phase: int = 0
    lam: int | None = None
    eta: int | None = None

    def __post_init__(self):
        if self.wcet < 1 or self.period < 1:
            raise ValueError(f"task {self.task_id}: wcet and period must be positive")
        if self.wcet > self.period:
            raise LatencyExceedsPeriodError(
                f"task {self.task_id}: wcet {self.wcet} exceeds period {self.period}")


def period_slots(r_min: float, t_slot: float) -> int:
    """Period in slots that guarantees at least `r_min` deliveries per second."""
    x = t_slot / 1000.0 * r_min
    if x >= 1.0 - EPS:
        raise RateUnsupportableError(
            f"rate {r_min} ebit/s needs more than one delivery per {t_slot} ms slot")
    return int(math.floor(1.0 / x + EPS))


def jitter_slack(j_max: float, t_slot: float) -> int:
    """Allowed deviation in slots from the nominal spacing for a variance bound."""
    return int(math.floor(math.sqrt(j_max) / (t_slot / 1000.0) + EPS))


def to_task(d: Demand, p: RepeaterProtocol, t_slot: float | None = None) -> PeriodicTask:
    t_slot = p.t_slot if t_slot is None else t_slot
    c = to_slots(p.latency, t_slot)
    period = period_slots(d.r_min, t_slot)
    if c > period:
        raise LatencyExceedsPeriodError(
            f"demand {d.id}: latency of {c} slots exceeds the period of {period} slots")
    lam = None if d.j_max is None else jitter_slack(d.j_max, t_slot)
    return PeriodicTask(d.id, c, period, 0, lam, lam)


def hyperperiod(tasks: Sequence[PeriodicTask], cap: int = HYPERPERIOD_CAP) -> int:
    if not tasks:
        raise ValueError("hyperperiod of an empty task set")
    h = math.lcm(*(t.period for t in tasks))
    if h > cap:
        raise ScheduleTooLongError(f"hyperperiod {h} exceeds the cap of {cap} slots")
    return h


def decompose_disjoint(pairs: Sequence[tuple[Demand, RepeaterProtocol]]) -> list[list[int]]:
    """Group pair indices into components of protocols that share qubits."""
    parent = list(range(len(pairs)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner = {}
    for i, (_, p) in enumerate(pairs):
        for q in p.qubits():
            if q in owner:
                a, b = find(i), find(owner[q])
                if a != b:
                    parent[max(a, b)] = min(a, b)
            else:
                owner[q] = i
    groups: dict[int, list[int]] = {}
    for i in range(len(pairs)):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


@dataclass
class TaskSchedule:
    hyperperiod: int
    starts: dict[str, list[int]] = field(default_factory=dict)
    unscheduled: set[tuple[str, int]] = field(default_factory=set)
    instances: dict[str, list[int]] = field(default_factory=dict)

    def merge(self, other: "TaskSchedule") -> None:
        if other.hyperperiod != self.hyperperiod:
            raise ValueError("cannot merge schedules of different lengths")
        for tid, s in other.starts.items():
            self.starts.setdefault(tid, []).extend(s)
            self.starts[tid].sort()
        for tid, s in other.instances.items():
            self.instances.setdefault(tid, []).extend(s)
            self.instances[tid].sort()
        self.unscheduled |= other.unscheduled


@dataclass
class _Job:
    task: int
    index: int
    release: int
    deadline: int
    wcet: int


def _jobs(tasks, h):
    jobs = []
    for i, t in enumerate(tasks):
        if h % t.period:
            raise ValueError(f"period {t.period} of {t.task_id} does not divide {h}")
        for j in range(h // t.period):
            jobs.append(_Job(i, j, t.phase + j * t.period, t.phase + (j + 1) * t.period, t.wcet))
    return jobs


def np_edf(tasks: Sequence[PeriodicTask], h: int | None = None,
           tie_break: str = "order", jitter: bool = False) -> TaskSchedule:
    """Non-preemptive EDF on one processor over one hyperperiod.

    At each decision instant the released instance with the earliest deadline
    runs to completion.  Instances that can no longer finish by their deadline
    are dropped.  Deadline ties go to the task listed first, or with
    ``tie_break="wcet"`` to the shorter task.

    With ``jitter=True`` the start of instance j is further restricted to
    [prev + k(T - lam), prev + k(T + eta)], where prev is the start of the last
    scheduled instance k indices earlier, and the last instance must also
    respect the wrap-around gap to the first one.
    """
    tasks = list(tasks)
    h = hyperperiod(tasks) if h is None else h
    out = TaskSchedule(h, {t.task_id: [] for t in tasks}, set(), {t.task_id: [] for t in tasks})
    if not tasks:
        return out
    if tie_break == "order":
        rank = lambda job: (job.deadline, job.task, job.index)
    elif tie_break == "wcet":
        rank = lambda job: (job.deadline, job.wcet, job.task, job.index)
    else:
        raise ValueError(f"unknown tie rule {tie_break!r}")
    pending = sorted(_jobs(tasks, h), key=lambda j: (j.release, j.task, j.index))
    last: dict[int, tuple[int, int]] = {}  # task -> (index, start) of last scheduled
    first: dict[int, tuple[int, int]] = {}

    def window(job):
        lo, hi = job.release, job.deadline - job.wcet
        if not jitter:
            return lo, hi
        t = tasks[job.task]
        if t.lam is None and t.eta is None:
            return lo, hi
        lam = t.period if t.lam is None else t.lam
        eta = t.period if t.eta is None else t.eta
        if job.task in last:
            pidx, pstart = last[job.task]
            k = job.index - pidx
            lo = max(lo, pstart + k * (t.period - lam))
            hi = min(hi, pstart + k * (t.period + eta))
        n = h // t.period
        if job.index == n - 1 and job.task in first:
            fidx, fstart = first[job.task]
            k = n - job.index + fidx
            lo = max(lo, fstart + h - k * (t.period + eta))
            hi = min(hi, fstart + h - k * (t.period - lam))
        return lo, hi

    now = 0
    while pending:
        eligible, waiting = [], []
        for job in list(pending):
            if job.release > now:
                continue
            lo, hi = window(job)
            if now > hi or lo > hi:
                pending.remove(job)
                out.unscheduled.add((tasks[job.task].task_id, job.index))
            elif lo <= now:
                eligible.append(job)
            else:
                waiting.append(lo)
        if eligible:
            job = min(eligible, key=rank)
            pending.remove(job)
            tid = tasks[job.task].task_id
            out.starts[tid].append(now)
            out.instances[tid].append(job.index)
            last[job.task] = (job.index, now)
            first.setdefault(job.task, (job.index, now))
            now += job.wcet
            continue
        future = [j.release for j in pending if j.release > now] + waiting
        if not future:
            break
        now = min(future)
    return out


def np_edf_jitter(tasks: Sequence[PeriodicTask], h: int | None = None,
                  tie_break: str = "order") -> TaskSchedule:
    return np_edf(tasks, h, tie_break, jitter=True)


@dataclass
class PtsResult:
    schedule: NetworkSchedule
    tasks: dict[str, PeriodicTask]
    components: list[list[str]]


def schedule_pts(pairs: Sequence[tuple[Demand, RepeaterProtocol]], t_slot: float = 10.0,
                 jitter: bool = False, tie_break: str = "order",
                 cap: int = HYPERPERIOD_CAP) -> PtsResult:
    """Schedule every pair with NP-EDF per qubit-sharing component and merge."""
    tasks = [to_task(d, p, t_slot) for d, p in pairs]
    protocols = {d.id: p for d, p in pairs}
    if not tasks:
        return PtsResult(NetworkSchedule(t_slot, 1), {}, [])
    h = hyperperiod(tasks, cap)
    merged = TaskSchedule(h)
    comps = decompose_disjoint(pairs)
    for comp in comps:
        merged.merge(np_edf([tasks[i] for i in comp], h, tie_break, jitter))
    entries = {}
    for tid, starts in merged.starts.items():
        for inst, s in zip(merged.instances[tid], starts):
            entries[(tid, inst)] = s
    sched = NetworkSchedule.build(t_slot, h, entries, protocols, merged.unscheduled)
    return PtsResult(sched, {t.task_id: t for t in tasks},
                     [[pairs[i][0].id for i in c] for c in comps])
