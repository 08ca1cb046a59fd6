"""Schedule validation and QoS metrics."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .fidelity import FID_TOL
from .model import (Demand, NetworkSchedule, QubitRef, RepeaterProtocol, Violation,
                    qubit_usage)

Pairs = Sequence[tuple[Demand, RepeaterProtocol]] | Mapping[str, tuple[Demand, RepeaterProtocol]]


def _as_map(pairs: Pairs) -> dict[str, tuple[Demand, RepeaterProtocol]]:
    if isinstance(pairs, Mapping):
        return dict(pairs)
    return {d.id: (d, p) for d, p in pairs}


@dataclass(frozen=True)
class _Use:
    start: int
    end: int
    demand_id: str
    instance: int
    op_id: str
    kind: str


def check_schedule(s: NetworkSchedule, pairs: Pairs) -> list[Violation]:
    """Check a schedule against the offset map, exclusive qubit use and
    stored-link protection.

    Kinds reported: ``constraint-1`` (op slots disagree with the protocol's
    offsets), ``constraint-2`` (two executing ops of different instances
    share a qubit), ``constraint-3`` (an op of another instance touches a
    qubit holding a stored link), ``bounds`` (outside the cycle) and
    ``unknown-demand``.
    """
    pm = _as_map(pairs)
    out: list[Violation] = []
    uses: dict[QubitRef, list[_Use]] = defaultdict(list)
    for (did, inst), start in sorted(s.entries.items()):
        if did not in pm:
            out.append(Violation("unknown-demand", f"entry for unknown demand {did}",
                                 {"demand": did, "instance": inst}))
            continue
        p = pm[did][1]
        slots = {}
        for op in p.ops:
            key = (did, inst, op.op_id)
            a, b = p.window(op)
            got = s.derived_op_slots.get(key)
            if got != (start + a, start + b):
                out.append(Violation("constraint-1",
                                     f"{did}#{inst} {op.op_id}: at {got}, offsets require "
                                     f"{(start + a, start + b)}",
                                     {"demand": did, "instance": inst, "op": op.op_id}))
            slots[op.op_id] = got if got is not None else (start + a, start + b)
        end = start + p.latency_slots
        for oid, (a, b) in slots.items():
            if a < 0 or b > s.length:
                out.append(Violation("bounds", f"{did}#{inst} {oid} runs over [{a}, {b}) outside "
                                     f"[0, {s.length})", {"demand": did, "instance": inst, "op": oid}))
        for q, ivs in qubit_usage(p).items():
            for iv in ivs:
                a, b = slots[iv.op_id]
                if iv.kind == "exec":
                    uses[q].append(_Use(a, b, did, inst, iv.op_id, "exec"))
                else:
                    nxt = [x for x in ivs if x.kind == "exec" and x.start == iv.end]
                    until = slots[nxt[0].op_id][0] if nxt else end
                    if until > b:
                        uses[q].append(_Use(b, until, did, inst, iv.op_id, "hold"))
    extra = set(s.derived_op_slots) - {(d, i, op.op_id) for (d, i) in s.entries if d in pm
                                       for op in pm[d][1].ops}
    for key in sorted(extra):
        out.append(Violation("constraint-1", f"op slot {key} belongs to no scheduled instance",
                             {"key": key}))
    for q in sorted(uses):
        lst = sorted(uses[q], key=lambda u: (u.start, u.end, u.demand_id, u.instance))
        active: list[_Use] = []
        for u in lst:
            active = [a for a in active if a.end > u.start]
            for a in active:
                if (a.demand_id, a.instance) == (u.demand_id, u.instance):
                    kind = "intra-instance"
                elif a.kind == "exec" and u.kind == "exec":
                    kind = "constraint-2"
                else:
                    kind = "constraint-3"
                out.append(Violation(
                    kind,
                    f"{q}: {a.demand_id}#{a.instance} {a.op_id} ({a.kind} [{a.start},{a.end})) "
                    f"overlaps {u.demand_id}#{u.instance} {u.op_id} ({u.kind} [{u.start},{u.end}))",
                    {"qubit": q, "a": (a.demand_id, a.instance, a.op_id),
                     "b": (u.demand_id, u.instance, u.op_id),
                     "slots": (max(a.start, u.start), min(a.end, u.end))}))
            if u.end > u.start:
                active.append(u)
    return out


def throughput(s: NetworkSchedule, d: Demand, p: RepeaterProtocol | None = None,
               scale_by_success: bool = False) -> float:
    """Delivered entangled links per second for one demand."""
    n = len(s.starts(d.id))
    rate = n / (s.length * s.t_slot / 1000.0)
    if scale_by_success and p is not None:
        rate *= p.success_probability
    return rate


def delivery_times(s: NetworkSchedule, d: Demand, p: RepeaterProtocol) -> list[float]:
    """Delivery instants in seconds: instance start plus protocol latency."""
    return [(st + p.latency_slots) * s.t_slot / 1000.0 for st in s.starts(d.id)]


def jitter(s: NetworkSchedule, d: Demand, p: RepeaterProtocol) -> float | None:
    """Population variance (s^2) of inter-delivery gaps over the cyclic schedule,
    including the gap that wraps into the next cycle."""
    starts = s.starts(d.id)
    if not starts:
        return None
    var_slots = cyclic_gap_variance_slots([x + p.latency_slots for x in starts], s.length)
    return float(var_slots * (s.t_slot / 1000.0) ** 2)


def cyclic_gap_variance_slots(times: Sequence[int], period: int) -> Fraction:
    """Exact population variance of the cyclic gaps of integer time points."""
    times = sorted(times)
    gaps = [b - a for a, b in zip(times, times[1:])] + [times[0] + period - times[-1]]
    n = len(gaps)
    return Fraction(n * sum(g * g for g in gaps) - sum(gaps) ** 2, n * n)


def cyclic_gap_variance(times: Sequence[float], period: float) -> float:
    times = sorted(times)
    gaps = [b - a for a, b in zip(times, times[1:])] + [times[0] + period - times[-1]]
    mean = sum(gaps) / len(gaps)
    return sum((g - mean) ** 2 for g in gaps) / len(gaps)


@dataclass
class DemandMetrics:
    achieved_rate: float
    jitter: float | None
    fidelity_ok: bool
    satisfied: bool
    instances_scheduled: int
    instances_dropped: int


@dataclass
class ScheduleReport:
    per_demand: dict[str, DemandMetrics] = field(default_factory=dict)
    network_throughput: float = 0.0
    violations: list[Violation] = field(default_factory=list)

    def csv_rows(self, demands: Mapping[str, Demand]) -> list[dict]:
        rows = []
        for did, m in self.per_demand.items():
            rows.append({"demand_id": did, "r_min": demands[did].r_min,
                         "achieved_rate": m.achieved_rate, "jitter": m.jitter,
                         "satisfied": m.satisfied})
        return rows

    def to_csv(self, demands: Mapping[str, Demand]) -> str:
        buf = io.StringIO()
        fields = ["demand_id", "r_min", "achieved_rate", "jitter", "satisfied"]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in self.csv_rows(demands):
            w.writerow(row)
        w.writerow({"demand_id": "ALL", "achieved_rate": self.network_throughput})
        return buf.getvalue()


def report(s: NetworkSchedule, pairs: Pairs, scale_by_success: bool = False) -> ScheduleReport:
    pm = _as_map(pairs)
    rep = ScheduleReport(violations=check_schedule(s, pm))
    for did, (d, p) in pm.items():
        rate = throughput(s, d, p, scale_by_success)
        jit = jitter(s, d, p)
        fid_ok = p.worst_case_fidelity is not None and p.worst_case_fidelity >= d.f_min - FID_TOL
        ok = rate >= d.r_min - 1e-9 and fid_ok and (
            d.j_max is None or (jit is not None and jit <= d.j_max + 1e-12))
        dropped = sum(1 for (x, _) in s.unscheduled if x == did)
        rep.per_demand[did] = DemandMetrics(rate, jit, fid_ok, ok, len(s.starts(did)), dropped)
        rep.network_throughput += rate
    return rep
