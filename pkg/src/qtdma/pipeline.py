"""Batch pipeline: route and select protocols for demands, then schedule."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .errors import QtdmaError
from .metrics import ScheduleReport, report
from .model import Demand, NetworkSchedule, RepeaterProtocol, Topology
from .protoselect import SelectionConfig, select_protocol
from .pts import schedule_pts, to_task
from .rcpsp import schedule_rcpsp

log = logging.getLogger(__name__)

SCHEDULERS = ("pts-np-edf", "rcpsp-np-edf", "rcpsp-np-fpr")


@dataclass
class Prepared:
    pairs: list[tuple[Demand, RepeaterProtocol]] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (demand id, reason)


def prepare(t: Topology, demands: Sequence[Demand],
            config: SelectionConfig = SelectionConfig(),
            cache: dict | None = None) -> Prepared:
    """Select a protocol for each demand; demands that cannot be served are
    set aside with the reason.

    `cache` maps (src, dst, f_min) to a protocol or the selection error and
    may be shared across calls with the same topology and config.
    """
    out = Prepared()
    cache = {} if cache is None else cache
    for d in demands:
        key = (d.src, d.dst, d.f_min)
        if key not in cache:
            try:
                cache[key] = select_protocol(t, d, config)
            except QtdmaError as exc:
                cache[key] = exc
        p = cache[key]
        if isinstance(p, QtdmaError):
            out.rejected.append((d.id, str(p)))
            continue
        try:
            to_task(d, p, config.t_slot)
        except QtdmaError as exc:
            out.rejected.append((d.id, str(exc)))
            continue
        out.pairs.append((d, p))
    for did, why in out.rejected:
        log.debug("demand %s rejected: %s", did, why)
    return out


def run_scheduler(name: str, pairs: Sequence[tuple[Demand, RepeaterProtocol]],
                  t_slot: float = 10.0, tie_break: str = "order") -> NetworkSchedule:
    """Schedule pairs with one of the three heuristics.  Demands carrying a
    jitter bound get the jitter-constrained variant."""
    pairs = list(pairs)
    jitter = any(d.j_max is not None for d, _ in pairs)
    if name == "pts-np-edf":
        return schedule_pts(pairs, t_slot, jitter=jitter, tie_break=tie_break).schedule
    if name == "rcpsp-np-edf":
        return schedule_rcpsp(pairs, t_slot, fpr=False, jitter=jitter).schedule
    if name == "rcpsp-np-fpr":
        return schedule_rcpsp(pairs, t_slot, fpr=True, jitter=jitter).schedule
    raise ValueError(f"unknown scheduler {name!r}; choose from {', '.join(SCHEDULERS)}")


@dataclass
class PipelineResult:
    scheduler: str
    prepared: Prepared
    schedule: NetworkSchedule
    report: ScheduleReport


def run_pipeline(t: Topology, demands: Sequence[Demand], scheduler: str,
                 config: SelectionConfig = SelectionConfig(),
                 prepared: Prepared | None = None, strict: bool = True) -> PipelineResult:
    """Route, select, schedule and validate.  With `strict`, a schedule that
    fails validation raises, since it can only come from a bug."""
    prepared = prepared or prepare(t, demands, config)
    sched = run_scheduler(scheduler, prepared.pairs, config.t_slot)
    rep = report(sched, prepared.pairs)
    if strict and rep.violations:
        raise RuntimeError(f"{scheduler} emitted an invalid schedule: "
                           + "; ".join(map(str, rep.violations[:5])))
    return PipelineResult(scheduler, prepared, sched, rep)
