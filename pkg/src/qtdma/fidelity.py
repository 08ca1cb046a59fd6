"""Werner-state fidelity arithmetic.

All maps take and return fidelities of Werner states, which are fully
described by a single number in [0.25, 1].
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .errors import FidelityDomainError
from .model import OpKind, RepeaterProtocol

FID_TOL = 1e-9


def _check(*fs: float) -> None:
    for f in fs:
        if not (0.0 - 1e-12 <= f <= 1.0 + 1e-12) or math.isnan(f):
            raise FidelityDomainError(f"fidelity {f} outside [0, 1]")


def swap_fidelity(f1: float, f2: float) -> float:
    """Fidelity of the link produced by swapping two Werner links."""
    _check(f1, f2)
    return f1 * f2 + (1 - f1) * (1 - f2) / 3


def distill_fidelity(f1: float, f2: float) -> float:
    """Output fidelity of two-to-one (BBPSSW-style) distillation of Werner links."""
    _check(f1, f2)
    num = f1 * f2 + (1 - f1) * (1 - f2) / 9
    den = distill_success(f1, f2)
    if den <= 0:
        raise ArithmeticError(f"distillation denominator {den} is not positive")
    return num / den


def distill_success(f1: float, f2: float) -> float:
    """Probability that two-to-one distillation of Werner links succeeds."""
    return (f1 * f2 + f1 * (1 - f2) / 3 + f2 * (1 - f1) / 3
            + 5 * (1 - f1) * (1 - f2) / 9)


def required_pre_swap_fidelity(f_target: float) -> float:
    """Fidelity two equal links need so that swapping them yields `f_target`.

    Solves 4F^2 - 2F + (1 - 3 f_target) = 0 for its upper root.
    """
    if not (0.25 < f_target <= 1.0 + 1e-12):
        raise FidelityDomainError(f"target fidelity {f_target} must lie in (0.25, 1]")
    f_target = min(f_target, 1.0)
    disc = 12 * f_target - 3
    if disc > 1e-6:
        f = (1 + math.sqrt(disc)) / 4
        return min(f, 1.0)
    lo, hi = 0.25, 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if swap_fidelity(mid, mid) < f_target:
            lo = mid
        else:
            hi = mid
    return hi


def pump_sequence(f_base: float, rounds: int) -> list[float]:
    """[F1, ..., F_rounds] with F1 = f_base and F_{k+1} = distill(F_k, f_base)."""
    _check(f_base)
    seq = [f_base]
    while len(seq) < rounds:
        seq.append(distill_fidelity(seq[-1], f_base))
    return seq[:max(rounds, 0)]


def pump_fixed_point(f_base: float, tol: float = 1e-15, max_iter: int = 100000) -> float:
    f = f_base
    for _ in range(max_iter):
        nxt = distill_fidelity(f, f_base)
        if abs(nxt - f) <= tol:
            return nxt
        f = nxt
    return f


def nested_pump_fidelity(f_base: float, depth: int) -> float:
    """G_depth where G_0 = f_base and G_{d+1} = distill(G_d, G_d)."""
    _check(f_base)
    g = f_base
    for _ in range(depth):
        g = distill_fidelity(g, g)
    return g


class DecayModel(Protocol):
    def __call__(self, fidelity: float, storage_ms: float) -> float: ...


def no_decay(fidelity: float, storage_ms: float) -> float:
    return fidelity


@dataclass(frozen=True)
class ExponentialDecay:
    """Depolarizing memory: F(t) = 1/4 + (F - 1/4) exp(-rate t)."""

    rate_per_ms: float

    def __call__(self, fidelity: float, storage_ms: float) -> float:
        return 0.25 + (fidelity - 0.25) * math.exp(-self.rate_per_ms * max(storage_ms, 0.0))


def _topo_order(p: RepeaterProtocol) -> list[str]:
    indeg = defaultdict(int)
    succ = defaultdict(list)
    for a, b in p.edges:
        indeg[b] += 1
        succ[a].append(b)
    ready = sorted(op.op_id for op in p.ops if indeg[op.op_id] == 0)
    order = []
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in sorted(succ[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
        ready.sort()
    if len(order) != len(p.ops):
        raise ValueError("protocol graph has a cycle")
    return order


def end_to_end_worst_case(p: RepeaterProtocol, decay: DecayModel = no_decay,
                          order: list[str] | None = None,
                          trace: list | None = None) -> float:
    """Worst-case fidelity of the end-to-end link a protocol delivers.

    Links are taken to exist from the start of their generating op; outputs
    of swaps and distills from the op's end.  Each input decays for the time
    between its creation and the start of the op consuming it.
    """
    sinks = p.sinks()
    if len(sinks) != 1:
        raise ValueError(f"protocol must have exactly one sink, found {sinks}")
    order = order or _topo_order(p)
    out: dict[str, tuple[float, float]] = {}  # op_id -> (fidelity, created_ms)
    for oid in order:
        op = p.op(oid)
        kids = p.children(oid)
        inputs = [decay(out[k][0], op.start - out[k][1]) for k in kids]
        if trace is not None:
            for k, f in zip(kids, inputs):
                trace.append((k, oid, f))
        if op.kind is OpKind.LINK:
            out[oid] = (op.link_fidelity, op.start)
            continue
        if len(inputs) != 2:
            raise ValueError(f"{oid}: {op.kind.value} needs exactly two inputs")
        combine = swap_fidelity if op.kind is OpKind.SWAP else distill_fidelity
        out[oid] = (combine(*inputs), op.end)
    return out[sinks[0]][0]


def _unit_link(cap: tuple[float, float], slots: int) -> float:
    return 1.0


def _unit_distill(f1: float, f2: float) -> float:
    return 1.0


@dataclass(frozen=True)
class SuccessModel:
    link_success: Callable[[tuple[float, float], int], float] = _unit_link
    swap_success: float = 1.0
    distill_success: Callable[[float, float], float] = _unit_distill
    t_slot: float = 10.0

    @property
    def trivial(self) -> bool:
        return (self.link_success is _unit_link and self.swap_success == 1.0
                and self.distill_success is _unit_distill)


@dataclass(frozen=True)
class PoissonLinkSuccess:
    """Link generation as a Poisson process: P = 1 - exp(-rate * window)."""

    t_slot: float = 10.0

    def __call__(self, cap: tuple[float, float], slots: int) -> float:
        return 1.0 - math.exp(-cap[1] * slots * self.t_slot / 1000.0)


DEFAULT_SUCCESS = SuccessModel()


def success_probability(p: RepeaterProtocol, m: SuccessModel = DEFAULT_SUCCESS,
                        rates: dict[str, float] | None = None) -> float:
    """Product of per-op success probabilities.

    Link ops take their generation rate (Hz) from `rates` (op_id -> rate);
    a missing rate counts as 0.
    """
    prob = 1.0
    fid = {}
    for oid in _topo_order(p):
        op = p.op(oid)
        s, e = p.window(op)
        if op.kind is OpKind.LINK:
            rate = (rates or {}).get(oid, 0.0)
            prob *= m.link_success((op.link_fidelity, rate), e - s)
            fid[oid] = op.link_fidelity
        elif op.kind is OpKind.SWAP:
            prob *= m.swap_success
            fid[oid] = swap_fidelity(*(fid[k] for k in p.children(oid)))
        else:
            f1, f2 = (fid[k] for k in p.children(oid))
            prob *= m.distill_success(f1, f2)
            fid[oid] = distill_fidelity(f1, f2)
    return prob
