"""Routing and repeater-protocol synthesis.

The pipeline for one demand is: shortest-path route, recursive pivot
decomposition of the path into swaps (with distillation planned on
elementary links), qubit assignment and an ASAP/ALAP slot layout.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .errors import (InfeasibleLinkError, NoRouteError, ProtocolSelectionError,
                     QubitExhaustionError)
from .fidelity import (DEFAULT_SUCCESS, FID_TOL, DecayModel, SuccessModel,
                       distill_fidelity, end_to_end_worst_case, nested_pump_fidelity,
                       no_decay, required_pre_swap_fidelity, success_probability)
from .model import (Demand, LinkSpec, OpKind, ProtocolOp, QubitKind, QubitRef,
                    RepeaterProtocol, Topology, ceil_slots)


@dataclass(frozen=True)
class Route:
    demand_id: str
    path: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(self.path))
        if len(self.path) < 2:
            raise ValueError("a route needs at least two nodes")
        if len(set(self.path)) != len(self.path):
            raise ValueError(f"route {self.path} repeats a node")

    @property
    def hops(self) -> int:
        return len(self.path) - 1


def route(t: Topology, d: Demand) -> Route:
    """Minimum-length path; equal-length paths resolve to the lexicographically
    smallest node-id sequence."""
    for end in (d.src, d.dst):
        if not t.has_node(end):
            raise NoRouteError(f"demand {d.id}: unknown node {end!r}")
        if not t.node(end).is_end_node:
            raise NoRouteError(f"demand {d.id}: {end!r} is not an end node")
    # distances to dst, then walk greedily from src along tight edges
    dist = {d.dst: 0.0}
    heap = [(0.0, d.dst)]
    while heap:
        du, u = heapq.heappop(heap)
        if du > dist.get(u, math.inf):
            continue
        for v, link in t.neighbors(u):
            nd = du + link.length
            if nd < dist.get(v, math.inf) - 1e-12:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    if d.src not in dist:
        raise NoRouteError(f"demand {d.id}: {d.src} and {d.dst} are disconnected")
    path = [d.src]
    while path[-1] != d.dst:
        u = path[-1]
        tight = [v for v, link in t.neighbors(u)
                 if v in dist and v not in path
                 and abs(link.length + dist[v] - dist[u]) <= 1e-9 * max(1.0, dist[u])]
        path.append(min(tight))
    return Route(d.id, tuple(path))


def choose_link_capability(link: LinkSpec, f_required: float) -> tuple[float, float]:
    """Highest-rate capability whose fidelity meets `f_required`."""
    ok = [c for c in link.capabilities if c[0] >= f_required - FID_TOL]
    if not ok:
        raise InfeasibleLinkError(
            f"link {link.endpoints}: no capability reaches fidelity {f_required:.6f}")
    return max(ok, key=lambda c: c[1])


@dataclass(frozen=True)
class DistillationPlan:
    scheme: str = "none"  # none | pump | nested
    count: int = 0  # pumping rounds or nesting depth

    def __post_init__(self):
        if self.scheme not in ("none", "pump", "nested"):
            raise ValueError(f"unknown distillation scheme {self.scheme!r}")
        if self.scheme == "none" and self.count != 0:
            raise ValueError("plain links take no rounds")
        if self.scheme != "none" and self.count < 1:
            raise ValueError("pump rounds and nesting depth must be >= 1")

    @property
    def n_links(self) -> int:
        if self.scheme == "pump":
            return self.count + 1
        if self.scheme == "nested":
            return 2 ** self.count
        return 1

    def fidelity(self, f_base: float) -> float:
        if self.scheme == "pump":
            f = f_base
            for _ in range(self.count):
                f = distill_fidelity(f, f_base)
            return f
        if self.scheme == "nested":
            return nested_pump_fidelity(f_base, self.count)
        return f_base


def plan_distillation(f_target: float, link: LinkSpec, nesting_cap: int = 4,
                      pump_cap: int = 64) -> tuple[DistillationPlan, tuple[float, float]]:
    """Cheapest way to obtain a link of at least `f_target` on `link`.

    Cost is the expected generation time of all base links (links / rate).
    Plain links win, then pumping, then the shallowest nesting.
    """
    if not (0.25 < f_target <= 1.0 + FID_TOL):
        raise InfeasibleLinkError(f"target fidelity {f_target} outside (0.25, 1]")
    try:
        return DistillationPlan(), choose_link_capability(link, f_target)
    except InfeasibleLinkError:
        pass
    goal = f_target - FID_TOL
    best = None
    for f, r in link.capabilities:
        if f <= 0.5:
            continue
        g = f
        for rounds in range(1, pump_cap + 1):
            nxt = distill_fidelity(g, f)
            if nxt >= goal:
                key = ((rounds + 1) / r, rounds, -f)
                if best is None or key < best[0]:
                    best = (key, DistillationPlan("pump", rounds), (f, r))
                break
            if nxt - g < 1e-12:
                break
            g = nxt
    if best:
        return best[1], best[2]
    for depth in range(1, nesting_cap + 1):
        options = [((2 ** depth) / r, -f, (f, r)) for f, r in link.capabilities
                   if f > 0.5 and nested_pump_fidelity(f, depth) >= goal]
        if options:
            return DistillationPlan("nested", depth), min(options)[2]
    raise InfeasibleLinkError(
        f"link {link.endpoints}: fidelity {f_target:.6f} unreachable within nesting depth {nesting_cap}")


@dataclass
class DraftOp:
    """An operation of a protocol tree before timing and qubits are known.

    `ends` are the two nodes sharing the op's output link; for a swap,
    `nodes` holds only the pivot.
    """

    op_id: str
    kind: OpKind
    nodes: tuple[str, ...]
    ends: tuple[str, str]
    children: tuple[str, ...] = ()
    link_fidelity: float | None = None
    rate: float | None = None


@dataclass
class ProtocolDraft:
    ops: dict[str, DraftOp]
    root: str

    def postorder(self) -> list[str]:
        order: list[str] = []

        def walk(oid):
            for c in self.ops[oid].children:
                walk(c)
            order.append(oid)

        walk(self.root)
        return order

    def parent_map(self) -> dict[str, str]:
        return {c: oid for oid, op in self.ops.items() for c in op.children}

    def subtree(self, oid: str) -> set[str]:
        out, todo = set(), [oid]
        while todo:
            u = todo.pop()
            out.add(u)
            todo.extend(self.ops[u].children)
        return out


@dataclass(frozen=True)
class SelectionConfig:
    t_slot: float = 10.0
    pivot: str = "midpoint"  # midpoint | length
    nesting_cap: int = 4
    route_pump_cap: int = 3  # end-to-end distillation candidates tried
    route_nesting_cap: int = 2
    pump_cap: int = 64
    attempt_multiplier: float = 1.0
    decay: DecayModel = field(default=no_decay)
    success: SuccessModel = field(default=DEFAULT_SUCCESS)


def _pivot(path, i, j, t: Topology, rule: str) -> int:
    if rule == "midpoint":
        return (i + j) // 2
    if rule == "length":
        cum = [0.0]
        for a, b in zip(path, path[1:]):
            cum.append(cum[-1] + t.link(a, b).length)
        return min(range(i + 1, j), key=lambda p: (abs((cum[p] - cum[i]) - (cum[j] - cum[p])), p))
    raise ValueError(f"unknown pivot rule {rule!r}")


def copy_target(plan: DistillationPlan, f_target: float) -> float:
    """Lowest fidelity whose copies, distilled per `plan`, reach `f_target`."""
    if plan.scheme == "none":
        return f_target
    if plan.fidelity(1.0) < f_target - FID_TOL:
        raise InfeasibleLinkError(f"{plan} cannot reach {f_target}")
    lo, hi = 0.5, 1.0
    if plan.fidelity(lo) >= f_target:
        return lo
    for _ in range(100):
        mid = (lo + hi) / 2
        if plan.fidelity(mid) >= f_target:
            hi = mid
        else:
            lo = mid
    return hi


def build_draft(r: Route, f_min: float, t: Topology,
                config: SelectionConfig = SelectionConfig(),
                route_plan: DistillationPlan = DistillationPlan()) -> ProtocolDraft:
    """Recursive pivot decomposition of a route into a protocol tree.

    Distillation is planned on elementary links.  `route_plan` additionally
    distills copies of the whole end-to-end link.
    """
    ops: dict[str, DraftOp] = {}
    counter = iter(range(10 ** 9))

    def add(kind, nodes, ends, children=(), fid=None, rate=None) -> str:
        oid = f"_{next(counter)}"
        ops[oid] = DraftOp(oid, kind, tuple(nodes), tuple(ends), tuple(children), fid, rate)
        return oid

    def elementary(u, v, f_req):
        link = t.link(u, v)
        plan, (f, rate) = plan_distillation(f_req, link, config.nesting_cap, config.pump_cap)

        def new_link():
            return add(OpKind.LINK, (u, v), (u, v), fid=f, rate=rate)

        if plan.scheme == "pump":
            acc = new_link()
            for _ in range(plan.count):
                acc = add(OpKind.DISTILL, (u, v), (u, v), (acc, new_link()))
            return acc
        if plan.scheme == "nested":
            def nest(depth):
                if depth == 0:
                    return new_link()
                a = nest(depth - 1)
                b = nest(depth - 1)
                return add(OpKind.DISTILL, (u, v), (u, v), (a, b))
            return nest(plan.count)
        return new_link()

    def segment(i, j, f_req):
        if j - i == 1:
            return elementary(r.path[i], r.path[j], f_req)
        p = _pivot(r.path, i, j, t, config.pivot)
        f_sub = required_pre_swap_fidelity(f_req)
        left = segment(i, p, f_sub)
        right = segment(p, j, f_sub)
        return add(OpKind.SWAP, (r.path[p],), (r.path[i], r.path[j]), (left, right))

    def distilled(build, plan, f_req):
        if plan.scheme == "none":
            return build(f_req)
        g = copy_target(plan, f_req)
        ends = (r.path[0], r.path[-1])
        if plan.scheme == "pump":
            acc = build(g)
            for _ in range(plan.count):
                acc = add(OpKind.DISTILL, ends, ends, (acc, build(g)))
            return acc

        def nest(depth):
            if depth == 0:
                return build(g)
            a, b = nest(depth - 1), nest(depth - 1)
            return add(OpKind.DISTILL, ends, ends, (a, b))
        return nest(plan.count)

    try:
        root = distilled(lambda f: segment(0, r.hops, f), route_plan, f_min)
    except InfeasibleLinkError as exc:
        raise ProtocolSelectionError(f"demand {r.demand_id}: {exc}") from exc
    draft = ProtocolDraft(ops, root)
    return _relabel(draft)


def _relabel(draft: ProtocolDraft) -> ProtocolDraft:
    prefix = {OpKind.LINK: "L", OpKind.SWAP: "S", OpKind.DISTILL: "D"}
    count = {k: 0 for k in prefix}
    names = {}
    for oid in draft.postorder():
        kind = draft.ops[oid].kind
        count[kind] += 1
        names[oid] = f"{prefix[kind]}{count[kind]}"
    ops = {}
    for oid, op in draft.ops.items():
        ops[names[oid]] = DraftOp(names[oid], op.kind, op.nodes, op.ends,
                                  tuple(names[c] for c in op.children), op.link_fidelity, op.rate)
    return ProtocolDraft(ops, names[draft.root])


QMap = dict[str, tuple[frozenset[QubitRef], frozenset[QubitRef]]]
Windows = dict[str, tuple[int, int]]


class _Allocator:
    """List scheduler that places ops in slots while assigning qubits.

    Every qubit has a time from which it is free, and a flag telling whether
    it currently holds a link waiting for a consumer.  Ready ops are placed
    one at a time at their earliest feasible start.
    """

    def __init__(self, draft: ProtocolDraft, t: Topology, t_slot: float,
                 durations: dict[str, int] | None, attempt_multiplier: float,
                 fixed_q: QMap | None = None, serial_swaps: bool = False):
        self.draft = draft
        self.t = t
        self.t_slot = t_slot
        self.durations = durations or {}
        self.mult = attempt_multiplier
        self.fixed_q = fixed_q
        self.parent = draft.parent_map()
        self.order = {oid: i for i, oid in enumerate(draft.postorder())}
        self.free_at: dict[QubitRef, int] = {}
        self.holding: set[QubitRef] = set()
        self.holder: dict[tuple[str, str], QubitRef] = {}
        self.windows: Windows = {}
        self.q: QMap = {}
        # an op may start only after the earlier siblings under each
        # distill (and, in serial mode, swap) ancestor have finished
        self.gates: dict[str, list[str]] = {oid: [] for oid in draft.ops}
        for oid, op in draft.ops.items():
            if op.kind is OpKind.DISTILL or (serial_swaps and op.kind is OpKind.SWAP):
                for k, child in enumerate(op.children[1:], start=1):
                    for u in draft.subtree(child):
                        self.gates[u].extend(op.children[:k])

    def duration(self, op: DraftOp, stores_at: set[str]) -> int:
        if op.op_id in self.durations:
            return self.durations[op.op_id]
        if op.kind is OpKind.LINK:
            if not op.rate:
                raise ValueError(f"{op.op_id}: link op without a rate needs an explicit duration")
            ms = self.mult * 1000.0 / op.rate
            if stores_at:
                ms += max(self.t.node(x).move_latency for x in stores_at)
            return ceil_slots(ms, self.t_slot)
        if op.kind is OpKind.SWAP:
            return ceil_slots(self.t.node(op.nodes[0]).swap_latency, self.t_slot)
        return ceil_slots(max(self.t.node(x).distill_latency for x in op.ends), self.t_slot)

    def _consumer_at(self, oid: str, x: str) -> str | None:
        cur = oid
        while cur in self.parent:
            par = self.draft.ops[self.parent[cur]]
            if (par.kind is OpKind.SWAP and par.nodes[0] == x) or par.kind is OpKind.DISTILL:
                return par.op_id
            cur = par.op_id
        return None

    def _needs_storage(self, oid: str, x: str) -> bool:
        consumer = self._consumer_at(oid, x)
        if consumer is None:
            return False
        return any(o != oid and o not in self.windows and self.draft.ops[o].kind is OpKind.LINK
                   and x in self.draft.ops[o].nodes
                   for o in self.draft.subtree(consumer))

    def _pick(self, node: str, kind: QubitKind, taken: set[QubitRef]) -> QubitRef | None:
        spec = self.t.node(node)
        n = spec.num_comm if kind is QubitKind.COMM else spec.num_storage
        cands = [QubitRef(node, i, kind) for i in range(n)]
        cands = [q for q in cands if q not in self.holding and q not in taken]
        if not cands:
            return None
        return min(cands, key=lambda q: (self.free_at.get(q, 0), q.index))

    def _plan(self, oid: str):
        """Earliest (start, end, consumes, produces) for a ready op, or None."""
        op = self.draft.ops[oid]
        ready = max((self.windows[c][1] for c in op.children), default=0)
        if self.fixed_q is not None:
            cons, prod = self.fixed_q[oid]
            if op.kind is OpKind.LINK and any(q in self.holding for q in cons):
                return None
            start = max([ready] + [self.free_at.get(q, 0) for q in cons])
            stores = {q.node_id for q in prod if q.kind is QubitKind.STORAGE}
            return start, start + self.duration(op, stores), cons, prod
        if op.kind is OpKind.LINK:
            cons, prod, stores = set(), set(), set()
            for x in op.nodes:
                comm = self._pick(x, QubitKind.COMM, cons)
                if comm is None:
                    return None
                cons.add(comm)
                stor = None
                if self._needs_storage(oid, x):
                    stor = self._pick(x, QubitKind.STORAGE, cons)
                if stor is not None:
                    cons.add(stor)
                    prod.add(stor)
                    stores.add(x)
                else:
                    prod.add(comm)
            start = max(self.free_at.get(q, 0) for q in cons)
            return start, start + self.duration(op, stores), frozenset(cons), frozenset(prod)
        if op.kind is OpKind.SWAP:
            x = op.nodes[0]
            cons = {self.holder[(c, x)] for c in op.children}
            prod = set()
        else:
            cons = {self.holder[(c, x)] for c in op.children for x in op.ends}
            kept = op.children[0]
            prod = {self.holder[(kept, x)] for x in op.ends}
        start = max([ready] + [self.free_at.get(q, 0) for q in cons])
        return start, start + self.duration(op, set()), frozenset(cons), frozenset(prod)

    def _commit(self, oid: str, plan) -> None:
        start, end, cons, prod = plan
        op = self.draft.ops[oid]
        self.windows[oid] = (start, end)
        self.q[oid] = (frozenset(cons), frozenset(prod))
        for q in cons:
            self.free_at[q] = end
            self.holding.discard(q)
        for q in prod:
            self.holding.add(q)
        for x in op.ends:
            match = [q for q in prod if q.node_id == x]
            if match:
                self.holder[(oid, x)] = match[0]
            elif op.kind is OpKind.SWAP:
                side = _swap_holder_side(self.draft, op, x)
                self.holder[(oid, x)] = self.holder[(side, x)]

    def run(self) -> tuple[Windows, QMap]:
        pending = set(self.draft.ops)
        while pending:
            best = None
            for oid in pending:
                if any(c in pending for c in self.draft.ops[oid].children):
                    continue
                if any(g in pending for g in self.gates[oid]):
                    continue
                plan = self._plan(oid)
                if plan is None:
                    continue
                key = (plan[0], self.order[oid])
                if best is None or key < best[0]:
                    best = (key, oid, plan)
            if best is None:
                raise QubitExhaustionError(
                    "not enough free qubits to place ops " + ", ".join(sorted(pending)))
            self._commit(best[1], best[2])
            pending.discard(best[1])
        return self.windows, self.q


def _swap_holder_side(draft: ProtocolDraft, swap: DraftOp, x: str) -> str:
    for c in swap.children:
        if x in draft.ops[c].ends:
            return c
    raise ValueError(f"{swap.op_id}: no child ends at {x}")


def map_qubits(draft: ProtocolDraft, t: Topology, t_slot: float = 10.0,
               durations: dict[str, int] | None = None,
               attempt_multiplier: float = 1.0) -> QMap:
    """Assign (consumes, produces) qubit sets to every op.

    Each link op takes a vacant communication qubit at both ends.  At an end
    where a later link op under the same consumer still has to run, the link
    is moved to a vacant storage qubit; with none free it stays put.
    """
    try:
        _, q = _Allocator(draft, t, t_slot, durations, attempt_multiplier).run()
    except QubitExhaustionError:
        _, q = _Allocator(draft, t, t_slot, durations, attempt_multiplier,
                          serial_swaps=True).run()
    return q


def layout(draft: ProtocolDraft, q: QMap, t: Topology, t_slot: float = 10.0,
           durations: dict[str, int] | None = None,
           attempt_multiplier: float = 1.0) -> Windows:
    """Slot windows per op: ASAP under precedence and qubit availability, then
    link ops pushed as late as their consumers and qubits allow."""
    try:
        windows, _ = _Allocator(draft, t, t_slot, durations, attempt_multiplier, fixed_q=q).run()
    except QubitExhaustionError:
        windows, _ = _Allocator(draft, t, t_slot, durations, attempt_multiplier, fixed_q=q,
                                serial_swaps=True).run()
    return alap(draft, q, windows)


def alap(draft: ProtocolDraft, q: QMap, windows: Windows) -> Windows:
    win = dict(windows)
    parent = draft.parent_map()
    order = {oid: i for i, oid in enumerate(draft.postorder())}
    links = [o for o in win if draft.ops[o].kind is OpKind.LINK]
    links.sort(key=lambda o: (win[o][1], order[o]), reverse=True)
    for oid in links:
        s, e = win[oid]
        if oid not in parent:
            continue
        limit = win[parent[oid]][0]
        for qb in q[oid][0]:
            later = [win[o][0] for o in win if o != oid and qb in q[o][0] and win[o][0] >= e]
            if later:
                limit = min(limit, min(later))
        if limit > e:
            win[oid] = (s + limit - e, limit)
    shift = min(s for s, _ in win.values())
    return {o: (s - shift, e - shift) for o, (s, e) in win.items()}


def assemble(draft: ProtocolDraft, q: QMap, windows: Windows, t_slot: float = 10.0,
             decay: DecayModel = no_decay,
             success: SuccessModel = DEFAULT_SUCCESS) -> RepeaterProtocol:
    ops = []
    for oid in draft.postorder():
        d = draft.ops[oid]
        s, e = windows[oid]
        ops.append(ProtocolOp(
            op_id=oid, kind=d.kind, nodes=frozenset(d.nodes),
            consumes=q[oid][0], produces=q[oid][1],
            start=s * t_slot, end=e * t_slot,
            link_fidelity=d.link_fidelity if d.kind is OpKind.LINK else None))
    edges = frozenset((c, oid) for oid, d in draft.ops.items() for c in d.children)
    rates = {oid: d.rate for oid, d in draft.ops.items() if d.kind is OpKind.LINK}
    p = RepeaterProtocol(tuple(ops), edges, t_slot)
    return RepeaterProtocol(tuple(ops), edges, t_slot,
                            worst_case_fidelity=end_to_end_worst_case(p, decay),
                            success_probability=success_probability(p, success, rates))


def _route_plans(r: Route, config: SelectionConfig) -> list[DistillationPlan]:
    plans = [DistillationPlan()]
    if r.hops >= 2:
        plans += [DistillationPlan("pump", k) for k in range(1, config.route_pump_cap + 1)]
        plans += [DistillationPlan("nested", d) for d in range(1, config.route_nesting_cap + 1)]
    return plans


def esss(r: Route, f_min: float, t: Topology,
         config: SelectionConfig = SelectionConfig()) -> RepeaterProtocol:
    """Build a complete protocol delivering at least `f_min` over route `r`.

    The plain decomposition is compared with variants that also distill
    copies of the end-to-end link; the lowest-latency protocol that fits in
    the nodes' qubits wins, ties going to the simpler plan.
    """
    if not (0.25 < f_min <= 1.0):
        raise ProtocolSelectionError(f"f_min {f_min} outside (0.25, 1]")
    best, first_err = None, None
    for plan in _route_plans(r, config):
        try:
            draft = build_draft(r, f_min, t, config, plan)
            q = map_qubits(draft, t, config.t_slot, attempt_multiplier=config.attempt_multiplier)
        except (ProtocolSelectionError, InfeasibleLinkError) as exc:
            first_err = first_err or exc
            continue
        windows = layout(draft, q, t, config.t_slot, attempt_multiplier=config.attempt_multiplier)
        p = assemble(draft, q, windows, config.t_slot, config.decay, config.success)
        if p.worst_case_fidelity < f_min - FID_TOL:
            first_err = first_err or ProtocolSelectionError(
                f"demand {r.demand_id}: protocol reaches only {p.worst_case_fidelity:.6f} < {f_min}")
            continue
        if best is None or p.latency < best.latency:
            best = p
    if best is None:
        if isinstance(first_err, ProtocolSelectionError):
            raise first_err
        raise ProtocolSelectionError(f"demand {r.demand_id}: {first_err}")
    return best


def select_protocol(t: Topology, d: Demand,
                    config: SelectionConfig = SelectionConfig()) -> RepeaterProtocol:
    return esss(route(t, d), d.f_min, t, config)
