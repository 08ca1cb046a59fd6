"""Value types for topologies, demands, repeater protocols and schedules.

Everything here is immutable after construction.  Times on protocol
operations are kept in milliseconds (the unit used at I/O boundaries);
`RepeaterProtocol.window` converts them to integer slot offsets, which is
what all scheduling arithmetic works with.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping

SLOT_TOL = 1e-9


class QubitKind(str, Enum):
    COMM = "communication"
    STORAGE = "storage"


class OpKind(str, Enum):
    LINK = "link"
    SWAP = "swap"
    DISTILL = "distill"


@dataclass(frozen=True, order=True)
class QubitRef:
    node_id: str
    index: int
    kind: QubitKind = QubitKind.COMM

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"negative qubit index {self.index}")
        object.__setattr__(self, "kind", QubitKind(self.kind))

    def __str__(self) -> str:
        tag = "comm" if self.kind is QubitKind.COMM else "storage"
        return f"{self.node_id}-{tag}{self.index}"


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    num_comm: int = 1
    num_storage: int = 3
    swap_latency: float = 1.0
    distill_latency: float = 0.526
    move_latency: float = 0.961
    is_end_node: bool = False

    def __post_init__(self):
        if self.num_comm < 1:
            raise ValueError(f"node {self.node_id}: needs at least one communication qubit")
        if self.num_storage < 0:
            raise ValueError(f"node {self.node_id}: negative storage count")
        for name in ("swap_latency", "distill_latency", "move_latency"):
            if not getattr(self, name) > 0:
                raise ValueError(f"node {self.node_id}: {name} must be positive")

    def qubits(self) -> list[QubitRef]:
        comm = [QubitRef(self.node_id, i, QubitKind.COMM) for i in range(self.num_comm)]
        stor = [QubitRef(self.node_id, i, QubitKind.STORAGE) for i in range(self.num_storage)]
        return comm + stor

    def owns(self, q: QubitRef) -> bool:
        if q.node_id != self.node_id:
            return False
        limit = self.num_comm if q.kind is QubitKind.COMM else self.num_storage
        return q.index < limit


@dataclass(frozen=True)
class LinkSpec:
    """An optical link.  `capabilities` lists (fidelity, rate_hz) pairs."""

    endpoints: tuple[str, str]
    length: float
    capabilities: tuple[tuple[float, float], ...]

    def __post_init__(self):
        u, v = self.endpoints
        if u == v:
            raise ValueError(f"link endpoints must differ, got {u!r} twice")
        object.__setattr__(self, "endpoints", tuple(sorted((u, v))))
        caps = tuple((float(f), float(r)) for f, r in self.capabilities)
        object.__setattr__(self, "capabilities", caps)
        if not caps:
            raise ValueError(f"link {u}-{v} has no capabilities")
        for f, r in caps:
            if not (0.25 < f <= 1.0) or not r > 0:
                raise ValueError(f"link {u}-{v}: bad capability ({f}, {r})")
        for (f1, r1), (f2, r2) in zip(caps, caps[1:]):
            if not (f1 > f2 and r1 < r2):
                raise ValueError(
                    f"link {u}-{v}: capabilities must have strictly decreasing "
                    f"fidelity and strictly increasing rate"
                )
        if self.length < 0:
            raise ValueError(f"link {u}-{v}: negative length")

    @property
    def key(self) -> frozenset[str]:
        return frozenset(self.endpoints)

    def other(self, node_id: str) -> str:
        u, v = self.endpoints
        return v if node_id == u else u


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.node_id)))
        object.__setattr__(self, "links", tuple(sorted(self.links, key=lambda l: l.endpoints)))
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        seen = set()
        for link in self.links:
            for end in link.endpoints:
                if end not in ids:
                    raise ValueError(f"link endpoint {end!r} is not a node")
            if link.key in seen:
                raise ValueError(f"duplicate link {link.endpoints}")
            seen.add(link.key)

    @cached_property
    def _node_index(self) -> dict[str, NodeSpec]:
        return {n.node_id: n for n in self.nodes}

    @cached_property
    def _link_index(self) -> dict[frozenset, LinkSpec]:
        return {l.key: l for l in self.links}

    @cached_property
    def _adjacency(self) -> dict[str, list[tuple[str, LinkSpec]]]:
        adj: dict[str, list] = {n.node_id: [] for n in self.nodes}
        for link in self.links:
            u, v = link.endpoints
            adj[u].append((v, link))
            adj[v].append((u, link))
        for nbrs in adj.values():
            nbrs.sort(key=lambda x: x[0])
        return adj

    def node(self, node_id: str) -> NodeSpec:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise KeyError(f"unknown node {node_id!r}") from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._node_index

    def link(self, u: str, v: str) -> LinkSpec:
        try:
            return self._link_index[frozenset((u, v))]
        except KeyError:
            raise KeyError(f"no link between {u!r} and {v!r}") from None

    def has_link(self, u: str, v: str) -> bool:
        return frozenset((u, v)) in self._link_index

    def neighbors(self, node_id: str) -> list[tuple[str, LinkSpec]]:
        return self._adjacency[node_id]

    def end_nodes(self) -> list[str]:
        return [n.node_id for n in self.nodes if n.is_end_node]

    def qubits(self) -> frozenset[QubitRef]:
        """The resource set: every qubit of every node."""
        return frozenset(q for n in self.nodes for q in n.qubits())

    def owns(self, q: QubitRef) -> bool:
        return self.has_node(q.node_id) and self.node(q.node_id).owns(q)


@dataclass(frozen=True)
class Demand:
    id: str
    src: str
    dst: str
    f_min: float
    r_min: float
    j_max: float | None = None

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"demand {self.id}: src and dst coincide")
        if not (0.25 < self.f_min <= 1.0):
            raise ValueError(f"demand {self.id}: f_min must lie in (0.25, 1]")
        if not self.r_min > 0:
            raise ValueError(f"demand {self.id}: r_min must be positive")
        if self.j_max is not None and self.j_max < 0:
            raise ValueError(f"demand {self.id}: j_max must be non-negative")


@dataclass(frozen=True)
class ProtocolOp:
    op_id: str
    kind: OpKind
    nodes: frozenset[str]
    consumes: frozenset[QubitRef]
    produces: frozenset[QubitRef]
    start: float
    end: float
    link_fidelity: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", OpKind(self.kind))
        object.__setattr__(self, "nodes", frozenset(self.nodes))
        object.__setattr__(self, "consumes", frozenset(self.consumes))
        object.__setattr__(self, "produces", frozenset(self.produces))

    @property
    def qubits(self) -> frozenset[QubitRef]:
        return self.consumes | self.produces


@dataclass(frozen=True)
class RepeaterProtocol:
    """A DAG of operations with a timing map and a qubit map.

    `ops` is stored in a topological order; `edges` are (producer, consumer)
    op-id pairs.
    """

    ops: tuple[ProtocolOp, ...]
    edges: frozenset[tuple[str, str]]
    t_slot: float = 10.0
    worst_case_fidelity: float | None = None
    success_probability: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))

    @cached_property
    def _by_id(self) -> dict[str, ProtocolOp]:
        return {op.op_id: op for op in self.ops}

    def op(self, op_id: str) -> ProtocolOp:
        return self._by_id[op_id]

    @property
    def latency(self) -> float:
        return protocol_latency(self)

    @property
    def latency_slots(self) -> int:
        return to_slots(self.latency, self.t_slot)

    def window(self, op: ProtocolOp | str) -> tuple[int, int]:
        """Slot offsets (start, end) of an op relative to the instance start."""
        if isinstance(op, str):
            op = self.op(op)
        return to_slots(op.start, self.t_slot), to_slots(op.end, self.t_slot)

    def children(self, op_id: str) -> list[str]:
        return sorted(a for a, b in self.edges if b == op_id)

    def parents(self, op_id: str) -> list[str]:
        return sorted(b for a, b in self.edges if a == op_id)

    def sinks(self) -> list[str]:
        has_out = {a for a, _ in self.edges}
        return [op.op_id for op in self.ops if op.op_id not in has_out]

    def qubits(self) -> frozenset[QubitRef]:
        return frozenset(q for op in self.ops for q in op.qubits)


def to_slots(ms: float, t_slot: float) -> int:
    """Convert a slot-aligned duration in ms to an integer slot count."""
    x = ms / t_slot
    n = round(x)
    if abs(x - n) > SLOT_TOL * max(1.0, abs(x)):
        raise ValueError(f"{ms} ms is not a multiple of the {t_slot} ms slot")
    return int(n)


def is_slot_aligned(ms: float, t_slot: float) -> bool:
    try:
        to_slots(ms, t_slot)
    except ValueError:
        return False
    return True


def protocol_latency(p: RepeaterProtocol) -> float:
    if not p.ops:
        raise ValueError("empty protocol has no latency")
    return max(op.end for op in p.ops)


@dataclass(frozen=True)
class Interval:
    """A slot range [start, end) during which `op_id` occupies a qubit."""

    start: int
    end: int
    op_id: str
    kind: str  # "exec" or "hold"


def qubit_usage(p: RepeaterProtocol) -> dict[QubitRef, list[Interval]]:
    """Per-qubit execution and hold intervals of one protocol instance.

    An op executes on its consumed qubits.  A produced qubit is held from the
    producer's end until the next op that consumes it, or until the end of
    the protocol when nothing does.
    """
    length = p.latency_slots
    users: dict[QubitRef, list[tuple[int, int, str]]] = defaultdict(list)
    for op in p.ops:
        s, e = p.window(op)
        for q in op.consumes:
            users[q].append((s, e, op.op_id))
    for lst in users.values():
        lst.sort()
    out: dict[QubitRef, list[Interval]] = defaultdict(list)
    for q, lst in users.items():
        out[q].extend(Interval(s, e, oid, "exec") for s, e, oid in lst)
    for op in p.ops:
        _, e = p.window(op)
        for q in op.produces:
            later = [s for s, _, oid in users.get(q, []) if s >= e and oid != op.op_id]
            until = min(later) if later else length
            if until > e:
                out[q].append(Interval(e, until, op.op_id, "hold"))
    for lst in out.values():
        lst.sort(key=lambda iv: (iv.start, iv.end, iv.op_id))
    return dict(out)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    context: Mapping = field(default_factory=dict)

    def __str__(self) -> str:
        return f"[{self.kind}] {self.message}"


def _find_cycle(op_ids: Iterable[str], edges: Iterable[tuple[str, str]]) -> list[str] | None:
    succ = defaultdict(list)
    for a, b in edges:
        succ[a].append(b)
    color = {o: 0 for o in op_ids}
    stack_path: list[str] = []

    def visit(u):
        color[u] = 1
        stack_path.append(u)
        for v in succ[u]:
            if color.get(v) == 1:
                return stack_path[stack_path.index(v):] + [v]
            if color.get(v) == 0:
                cyc = visit(v)
                if cyc:
                    return cyc
        color[u] = 2
        stack_path.pop()
        return None

    for o in sorted(color):
        if color[o] == 0:
            cyc = visit(o)
            if cyc:
                return cyc
    return None


def _descendants(edges, op_id) -> set[str]:
    succ = defaultdict(list)
    for a, b in edges:
        succ[a].append(b)
    seen, todo = set(), [op_id]
    while todo:
        for v in succ[todo.pop()]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return seen


def validate_protocol(p: RepeaterProtocol, t: Topology) -> list[Violation]:
    v: list[Violation] = []
    if not p.ops:
        return [Violation("empty", "protocol has no operations")]
    ids = [op.op_id for op in p.ops]
    if len(set(ids)) != len(ids):
        v.append(Violation("duplicate-id", "op ids are not unique"))
    idset = set(ids)
    for a, b in sorted(p.edges):
        if a not in idset or b not in idset:
            v.append(Violation("dangling-edge", f"edge {a}->{b} references an unknown op"))
    cyc = _find_cycle(idset, [(a, b) for a, b in p.edges if a in idset and b in idset])
    if cyc:
        v.append(Violation("cycle", "edges contain a cycle: " + " -> ".join(cyc), {"cycle": cyc}))

    incoming = {b for _, b in p.edges}
    aligned = True
    for op in p.ops:
        ctx = {"op": op.op_id}
        for name in ("start", "end"):
            if not is_slot_aligned(getattr(op, name), p.t_slot):
                aligned = False
                v.append(Violation("slot-alignment", f"{op.op_id}.{name}={getattr(op, name)} ms "
                                   f"is not a multiple of {p.t_slot} ms", ctx))
        if not op.start < op.end:
            v.append(Violation("window", f"{op.op_id}: start must precede end", ctx))
        if op.start < 0:
            v.append(Violation("window", f"{op.op_id}: negative start", ctx))
        is_source = op.op_id not in incoming
        if (op.kind is OpKind.LINK) != is_source:
            v.append(Violation("sources", f"{op.op_id}: link ops must be exactly the DAG sources", ctx))
        if op.kind is OpKind.LINK:
            if op.link_fidelity is None:
                v.append(Violation("link-fidelity", f"{op.op_id}: link op without fidelity", ctx))
            nodes = sorted(op.nodes)
            if len(nodes) != 2 or not t.has_link(*nodes):
                v.append(Violation("adjacency", f"{op.op_id}: link op nodes {nodes} are not adjacent", ctx))
        elif op.link_fidelity is not None:
            v.append(Violation("link-fidelity", f"{op.op_id}: only link ops carry a fidelity", ctx))
        if op.kind is OpKind.SWAP and op.produces:
            v.append(Violation("swap-output", f"{op.op_id}: swap must produce no qubits", ctx))
        for q in sorted(op.qubits):
            if q.node_id not in op.nodes:
                v.append(Violation("ownership", f"{op.op_id}: {q} is outside the op's nodes", ctx))
            elif not t.owns(q):
                v.append(Violation("ownership", f"{op.op_id}: {q} does not exist in the topology", ctx))

    for a, b in sorted(p.edges):
        if a in idset and b in idset and p.op(a).end > p.op(b).start + SLOT_TOL:
            v.append(Violation("precedence", f"{a} ends after its consumer {b} starts", {"edge": (a, b)}))

    if aligned and not cyc:
        for q, ivs in sorted(qubit_usage(p).items()):
            for i, x in enumerate(ivs):
                for y in ivs[i + 1:]:
                    if y.start < x.end and x.start < y.end:
                        v.append(Violation("qubit-conflict",
                                           f"{q}: {x.op_id} ({x.kind}) overlaps {y.op_id} ({y.kind})",
                                           {"qubit": q, "ops": (x.op_id, y.op_id)}))
            for x in ivs:
                if x.kind != "hold":
                    continue
                nxt = [y for y in ivs if y.kind == "exec" and y.start == x.end]
                for y in nxt:
                    if y.op_id not in _descendants(p.edges, x.op_id):
                        v.append(Violation("qubit-conflict",
                                           f"{q}: link held for {x.op_id} is consumed by unrelated {y.op_id}",
                                           {"qubit": q, "ops": (x.op_id, y.op_id)}))
    return v


@dataclass(frozen=True)
class NetworkSchedule:
    """A cyclic slot schedule of protocol instances.

    `entries` maps (demand_id, instance) to the instance start slot and
    `derived_op_slots` maps (demand_id, instance, op_id) to absolute slots.
    """

    t_slot: float
    length: int
    entries: Mapping[tuple[str, int], int] = field(default_factory=dict)
    derived_op_slots: Mapping[tuple[str, int, str], tuple[int, int]] = field(default_factory=dict)
    unscheduled: frozenset[tuple[str, int]] = frozenset()

    @classmethod
    def build(cls, t_slot: float, length: int, entries: Mapping[tuple[str, int], int],
              protocols: Mapping[str, RepeaterProtocol],
              unscheduled: Iterable[tuple[str, int]] = ()) -> "NetworkSchedule":
        derived = {}
        for (did, inst), start in sorted(entries.items()):
            p = protocols[did]
            for op in p.ops:
                s, e = p.window(op)
                derived[(did, inst, op.op_id)] = (start + s, start + e)
        return cls(t_slot, length, dict(sorted(entries.items())), derived, frozenset(unscheduled))

    def starts(self, demand_id: str) -> list[int]:
        return sorted(s for (d, _), s in self.entries.items() if d == demand_id)

    def instances(self, demand_id: str) -> list[int]:
        return sorted(i for (d, i) in self.entries if d == demand_id)


def ceil_slots(ms: float, t_slot: float) -> int:
    """Smallest slot count covering `ms`, robust to float noise."""
    return max(1, math.ceil(ms / t_slot - SLOT_TOL))
