"""JSON formats for topologies, demands, protocols and schedules."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

from .model import (Demand, LinkSpec, NetworkSchedule, NodeSpec, OpKind, ProtocolOp, QubitKind,
                    QubitRef, RepeaterProtocol, Topology)

_NODE_DEFAULTS = NodeSpec("_")


def topology_to_dict(t: Topology) -> dict:
    return {
        "nodes": [{"id": n.node_id, "num_comm": n.num_comm, "num_storage": n.num_storage,
                   "swap_latency_ms": n.swap_latency, "distill_latency_ms": n.distill_latency,
                   "move_latency_ms": n.move_latency, "end_node": n.is_end_node}
                  for n in t.nodes],
        "links": [{"endpoints": list(l.endpoints), "length_km": l.length,
                   "capabilities": [list(c) for c in l.capabilities]} for l in t.links],
    }


def topology_from_dict(data: dict) -> Topology:
    defaults = data.get("node_defaults", {})
    nodes = []
    for raw in data["nodes"]:
        n = {**defaults, **raw}
        nodes.append(NodeSpec(
            node_id=n["id"],
            num_comm=n.get("num_comm", _NODE_DEFAULTS.num_comm),
            num_storage=n.get("num_storage", _NODE_DEFAULTS.num_storage),
            swap_latency=n.get("swap_latency_ms", _NODE_DEFAULTS.swap_latency),
            distill_latency=n.get("distill_latency_ms", _NODE_DEFAULTS.distill_latency),
            move_latency=n.get("move_latency_ms", _NODE_DEFAULTS.move_latency),
            is_end_node=bool(n.get("end_node", False))))
    shared_caps = data.get("link_capabilities")
    links = []
    for raw in data["links"]:
        caps = raw.get("capabilities", shared_caps)
        links.append(LinkSpec(tuple(raw["endpoints"]), float(raw.get("length_km", 0.0)),
                              tuple(tuple(c) for c in caps)))
    return Topology(tuple(nodes), tuple(links))


def load_topology(path: str | Path) -> Topology:
    """Load a topology file.  A bare name like ``symmetric`` picks a bundled file."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and p.parent == Path("."):
        text = resources.files("qtdma").joinpath("data").joinpath(f"{p.name}.json").read_text()
    else:
        text = p.read_text()
    return topology_from_dict(json.loads(text))


def bundled_topologies() -> list[str]:
    return sorted(f.name[:-5] for f in resources.files("qtdma").joinpath("data").iterdir()
                  if f.name.endswith(".json"))


def demand_to_dict(d: Demand) -> dict:
    out = {"id": d.id, "src": d.src, "dst": d.dst, "f_min": d.f_min, "r_min_ebit_s": d.r_min}
    if d.j_max is not None:
        out["j_max_s2"] = d.j_max
    return out


def demand_from_dict(raw: dict) -> Demand:
    return Demand(str(raw["id"]), raw["src"], raw["dst"], float(raw["f_min"]),
                  float(raw["r_min_ebit_s"]),
                  None if raw.get("j_max_s2") is None else float(raw["j_max_s2"]))


def load_demands(path: str | Path) -> list[Demand]:
    return [demand_from_dict(r) for r in json.loads(Path(path).read_text())]


def dump_demands(demands: Iterable[Demand], path: str | Path) -> None:
    Path(path).write_text(json.dumps([demand_to_dict(d) for d in demands], indent=2) + "\n")


def _q(q: QubitRef) -> list:
    return [q.node_id, q.kind.value, q.index]


def _unq(raw) -> QubitRef:
    node, kind, index = raw
    return QubitRef(node, int(index), QubitKind(kind))


def protocol_to_dict(p: RepeaterProtocol) -> dict:
    ops = []
    for op in p.ops:
        s, e = p.window(op)
        ops.append({"id": op.op_id, "kind": op.kind.value, "nodes": sorted(op.nodes),
                    "link_fidelity": op.link_fidelity, "start_slot": s, "end_slot": e,
                    "consumes": [_q(q) for q in sorted(op.consumes)],
                    "produces": [_q(q) for q in sorted(op.produces)]})
    return {"t_slot_ms": p.t_slot, "worst_case_fidelity": p.worst_case_fidelity,
            "success_probability": p.success_probability, "ops": ops,
            "edges": sorted(list(e) for e in p.edges)}


def protocol_from_dict(raw: dict) -> RepeaterProtocol:
    t_slot = float(raw["t_slot_ms"])
    ops = tuple(ProtocolOp(op_id=o["id"], kind=OpKind(o["kind"]), nodes=frozenset(o["nodes"]),
                           consumes=frozenset(_unq(q) for q in o["consumes"]),
                           produces=frozenset(_unq(q) for q in o["produces"]),
                           start=o["start_slot"] * t_slot, end=o["end_slot"] * t_slot,
                           link_fidelity=o.get("link_fidelity"))
                for o in raw["ops"])
    return RepeaterProtocol(ops, frozenset(tuple(e) for e in raw["edges"]), t_slot,
                            raw.get("worst_case_fidelity"), raw.get("success_probability", 1.0))


def schedule_to_dict(s: NetworkSchedule) -> dict:
    return {"t_slot_ms": s.t_slot, "length": s.length,
            "entries": [[d, i, st] for (d, i), st in sorted(s.entries.items())],
            "op_slots": [[d, i, o, a, b] for (d, i, o), (a, b) in sorted(s.derived_op_slots.items())],
            "unscheduled": sorted([d, i] for d, i in s.unscheduled)}


def schedule_from_dict(raw: dict) -> NetworkSchedule:
    return NetworkSchedule(
        float(raw["t_slot_ms"]), int(raw["length"]),
        {(d, int(i)): int(st) for d, i, st in raw["entries"]},
        {(d, int(i), o): (int(a), int(b)) for d, i, o, a, b in raw["op_slots"]},
        frozenset((d, int(i)) for d, i in raw.get("unscheduled", [])))


def bundle_to_dict(demands, protocols: dict[str, RepeaterProtocol], schedule: NetworkSchedule,
                   **extra: Any) -> dict:
    return {"demands": [demand_to_dict(d) for d in demands],
            "protocols": {k: protocol_to_dict(v) for k, v in sorted(protocols.items())},
            "schedule": schedule_to_dict(schedule), **extra}


def bundle_from_dict(raw: dict):
    demands = [demand_from_dict(d) for d in raw["demands"]]
    protocols = {k: protocol_from_dict(v) for k, v in raw["protocols"].items()}
    return demands, protocols, schedule_from_dict(raw["schedule"])
