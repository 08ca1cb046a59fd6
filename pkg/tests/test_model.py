from dataclasses import replace

import pytest

from qtdma.model import (Demand, Interval, LinkSpec, NodeSpec, OpKind, ProtocolOp, QubitKind,
                         QubitRef, RepeaterProtocol, Topology, ceil_slots, protocol_latency,
                         qubit_usage, to_slots, validate_protocol)

A0 = QubitRef("A", 0, QubitKind.COMM)
B0 = QubitRef("B", 0, QubitKind.COMM)
BS = QubitRef("B", 0, QubitKind.STORAGE)
C0 = QubitRef("C", 0, QubitKind.COMM)


def printed_protocol() -> RepeaterProtocol:
    """Two elementary links and one swap with the printed time and qubit maps."""
    ops = [
        ProtocolOp("L1", OpKind.LINK, {"A", "B"}, {A0, B0, BS}, {A0, BS}, 0, 20, 0.9),
        ProtocolOp("L2", OpKind.LINK, {"B", "C"}, {B0, C0}, {B0, C0}, 20, 40, 0.9),
        ProtocolOp("S1", OpKind.SWAP, {"B"}, {B0, BS}, set(), 40, 50),
    ]
    return RepeaterProtocol(tuple(ops), {("L1", "S1"), ("L2", "S1")}, 10.0)


def test_qubit_str():
    assert str(BS) == "B-storage0"
    assert str(A0) == "A-comm0"


def test_link_validation():
    with pytest.raises(ValueError):
        LinkSpec(("A", "A"), 1.0, [(0.9, 10)])
    with pytest.raises(ValueError):
        LinkSpec(("A", "B"), 1.0, [(0.8, 10), (0.9, 20)])
    with pytest.raises(ValueError):
        LinkSpec(("A", "B"), 1.0, [(0.2, 10)])
    assert LinkSpec(("B", "A"), 1.0, [(0.9, 10)]).endpoints == ("A", "B")


def test_topology_rejects_bad_links():
    with pytest.raises(ValueError):
        Topology([NodeSpec("A")], [LinkSpec(("A", "B"), 1.0, [(0.9, 1)])])


def test_demand_validation():
    with pytest.raises(ValueError):
        Demand("d", "A", "A", 0.5, 1)
    with pytest.raises(ValueError):
        Demand("d", "A", "B", 0.2, 1)
    with pytest.raises(ValueError):
        Demand("d", "A", "B", 0.5, 0)


def test_printed_protocol_is_valid(line):
    p = printed_protocol()
    assert validate_protocol(p, line) == []
    assert protocol_latency(p) == 50
    assert p.latency_slots == 5


def test_selected_protocol_matches_printed(fig4):
    want = printed_protocol()
    assert fig4.ops == want.ops
    assert fig4.edges == want.edges


def test_latency_of_empty_protocol():
    with pytest.raises(ValueError):
        protocol_latency(RepeaterProtocol((), frozenset()))


def test_slot_conversion():
    assert to_slots(50.0, 10.0) == 5
    assert to_slots(0.3 * 100, 10.0) == 3
    with pytest.raises(ValueError):
        to_slots(15.0, 10.0)
    assert ceil_slots(20.961, 10.0) == 3
    assert ceil_slots(20.0, 10.0) == 2
    assert ceil_slots(0.5, 10.0) == 1


def test_qubit_usage_printed():
    u = qubit_usage(printed_protocol())
    assert u[BS] == [Interval(0, 2, "L1", "exec"), Interval(2, 4, "L1", "hold"),
                     Interval(4, 5, "S1", "exec")]
    assert u[A0] == [Interval(0, 2, "L1", "exec"), Interval(2, 5, "L1", "hold")]
    assert u[C0] == [Interval(2, 4, "L2", "exec"), Interval(4, 5, "L2", "hold")]


def _kinds(p, t):
    return {v.kind for v in validate_protocol(p, t)}


def test_validator_catches_mutations(line):
    p = printed_protocol()
    l1, l2, s1 = p.ops
    cases = {
        "slot-alignment": replace(p, ops=(replace(l1, end=15), l2, s1)),
        "precedence": replace(p, ops=(l1, l2, replace(s1, start=30, end=40))),
        "cycle": replace(p, edges=p.edges | {("S1", "L1")}),
        "dangling-edge": replace(p, edges=p.edges | {("X", "S1")}),
        "swap-output": replace(p, ops=(l1, l2, replace(s1, produces=frozenset({B0})))),
        "ownership": replace(p, ops=(l1, l2, replace(s1, consumes=frozenset({B0, C0})))),
        "adjacency": replace(p, ops=(replace(l1, nodes=frozenset({"A", "C"})), l2, s1)),
        "link-fidelity": replace(p, ops=(replace(l1, link_fidelity=None), l2, s1)),
        "qubit-conflict": replace(p, ops=(l1, replace(l2, start=10, end=30),
                                          replace(s1, start=30, end=40))),
        "duplicate-id": replace(p, ops=(l1, replace(l2, op_id="L1"), s1)),
        "window": replace(p, ops=(l1, l2, replace(s1, start=50, end=50))),
    }
    for kind, bad in cases.items():
        assert kind in _kinds(bad, line), kind


def test_validator_nonexistent_qubit(line):
    p = printed_protocol()
    l1, l2, s1 = p.ops
    ghost = QubitRef("B", 5, QubitKind.STORAGE)
    bad = replace(p, ops=(replace(l1, consumes=frozenset({A0, B0, ghost}),
                                  produces=frozenset({A0, ghost})), l2,
                          replace(s1, consumes=frozenset({B0, ghost}))))
    assert "ownership" in _kinds(bad, line)
