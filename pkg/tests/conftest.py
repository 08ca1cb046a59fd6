import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qtdma.model import Demand, LinkSpec, NodeSpec, Topology  # noqa: E402
from qtdma.protoselect import SelectionConfig, select_protocol  # noqa: E402


def line_topology() -> Topology:
    """A - B - C - D, one communication and one storage qubit per node.

    A-B and B-C generate in two 10 ms slots (including the move into
    storage); C-D generates in one slot.
    """
    nodes = [NodeSpec(n, num_comm=1, num_storage=1, is_end_node=n in "ACD") for n in "ABCD"]
    links = [LinkSpec(("A", "B"), 5.0, [(0.9, 55.0)]),
             LinkSpec(("B", "C"), 5.0, [(0.9, 55.0)]),
             LinkSpec(("C", "D"), 5.0, [(0.9, 100.0)])]
    return Topology(nodes, links)


def worked_pair(r_min: float):
    """The two demands of the worked example: A-C over two hops (latency 5
    slots) and C-D over one hop (latency 1 slot)."""
    t = line_topology()
    cfg = SelectionConfig(t_slot=10.0)
    d1 = Demand("P1", "A", "C", 0.6, r_min)
    d2 = Demand("P2", "C", "D", 0.6, r_min)
    return t, [(d1, select_protocol(t, d1, cfg)), (d2, select_protocol(t, d2, cfg))]


@pytest.fixture
def line():
    return line_topology()


@pytest.fixture
def fig4(line):
    d = Demand("P1", "A", "C", 0.6, 16.0)
    return select_protocol(line, d, SelectionConfig(t_slot=10.0))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[n])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
