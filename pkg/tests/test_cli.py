import json

import pytest

from qtdma.cli import main
from qtdma.io import dump_demands
from qtdma.model import Demand


def test_schedule_and_validate(tmp_path, capsys):
    out = tmp_path / "run.json"
    assert main(["schedule", "--load", "10", "--scheduler", "pts-np-edf", "--out", str(out)]) == 0
    assert "network throughput" in capsys.readouterr().out
    assert main(["validate", str(out)]) == 0
    assert "valid:" in capsys.readouterr().out


def test_validate_flags_tampering(tmp_path, capsys):
    out = tmp_path / "run.json"
    main(["schedule", "--load", "5", "--rates", "1.5625", "0.78125", "--out", str(out)])
    raw = json.loads(out.read_text())
    raw["schedule"]["op_slots"][0][3] += 1
    out.write_text(json.dumps(raw))
    capsys.readouterr()
    assert main(["validate", str(out)]) == 1
    assert "violation" in capsys.readouterr().out


def test_schedule_from_demand_file(tmp_path, capsys):
    path = tmp_path / "d.json"
    dump_demands([Demand("x", "e0", "e2", 0.55, 1.5625)], path)
    assert main(["schedule", "--demands", str(path)]) == 0
    assert "x " in capsys.readouterr().out


def test_sweep_writes_csv(tmp_path):
    rows, agg = tmp_path / "rows.csv", tmp_path / "agg.csv"
    assert main(["sweep", "--load", "10", "--repetitions", "2", "--out", str(rows),
                 "--aggregate-out", str(agg)]) == 0
    assert rows.read_text().startswith("scheduler,fidelity,load,repetition,demand_id")
    assert len(agg.read_text().splitlines()) == 4


def test_oracle(capsys):
    assert main(["oracle", "--task", "5:6", "--task", "1:6"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["feasible"] and out["np_edf"] == {"t0": [0], "t1": [5]}


def test_bad_task_argument():
    with pytest.raises(SystemExit):
        main(["oracle", "--task", "5-6"])
