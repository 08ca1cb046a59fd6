"""Monte-Carlo experiment harness: random demand batches, all schedulers, CSV."""

from __future__ import annotations

import csv
import io
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .io import load_topology
from .model import Demand, Topology
from .pipeline import SCHEDULERS, prepare, run_pipeline
from .protoselect import SelectionConfig

RATE_MENU = (12.5, 6.25, 3.125, 1.5625, 0.78125, 0.390625, 0.1953125)
SMALL_FIDELITIES = (0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9)
SURFNET_FIDELITIES = (0.98, 0.985, 0.99, 0.995, 0.997)

ROW_FIELDS = ["scheduler", "fidelity", "load", "repetition", "demand_id", "r_min",
              "achieved_rate", "jitter", "satisfied", "network_throughput"]
AGG_FIELDS = ["scheduler", "fidelity", "load", "repetitions", "mean_throughput",
              "std_throughput", "sem_throughput", "q10", "q25", "q50", "q75", "q90",
              "mean_jitter", "sem_jitter", "satisfied_fraction", "mean_offered",
              "mean_rejected"]


@dataclass(frozen=True)
class ExperimentConfig:
    topology_path: str = "symmetric"
    t_slot: float = 10.0
    fidelity_levels: tuple[float, ...] = (0.55,)
    rate_menu: tuple[float, ...] = RATE_MENU
    load_targets: tuple[float, ...] = (100.0,)
    repetitions: int = 10
    seed: int = 0
    schedulers: tuple[str, ...] = SCHEDULERS
    pivot: str = "midpoint"
    nesting_cap: int = 4
    attempt_multiplier: float = 1.0
    j_max: float | None = None
    workers: int = 1

    def selection(self) -> SelectionConfig:
        return SelectionConfig(t_slot=self.t_slot, pivot=self.pivot,
                               nesting_cap=self.nesting_cap,
                               attempt_multiplier=self.attempt_multiplier)


def generate_demands(end_nodes: Sequence[str], rate_menu: Sequence[float], load_target: float,
                     fidelity: float, rng: np.random.Generator,
                     j_max: float | None = None) -> list[Demand]:
    """Draw demands (uniform ordered end-node pair, uniform menu rate) until
    their summed rate reaches `load_target`."""
    nodes = sorted(end_nodes)
    if len(nodes) < 2:
        raise ValueError("need at least two end nodes")
    out: list[Demand] = []
    total = 0.0
    while total < load_target - 1e-12:
        i, j = rng.choice(len(nodes), size=2, replace=False)
        rate = float(rate_menu[int(rng.integers(len(rate_menu)))])
        out.append(Demand(f"d{len(out):04d}", nodes[int(i)], nodes[int(j)], fidelity, rate, j_max))
        total += rate
    return out


def repetition_rng(seed: int, repetition: int) -> np.random.Generator:
    return np.random.default_rng([seed, repetition])


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return x


# protocol selection is deterministic, so cells of one worker share results
_SELECTION_CACHE: dict[tuple, dict] = {}


def run_cell(cfg: ExperimentConfig, fidelity: float, load: float, rep: int,
             topology: Topology | None = None) -> list[dict]:
    """All scheduler rows of one (fidelity, load, repetition) cell."""
    t = topology or load_topology(cfg.topology_path)
    rng = repetition_rng(cfg.seed, rep)
    demands = generate_demands(t.end_nodes(), cfg.rate_menu, load, fidelity, rng, cfg.j_max)
    cache = _SELECTION_CACHE.setdefault((t, cfg.selection()), {})
    prepared = prepare(t, demands, cfg.selection(), cache)
    rows = []
    for name in cfg.schedulers:
        res = run_pipeline(t, demands, name, cfg.selection(), prepared=prepared)
        rep_ = res.report
        base = {"scheduler": name, "fidelity": fidelity, "load": load, "repetition": rep}
        for d, _ in prepared.pairs:
            m = rep_.per_demand[d.id]
            rows.append({**base, "demand_id": d.id, "r_min": d.r_min,
                         "achieved_rate": m.achieved_rate, "jitter": m.jitter,
                         "satisfied": m.satisfied,
                         "network_throughput": rep_.network_throughput})
        jits = [m.jitter for m in rep_.per_demand.values() if m.jitter is not None]
        rows.append({**base, "demand_id": "ALL",
                     "r_min": sum(d.r_min for d, _ in prepared.pairs),
                     "achieved_rate": rep_.network_throughput,
                     "jitter": statistics.fmean(jits) if jits else None,
                     "satisfied": all(m.satisfied for m in rep_.per_demand.values()),
                     "network_throughput": rep_.network_throughput,
                     "_rejected": len(prepared.rejected)})
    return rows


def _cell_job(args):
    cfg, fidelity, load, rep = args
    return run_cell(cfg, fidelity, load, rep)


@dataclass
class ExperimentResult:
    rows: list[dict] = field(default_factory=list)

    def summary_rows(self) -> list[dict]:
        return [r for r in self.rows if r["demand_id"] == "ALL"]

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=ROW_FIELDS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r[k]) for k in ROW_FIELDS})
        return buf.getvalue()

    def aggregate(self) -> list[dict]:
        cells: dict[tuple, list[dict]] = {}
        for r in self.summary_rows():
            cells.setdefault((r["scheduler"], r["fidelity"], r["load"]), []).append(r)
        out = []
        for (sched, fid, load), rs in cells.items():
            thr = np.array([r["network_throughput"] for r in rs], dtype=float)
            jit = np.array([r["jitter"] for r in rs if r["jitter"] is not None], dtype=float)
            n = len(thr)
            q = np.quantile(thr, [0.1, 0.25, 0.5, 0.75, 0.9])
            out.append({
                "scheduler": sched, "fidelity": fid, "load": load, "repetitions": n,
                "mean_throughput": float(thr.mean()),
                "std_throughput": float(thr.std(ddof=1)) if n > 1 else 0.0,
                "sem_throughput": float(thr.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
                "q10": float(q[0]), "q25": float(q[1]), "q50": float(q[2]),
                "q75": float(q[3]), "q90": float(q[4]),
                "mean_jitter": float(jit.mean()) if len(jit) else None,
                "sem_jitter": float(jit.std(ddof=1) / np.sqrt(len(jit))) if len(jit) > 1 else 0.0,
                "satisfied_fraction": float(np.mean([r["satisfied"] for r in rs])),
                "mean_offered": float(np.mean([r["r_min"] for r in rs])),
                "mean_rejected": float(np.mean([r["_rejected"] for r in rs])),
            })
        return out

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=AGG_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.aggregate():
            w.writerow({k: _fmt(r[k]) for k in AGG_FIELDS})
        return buf.getvalue()


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Every (fidelity, load, repetition) cell for every scheduler.

    Each repetition draws its demands from a stream seeded by (seed,
    repetition), so results do not depend on the worker count.
    """
    jobs = [(cfg, f, l, r) for f in cfg.fidelity_levels for l in cfg.load_targets
            for r in range(cfg.repetitions)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_cell_job, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    else:
        t = load_topology(cfg.topology_path)
        parts = [run_cell(c, f, l, r, t) for c, f, l, r in jobs]
    rows = [row for part in parts for row in part]
    return ExperimentResult(rows)


def write_csv(text: str, path: str | Path) -> None:
    Path(path).write_text(text)


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
