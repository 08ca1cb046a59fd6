"""Activity-on-node scheduling over renewable qubit resources.

Each protocol instance becomes a fragment of activities tied rigidly to the
instance's dummy start, plus occupation activities that keep a qubit busy
while it stores a link.  Instances are windowed to their period and placed
by a slot-stepping serial scheduler with EDF priority.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from typing import Sequence

from .model import Demand, NetworkSchedule, QubitRef, RepeaterProtocol, qubit_usage
from .pts import HYPERPERIOD_CAP, hyperperiod, jitter_slack, to_task

GLOBAL_START = "j_s"
GLOBAL_END = "j_e"


@dataclass(frozen=True)
class Origin:
    demand_id: str | None = None
    instance: int | None = None
    role: str = "dummy"  # dummy-start | dummy-end | op | occupation | fpr | dummy
    op_id: str | None = None


@dataclass(frozen=True)
class Activity:
    act_id: str
    duration: int
    resources: frozenset[QubitRef] = frozenset()
    origin: Origin = Origin()

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError(f"{self.act_id}: negative duration")
        object.__setattr__(self, "resources", frozenset(self.resources))


@dataclass(frozen=True)
class TimeLag:
    """min_lag <= start(dst) - end(src) <= max_lag (None: unbounded)."""

    src: str
    dst: str
    min_lag: int
    max_lag: int | None = None

    def __post_init__(self):
        if self.max_lag is not None and self.max_lag < self.min_lag:
            raise ValueError(f"lag {self.src}->{self.dst}: max below min")

    @property
    def rigid(self) -> bool:
        return self.max_lag == self.min_lag


@dataclass
class ActivityNetwork:
    activities: dict[str, Activity] = field(default_factory=dict)
    lags: list[TimeLag] = field(default_factory=list)
    resources: frozenset[QubitRef] = frozenset()
    horizon: int = 0
    protocols: dict[str, RepeaterProtocol] = field(default_factory=dict)
    periods: dict[str, int] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)  # demand ids in input order

    def add(self, act: Activity) -> None:
        if act.act_id in self.activities:
            raise ValueError(f"duplicate activity {act.act_id}")
        self.activities[act.act_id] = act

    def lag(self, src: str, dst: str, lo: int, hi: int | None) -> None:
        self.lags.append(TimeLag(src, dst, lo, hi))

    def dump(self) -> dict:
        return {
            "horizon": self.horizon,
            "activities": [
                {"id": a.act_id, "duration": a.duration,
                 "resources": sorted(str(q) for q in a.resources),
                 "origin": [a.origin.demand_id, a.origin.instance, a.origin.role, a.origin.op_id]}
                for a in sorted(self.activities.values(), key=lambda a: a.act_id)],
            "lags": sorted([l.src, l.dst, l.min_lag, l.max_lag] for l in self.lags),
        }


def _fragment_ids(prefix: str):
    return f"{prefix}s", f"{prefix}e"


def build_aon(p: RepeaterProtocol, t_slot: float | None = None, prefix: str = "",
              demand_id: str | None = None, instance: int | None = None) -> ActivityNetwork:
    """Activity network of one protocol instance.

    Activities are the ops, dummies `<prefix>s`/`<prefix>e`, and one
    occupation per interval during which a qubit holds a link.  Ops sit at
    fixed offsets from the dummy start.
    """
    if t_slot is not None and abs(t_slot - p.t_slot) > 1e-12:
        p = replace(p, t_slot=t_slot)
    net = ActivityNetwork(protocols={demand_id: p} if demand_id else {})
    js, je = _fragment_ids(prefix)
    length = p.latency_slots
    net.add(Activity(js, 0, origin=Origin(demand_id, instance, "dummy-start")))
    net.add(Activity(je, 0, origin=Origin(demand_id, instance, "dummy-end")))
    for op in p.ops:
        s, e = p.window(op)
        aid = prefix + op.op_id
        net.add(Activity(aid, e - s, op.consumes, Origin(demand_id, instance, "op", op.op_id)))
        net.lag(js, aid, s, s)
        if e == length:
            net.lag(aid, je, 0, 0)
    count = 0
    for q, ivs in sorted(qubit_usage(p).items()):
        for iv in ivs:
            if iv.kind != "hold":
                continue
            count += 1
            oid = f"{prefix}occ{count}:{q}"
            net.add(Activity(oid, iv.end - iv.start, {q},
                             Origin(demand_id, instance, "occupation", iv.op_id)))
            net.lag(prefix + iv.op_id, oid, 0, 0)
            nxt = [x for x in ivs if x.kind == "exec" and x.start == iv.end]
            if nxt:
                net.lag(oid, prefix + nxt[0].op_id, 0, 0)
            else:
                net.lag(oid, je, 0, 0)
    net.resources = p.qubits()
    net.horizon = length
    return net


def condense_fpr(frag: ActivityNetwork, prefix: str = "") -> ActivityNetwork:
    """Replace a fragment with one activity reserving all of its qubits for the
    whole protocol latency."""
    js, je = _fragment_ids(prefix)
    start = frag.activities[js]
    qubits = frozenset(q for a in frag.activities.values() for q in a.resources)
    net = ActivityNetwork(protocols=dict(frag.protocols), resources=frag.resources,
                          horizon=frag.horizon)
    net.add(start)
    net.add(Activity(prefix + "fpr", frag.horizon, qubits,
                     Origin(start.origin.demand_id, start.origin.instance, "fpr")))
    net.add(frag.activities[je])
    net.lag(js, prefix + "fpr", 0, 0)
    net.lag(prefix + "fpr", je, 0, 0)
    return net


def _instantiate(template: ActivityNetwork, prefix: str, instance: int) -> ActivityNetwork:
    """Copy of an unprefixed fragment with ids prefixed and the instance set."""
    out = ActivityNetwork(resources=template.resources, horizon=template.horizon)
    for a in template.activities.values():
        out.add(Activity(prefix + a.act_id, a.duration, a.resources,
                         replace(a.origin, instance=instance)))
    out.lags = [TimeLag(prefix + l.src, prefix + l.dst, l.min_lag, l.max_lag)
                for l in template.lags]
    return out


def _merge_into(net: ActivityNetwork, frag: ActivityNetwork) -> None:
    for a in frag.activities.values():
        net.add(a)
    net.lags.extend(frag.lags)


def build_full_aon(pairs: Sequence[tuple[Demand, RepeaterProtocol]], t_slot: float = 10.0,
                   fpr: bool = False, cap: int = HYPERPERIOD_CAP) -> ActivityNetwork:
    """Network of all instances of all pairs over one hyperperiod.

    Instance l of a demand with period T must start at or after l*T and end
    by (l+1)*T.
    """
    net = ActivityNetwork()
    net.add(Activity(GLOBAL_START, 0))
    net.add(Activity(GLOBAL_END, 0))
    if not pairs:
        return net
    tasks = [to_task(d, p, t_slot) for d, p in pairs]
    h = hyperperiod(tasks, cap)
    net.horizon = h
    resources = set()
    for (d, p), task in zip(pairs, tasks):
        net.protocols[d.id] = p
        net.periods[d.id] = task.period
        net.order.append(d.id)
        resources |= p.qubits()
        template = build_aon(p, t_slot, "", d.id, 0)
        if fpr:
            template = condense_fpr(template)
        for l in range(h // task.period):
            prefix = f"{d.id}#{l}:"
            _merge_into(net, _instantiate(template, prefix, l))
            js, je = _fragment_ids(prefix)
            net.lag(GLOBAL_START, js, l * task.period, (l + 1) * task.period - task.wcet)
            net.lag(je, GLOBAL_END, 0, None)
    net.resources = frozenset(resources)
    return net


def add_jitter_lags(net: ActivityNetwork, demands: Sequence[Demand]) -> ActivityNetwork:
    """Constrain consecutive instance starts of each demand with a jitter bound
    to lie T - lam .. T + lam apart, including the wrap to the next cycle."""
    t_slot = None
    for p in net.protocols.values():
        t_slot = p.t_slot
        break
    for d in demands:
        if d.j_max is None or d.id not in net.periods:
            continue
        period = net.periods[d.id]
        lam = jitter_slack(d.j_max, t_slot)
        n = net.horizon // period
        starts = [_fragment_ids(f"{d.id}#{l}:")[0] for l in range(n)]
        for a, b in zip(starts, starts[1:]):
            net.lag(a, b, period - lam, period + lam)
        if n > 1:
            net.lag(starts[-1], starts[0], period - lam - net.horizon, period + lam - net.horizon)
    return net


@dataclass
class _Group:
    key: tuple[str, int]
    members: dict[str, int]  # act_id -> offset from group start
    span: int
    est: int
    lst: int
    rank: tuple


def _groups(net: ActivityNetwork) -> list[_Group]:
    by_inst: dict[tuple, list[str]] = defaultdict(list)
    for a in net.activities.values():
        if a.origin.demand_id is not None:
            by_inst[(a.origin.demand_id, a.origin.instance)].append(a.act_id)
    rigid = defaultdict(list)
    for l in net.lags:
        if l.rigid:
            rigid[l.src].append((l.dst, l.min_lag, True))
            rigid[l.dst].append((l.src, l.min_lag, False))
    from_start: dict[str, list[TimeLag]] = defaultdict(list)
    to_end: dict[str, list[TimeLag]] = defaultdict(list)
    for l in net.lags:
        if l.src == GLOBAL_START:
            from_start[l.dst].append(l)
        if l.dst == GLOBAL_END:
            to_end[l.src].append(l)
    order = {d: i for i, d in enumerate(net.order)}
    groups = []
    for key, ids in by_inst.items():
        anchor = _fragment_ids(f"{key[0]}#{key[1]}:")[0]
        if anchor not in net.activities:
            anchor = min(ids)
        own = set(ids)
        off = {anchor: 0}
        todo = deque([anchor])
        while todo:
            u = todo.popleft()
            du = net.activities[u].duration
            for v, lag, forward in rigid[u]:
                # rigid lags to other instances (zero jitter slack) are checked at placement
                if v in off or v not in own:
                    continue
                if forward:
                    off[v] = off[u] + du + lag
                else:
                    off[v] = off[u] - lag - net.activities[v].duration
                todo.append(v)
        missing = set(ids) - set(off)
        if missing:
            raise ValueError(f"instance {key}: activities {sorted(missing)} are not rigidly tied")
        base = min(off.values())
        off = {a: o - base for a, o in off.items()}
        span = max(o + net.activities[a].duration for a, o in off.items())
        est, lst = 0, net.horizon - span
        for a in off:
            for l in from_start.get(a, ()):
                est = max(est, l.min_lag - off[a])
                if l.max_lag is not None:
                    lst = min(lst, l.max_lag - off[a])
            for l in to_end.get(a, ()):
                end = off[a] + net.activities[a].duration
                lst = min(lst, net.horizon - l.min_lag - end)
                if l.max_lag is not None:
                    est = max(est, net.horizon - l.max_lag - end)
        rank = (lst + span, order.get(key[0], len(order)), key[0], key[1])
        groups.append(_Group(key, off, span, est, lst, rank))
    groups.sort(key=lambda g: g.rank)
    return groups


@dataclass
class AonResult:
    schedule: NetworkSchedule
    act_starts: dict[str, int]
    withdrawn: set[tuple[str, int]]


def schedule_aon(net: ActivityNetwork, t_slot: float | None = None) -> AonResult:
    """Serial slot-stepping scheduler with EDF priority over instances.

    At every slot, open instances are tried in order of deadline (then demand
    order and instance index); an instance is placed when all its qubits are
    free for every activity and all time lags to placed activities hold.  An
    instance whose window closes unplaced is withdrawn and lags through its
    dummy activities are composed so they still bind its neighbors.
    """
    if t_slot is None:
        t_slot = next(iter(net.protocols.values())).t_slot if net.protocols else 10.0
    h = net.horizon
    placed: dict[str, int] = {}
    if GLOBAL_START in net.activities:
        placed[GLOBAL_START] = 0
    if GLOBAL_END in net.activities:
        placed[GLOBAL_END] = h
    groups = _groups(net)
    member_of = {a: g.key for g in groups for a in g.members}
    lags_in: dict[str, list[TimeLag]] = defaultdict(list)
    lags_out: dict[str, list[TimeLag]] = defaultdict(list)
    for l in net.lags:
        lags_in[l.dst].append(l)
        lags_out[l.src].append(l)
    busy: dict[QubitRef, int] = defaultdict(int)
    entries: dict[tuple[str, int], int] = {}
    withdrawn: set[tuple[str, int]] = set()
    open_groups = list(groups)
    dur = {a: act.duration for a, act in net.activities.items()}

    def lags_ok(g: _Group, t: int) -> bool:
        for a, off in g.members.items():
            s = t + off
            for l in lags_in[a]:
                if l.src in g.members or l.src not in placed or l.src == GLOBAL_START:
                    continue
                gap = s - (placed[l.src] + dur[l.src])
                if gap < l.min_lag or (l.max_lag is not None and gap > l.max_lag):
                    return False
            for l in lags_out[a]:
                if l.dst in g.members or l.dst not in placed or l.dst == GLOBAL_END:
                    continue
                gap = placed[l.dst] - (s + dur[a])
                if gap < l.min_lag or (l.max_lag is not None and gap > l.max_lag):
                    return False
        return True

    base_masks: dict[tuple[str, int], list[tuple[QubitRef, int]]] = {}
    for g in groups:
        need: dict[QubitRef, int] = defaultdict(int)
        for a, off in g.members.items():
            d = dur[a]
            if d == 0:
                continue
            for q in net.activities[a].resources:
                need[q] |= ((1 << d) - 1) << off
        base_masks[g.key] = sorted(need.items())

    def mask(g: _Group, t: int) -> list[tuple[QubitRef, int]]:
        return [(q, bits << t) for q, bits in base_masks[g.key]]

    def withdraw(g: _Group) -> None:
        withdrawn.add(g.key)
        for w in g.members:
            if dur[w] != 0:
                continue
            ins = [l for l in lags_in[w] if l.src not in g.members]
            outs = [l for l in lags_out[w] if l.dst not in g.members]
            for a in ins:
                for b in outs:
                    if a.src in (GLOBAL_START,) or b.dst in (GLOBAL_END,):
                        continue
                    hi = None if a.max_lag is None or b.max_lag is None else a.max_lag + b.max_lag
                    new = TimeLag(a.src, b.dst, a.min_lag + b.min_lag, hi)
                    lags_out[a.src].append(new)
                    lags_in[b.dst].append(new)
        for w in g.members:
            for l in lags_in.pop(w, []):
                if l.src in lags_out:
                    lags_out[l.src] = [x for x in lags_out[l.src] if x is not l]
            for l in lags_out.pop(w, []):
                if l.dst in lags_in:
                    lags_in[l.dst] = [x for x in lags_in[l.dst] if x is not l]

    # groups join the active list, kept in priority order, at their earliest start
    waiting = sorted(open_groups, key=lambda g: (g.est, g.rank))
    open_groups = []
    nxt = 0
    for t in range(h):
        if nxt < len(waiting) and waiting[nxt].est <= t:
            while nxt < len(waiting) and waiting[nxt].est <= t:
                open_groups.append(waiting[nxt])
                nxt += 1
            open_groups.sort(key=lambda g: g.rank)
        still = []
        for g in open_groups:
            if t > g.lst:
                withdraw(g)
                continue
            need = mask(g, t)
            if all(not (busy[q] & bits) for q, bits in need) and lags_ok(g, t):
                for q, bits in need:
                    busy[q] |= bits
                for a, off in g.members.items():
                    placed[a] = t + off
                start_id = _fragment_ids(f"{g.key[0]}#{g.key[1]}:")[0]
                entries[g.key] = placed.get(start_id, t)
                continue
            if t == g.lst:
                withdraw(g)
                continue
            still.append(g)
        open_groups = still
    for g in open_groups + waiting[nxt:]:
        withdraw(g)
    sched = NetworkSchedule.build(t_slot, max(h, 1), entries, net.protocols, withdrawn)
    return AonResult(sched, placed, withdrawn)


def schedule_rcpsp(pairs: Sequence[tuple[Demand, RepeaterProtocol]], t_slot: float = 10.0,
                   fpr: bool = False, jitter: bool = False,
                   cap: int = HYPERPERIOD_CAP) -> AonResult:
    net = build_full_aon(pairs, t_slot, fpr, cap)
    if jitter:
        add_jitter_lags(net, [d for d, _ in pairs])
    return schedule_aon(net, t_slot)
