"""Per-vehicle decisions: decoding, constraint checks and the exhaustive oracle.

A :class:`Decision` is laid out like the agent action vector::

    [hold, vec, tau_1..tau_K,            # offload flags; tau_k (own index) = local
     b_vec, b_local, b_1..b_K,           # compute fractions (b_j: share of vehicle j's CPU)
     z_up[N1], z_down[N2],               # V2I channel bits
     zc_up[K][N3], zc_down[K][N4]]       # V2V channel bits, one row per peer

Fractions and channel bits are requester-side: vehicle ``k`` asks for a share
of the resource it offloads to.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import cost
from ._kernels import search_joint
from .channel import link_capacity
from .config import POOLS
from .scenario import Task, TaskType

TOL = 1e-9
DEFAULT_GRID = (0.0, 0.5, 1.0)


class ContractViolation(ValueError):
    pass


class EnumerationTooLarge(ValueError):
    pass


def action_dim(K: int, pools: dict) -> int:
    return 2 + K + 2 + K + pools["v2i_up"] + pools["v2i_down"] + K * (pools["v2v_up"] + pools["v2v_down"])


@dataclass
class Decision:
    k: int
    K: int
    pools: dict
    hold: int = 0
    vec: int = 0
    local: int = 0
    v2v: np.ndarray = None
    frac_vec: float = 0.0
    frac_local: float = 0.0
    frac_v2v: np.ndarray = None
    z_up: np.ndarray = None
    z_down: np.ndarray = None
    zc_up: np.ndarray = None
    zc_down: np.ndarray = None

    def __post_init__(self):
        K, p = self.K, self.pools
        if self.v2v is None:
            self.v2v = np.zeros(K, dtype=np.int8)
        if self.frac_v2v is None:
            self.frac_v2v = np.zeros(K)
        if self.z_up is None:
            self.z_up = np.zeros(p["v2i_up"], dtype=np.int8)
        if self.z_down is None:
            self.z_down = np.zeros(p["v2i_down"], dtype=np.int8)
        if self.zc_up is None:
            self.zc_up = np.zeros((K, p["v2v_up"]), dtype=np.int8)
        if self.zc_down is None:
            self.zc_down = np.zeros((K, p["v2v_down"]), dtype=np.int8)

    # -- views -----------------------------------------------------------
    @property
    def pattern(self):
        """``(name, target)`` of the single selected pattern, or ``(None, -1)``."""
        if self.hold + self.vec + self.local + int(self.v2v.sum()) != 1:
            return None, -1
        if self.hold:
            return "hold", -1
        if self.vec:
            return "vec", -1
        if self.local:
            return "local", self.k
        return "v2v", int(np.argmax(self.v2v))

    def flags(self):
        return self.hold, self.vec, self.v2v, self.local

    def to_vector(self) -> np.ndarray:
        tau = self.v2v.astype(float).copy()
        tau[self.k] = self.local
        frac = self.frac_v2v.astype(float).copy()
        frac[self.k] = 0.0
        return np.concatenate([
            [self.hold, self.vec], tau,
            [self.frac_vec, self.frac_local], frac,
            self.z_up, self.z_down, self.zc_up.ravel(), self.zc_down.ravel(),
        ]).astype(float)

    def lex_key(self) -> tuple:
        return tuple(self.to_vector().tolist())

    def copy(self) -> "Decision":
        return Decision(self.k, self.K, self.pools, self.hold, self.vec, self.local,
                        self.v2v.copy(), self.frac_vec, self.frac_local, self.frac_v2v.copy(),
                        self.z_up.copy(), self.z_down.copy(), self.zc_up.copy(), self.zc_down.copy())

    def to_json(self) -> dict:
        name, target = self.pattern
        return {
            "vehicle": self.k, "pattern": name, "target": target,
            "hold": int(self.hold), "vec": int(self.vec), "local": int(self.local),
            "v2v": self.v2v.astype(int).tolist(),
            "frac_vec": float(self.frac_vec), "frac_local": float(self.frac_local),
            "frac_v2v": self.frac_v2v.astype(float).tolist(),
            "z_up": self.z_up.astype(int).tolist(), "z_down": self.z_down.astype(int).tolist(),
            "zc_up": self.zc_up.astype(int).tolist(), "zc_down": self.zc_down.astype(int).tolist(),
        }

    @classmethod
    def from_json(cls, d: dict, K: int, pools: dict) -> "Decision":
        return cls(
            d["vehicle"], K, pools, d["hold"], d["vec"], d["local"],
            np.array(d["v2v"], dtype=np.int8), d["frac_vec"], d["frac_local"],
            np.array(d["frac_v2v"], dtype=float),
            np.array(d["z_up"], dtype=np.int8), np.array(d["z_down"], dtype=np.int8),
            np.array(d["zc_up"], dtype=np.int8).reshape(K, pools["v2v_up"]),
            np.array(d["zc_down"], dtype=np.int8).reshape(K, pools["v2v_down"]),
        )


def idle(k, K, pools) -> Decision:
    return Decision(k, K, pools)


def hold(k, K, pools) -> Decision:
    return Decision(k, K, pools, hold=1)


def make(k, K, pools, pattern, target=-1, fraction=0.0, up=(), down=()) -> Decision:
    """Build a single-pattern decision; ``up``/``down`` are channel indices."""
    d = Decision(k, K, pools)
    if pattern == "hold":
        d.hold = 1
    elif pattern == "local":
        d.local = 1
        d.frac_local = fraction
    elif pattern == "vec":
        d.vec = 1
        d.frac_vec = fraction
        d.z_up[list(up)] = 1
        d.z_down[list(down)] = 1
    elif pattern == "v2v":
        d.v2v[target] = 1
        d.frac_v2v[target] = fraction
        d.zc_up[target, list(up)] = 1
        d.zc_down[target, list(down)] = 1
    elif pattern is not None:
        raise ContractViolation(f"unknown pattern {pattern!r}")
    return d


def decode_action(raw, k: int, K: int, pools: dict, neighbors, task=None) -> Decision:
    """Map a raw actor output in [-1, 1]^action_dim to a :class:`Decision`.

    The offload choice is the argmax of the (hold, vec, tau_1..tau_K) block
    with non-neighbor peers excluded and ties going to the lowest index. Only
    resources used by the chosen pattern are kept; downlink bits are kept
    only for tasks that download results. Without a task the decision is idle.
    """
    raw = np.asarray(raw, dtype=float)
    n = action_dim(K, pools)
    if raw.shape != (n,):
        raise ContractViolation(f"vehicle {k}: action has shape {raw.shape}, expected ({n},)")
    if task is None:
        return idle(k, K, pools)
    choice = raw[: 2 + K].copy()
    allowed = np.zeros(K, dtype=bool)
    allowed[list(neighbors)] = True
    allowed[k] = True  # own slot means local execution
    choice[2:][~allowed] = -np.inf
    pick = int(np.argmax(choice))
    fr = np.clip((raw[2 + K: 4 + 2 * K] + 1.0) / 2.0, 0.0, 1.0)
    o = 4 + 2 * K
    n1, n2, n3, n4 = (pools[p] for p in POOLS)
    bits = (raw[o:] > 0).astype(np.int8)
    z_up, z_down = bits[:n1], bits[n1:n1 + n2]
    zc_up = bits[n1 + n2: n1 + n2 + K * n3].reshape(K, n3)
    zc_down = bits[n1 + n2 + K * n3:].reshape(K, n4)
    downloads = task.task_type == TaskType.LPA and task.output_ratio > 0
    d = Decision(k, K, pools)
    if pick == 0:
        d.hold = 1
    elif pick == 1:
        d.vec = 1
        d.frac_vec = float(fr[0])
        d.z_up = z_up.copy()
        if downloads:
            d.z_down = z_down.copy()
    elif pick - 2 == k:
        d.local = 1
        d.frac_local = float(fr[1])
    else:
        j = pick - 2
        d.v2v[j] = 1
        d.frac_v2v[j] = float(fr[2 + j])
        d.zc_up[j] = zc_up[j]
        if downloads:
            d.zc_down[j] = zc_down[j]
    return d


# ---------------------------------------------------------------------------
# snapshot of everything needed to price a decision in one slot


@dataclass
class Snapshot:
    K: int
    pools: dict
    neighbors: list  # list of sets
    tasks: list  # Task | None per vehicle (head task awaiting a decision)
    ages: np.ndarray  # ms since generation, per vehicle
    speeds: np.ndarray
    cpus: np.ndarray
    rates: dict  # pool -> (K, N) or (K, K, N) bits/s
    vec_cpu: float
    prices: dict
    beta: tuple
    thresholds: tuple
    v_max: float
    hold_wait: float
    tti: float
    tx_power_v2i: float
    tx_power_v2v: float
    vec_occ: float = 0.0
    cpu_occ: np.ndarray = None
    chan_occ: dict = None  # pool -> bool array
    fraction_grid: tuple = DEFAULT_GRID
    v2v_energy_uses_density: bool = False
    positions: np.ndarray = None

    def __post_init__(self):
        if self.cpu_occ is None:
            self.cpu_occ = np.zeros(self.K)
        if self.chan_occ is None:
            self.chan_occ = {p: np.zeros(self.pools[p], dtype=bool) for p in POOLS}
        self.neighbors = [set(n) for n in self.neighbors]

    def neighbor_mask(self) -> np.ndarray:
        m = np.zeros((self.K, self.K), dtype=bool)
        for k, nb in enumerate(self.neighbors):
            m[k, list(nb)] = True
        return m

    def threshold(self, k: int) -> float:
        t = self.tasks[k]
        if t is None:
            return float("nan")
        return cost.delay_threshold(t.task_type, self.speeds[k], self.thresholds, self.v_max)

    # -- JSON ------------------------------------------------------------
    def to_json(self) -> dict:
        def task_json(t, age):
            if t is None:
                return None
            return {"type": TaskType(t.task_type).name, "size": t.size, "density": t.density,
                    "output_ratio": t.output_ratio, "energy_density": t.energy_density,
                    "age_ms": float(age)}

        return {
            "vehicles": [{"speed": float(s), "cpu": float(c)} for s, c in zip(self.speeds, self.cpus)],
            "neighbors": [sorted(int(x) for x in n) for n in self.neighbors],
            "tasks": [task_json(t, a) for t, a in zip(self.tasks, self.ages)],
            "rates": {p: np.asarray(self.rates[p]).tolist() for p in POOLS},
            "occupancy": {"vec": float(self.vec_occ), "cpu": np.asarray(self.cpu_occ).tolist(),
                          **{p: np.asarray(self.chan_occ[p]).astype(int).tolist() for p in POOLS}},
            "prices": dict(self.prices),
            "thresholds": list(self.thresholds),
            "params": {
                "vec_cpu": self.vec_cpu, "beta": list(self.beta), "v_max": self.v_max,
                "hold_wait": self.hold_wait, "tti": self.tti,
                "tx_power_v2i": self.tx_power_v2i, "tx_power_v2v": self.tx_power_v2v,
                "fraction_grid": list(self.fraction_grid),
                "v2v_energy_uses_density": self.v2v_energy_uses_density,
            },
        }

    @classmethod
    def from_json(cls, d: dict) -> "Snapshot":
        K = len(d["vehicles"])
        rates = {p: np.array(d["rates"][p], dtype=float) for p in POOLS}
        pools = {p: int(rates[p].shape[-1]) for p in POOLS}
        tasks, ages = [], []
        for k, t in enumerate(d["tasks"]):
            if t is None:
                tasks.append(None)
                ages.append(0.0)
                continue
            tasks.append(Task(id=k, owner=k, task_type=TaskType[t["type"]], size=t["size"],
                              density=t["density"], output_ratio=t["output_ratio"],
                              energy_density=t["energy_density"], generated_at=0))
            ages.append(t["age_ms"])
        occ = d["occupancy"]
        p = d["params"]
        return cls(
            K=K, pools=pools, neighbors=[set(n) for n in d["neighbors"]], tasks=tasks,
            ages=np.array(ages, dtype=float),
            speeds=np.array([v["speed"] for v in d["vehicles"]], dtype=float),
            cpus=np.array([v["cpu"] for v in d["vehicles"]], dtype=float),
            rates=rates, vec_cpu=p["vec_cpu"], prices=d["prices"], beta=tuple(p["beta"]),
            thresholds=tuple(d["thresholds"]), v_max=p["v_max"], hold_wait=p["hold_wait"],
            tti=p["tti"], tx_power_v2i=p["tx_power_v2i"], tx_power_v2v=p["tx_power_v2v"],
            vec_occ=occ["vec"], cpu_occ=np.array(occ["cpu"], dtype=float),
            chan_occ={q: np.array(occ[q], dtype=bool) for q in POOLS},
            fraction_grid=tuple(p["fraction_grid"]),
            v2v_energy_uses_density=p.get("v2v_energy_uses_density", False),
        )


# ---------------------------------------------------------------------------
# pricing


@dataclass
class Assessment:
    """Predicted outcome of one vehicle's decision in the current slot."""

    pattern: str | None
    target: int
    delay: float  # ms, generation to completion (inf if the allocation cannot run)
    threshold: float
    energy: float
    phases: tuple | None
    alloc: cost.ComputeAllocation | None = None


def allocation(snap: Snapshot, d: Decision) -> cost.ComputeAllocation | None:
    name, target = d.pattern
    k = d.k
    r = snap.rates
    if name == "vec":
        return cost.ComputeAllocation("vec", d.frac_vec, snap.vec_cpu,
                                      link_capacity(d.z_up, r["v2i_up"][k]),
                                      link_capacity(d.z_down, r["v2i_down"][k]))
    if name == "v2v":
        return cost.ComputeAllocation("v2v", float(d.frac_v2v[target]), snap.cpus[target],
                                      link_capacity(d.zc_up[target], r["v2v_up"][k, target]),
                                      link_capacity(d.zc_down[target], r["v2v_down"][k, target]))
    if name == "local":
        return cost.ComputeAllocation("local", d.frac_local, snap.cpus[k])
    return None


def assess(snap: Snapshot, d: Decision) -> Assessment:
    k = d.k
    task = snap.tasks[k]
    name, target = d.pattern
    if task is None:
        return Assessment(None, -1, float("nan"), float("nan"), 0.0, None)
    thr = snap.threshold(k)
    age = float(snap.ages[k])
    if name == "hold":
        return Assessment("hold", -1, age + snap.hold_wait, thr, 0.0, None)
    alloc = allocation(snap, d)
    if alloc is None:
        return Assessment(name, target, float("inf"), thr, 0.0, None)
    try:
        total, phases = cost.completion_time(task, alloc, snap.tti)
    except cost.InfeasibleAllocation:
        return Assessment(name, target, float("inf"), thr, 0.0, None, alloc)
    power = snap.tx_power_v2i if name == "vec" else snap.tx_power_v2v
    energy = cost.offload_energy(task, alloc, power, snap.v2v_energy_uses_density)
    return Assessment(name, target, age + total * snap.tti, thr, energy, phases, alloc)


def joint_accounts(snap: Snapshot, decisions, assessments=None):
    """Per-vehicle revenue, energy and utility plus the fleet totals.

    Only decisions that will actually execute (finite delay) pay or earn.
    """
    if assessments is None:
        assessments = [assess(snap, d) for d in decisions]
    choices, sizes, energies = [], [], []
    for d, a in zip(decisions, assessments):
        t = snap.tasks[d.k]
        runs = a.pattern in ("vec", "v2v", "local") and np.isfinite(a.delay)
        choices.append((a.pattern, a.target) if runs else (None, -1))
        sizes.append(0.0 if t is None else t.size)
        energies.append(a.energy if runs else 0.0)
    revenues = [cost.vehicle_revenue(k, choices, sizes, snap.prices) for k in range(snap.K)]
    utils = [cost.vehicle_utility(r, e, snap.beta) for r, e in zip(revenues, energies)]
    U, TR, E = cost.fleet_utility(revenues, energies, snap.beta)
    return {"revenue": revenues, "energy": energies, "utility": utils, "U": U, "TR": TR, "E": E}


# ---------------------------------------------------------------------------
# constraints

NAMES = ("c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8")


@dataclass
class ConstraintReport:
    """Constraint status of one vehicle.

    ``satisfied``/``magnitude`` state c1-c8 as written: c1 and c8 concern the
    vehicle's own task, c2 the load on its own CPU, and c3-c7 the cell-wide
    VEC and channel pools (identical on every vehicle's report). ``blame``
    charges each overload to the vehicles claiming the overloaded resource;
    the simulator commits and rewards on ``blame``.
    """

    magnitude: np.ndarray = field(default_factory=lambda: np.zeros(8))
    satisfied: np.ndarray = field(default_factory=lambda: np.ones(8, dtype=bool))
    blame: np.ndarray = field(default_factory=lambda: np.zeros(7))

    @property
    def feasible(self) -> bool:
        return bool(self.satisfied[:7].all())

    @property
    def deadline_met(self) -> bool:
        return bool(self.satisfied[7])

    @property
    def cleared(self) -> bool:
        """True when the vehicle is party to no c1-c7 violation."""
        return bool(np.all(self.blame == 0))

    def flags(self) -> tuple:
        return tuple(bool(x) for x in self.satisfied)


def _excess(load: float) -> float:
    e = load - 1.0
    return e if e > TOL else 0.0


def check_constraints(decisions, snap: Snapshot, delays=None, thresholds=None) -> list[ConstraintReport]:
    """Evaluate constraints c1-c8 for every vehicle.

    Loads include resources held by in-flight tasks (``snap`` occupancy) and
    only requests to neighbors count. Deadlines are certified only for a
    single executing pattern: held or undecided tasks never satisfy c8.
    Vehicles without a task satisfy c8 vacuously.
    """
    K = snap.K
    nb = snap.neighbor_mask()
    if delays is None or thresholds is None:
        a = [assess(snap, d) for d in decisions]
        delays = np.array([x.delay for x in a]) if delays is None else delays
        thresholds = np.array([x.threshold for x in a]) if thresholds is None else thresholds

    hold = np.array([d.hold for d in decisions], dtype=float)
    vec = np.array([d.vec for d in decisions], dtype=float)
    local = np.array([d.local for d in decisions], dtype=float)
    v2v = np.array([d.v2v for d in decisions], dtype=float) * nb
    fv = np.array([d.frac_vec for d in decisions], dtype=float)
    fl = np.array([d.frac_local for d in decisions], dtype=float)
    fc = np.array([d.frac_v2v for d in decisions], dtype=float) * nb
    mag = np.zeros((K, 8))
    blame = np.zeros((K, 7))

    flag_sum = hold + vec + local + v2v.sum(axis=1)
    mag[:, 0] = blame[:, 0] = np.maximum(flag_sum - 1.0, 0.0)

    # c2: CPU j carries in-flight load, its owner's local share and its
    # neighbors' requests, accumulated in vehicle order
    claims = fc.copy()
    claims[np.arange(K), np.arange(K)] = fl
    load = np.array(snap.cpu_occ, dtype=float)
    for k in range(K):
        load = load + claims[k]
    cpu_excess = np.array([_excess(x) for x in load])
    mag[:, 1] = cpu_excess
    blame[:, 1] = ((claims > 0) * cpu_excess[None, :]).sum(axis=1)

    vload = float(snap.vec_occ)
    for k in range(K):
        vload += fv[k]
    mag[:, 2] = _excess(vload)
    blame[:, 2] = (fv > 0) * _excess(vload)

    for col, pool, attr in ((3, "v2i_up", "z_up"), (4, "v2i_down", "z_down")):
        z = np.array([getattr(d, attr) for d in decisions], dtype=float)
        over = np.maximum(snap.chan_occ[pool].astype(float) + z.sum(axis=0) - 1.0, 0.0)
        mag[:, col] = over.sum()
        blame[:, col] = (z * over[None, :]).sum(axis=1)
    for col, pool, attr in ((5, "v2v_up", "zc_up"), (6, "v2v_down", "zc_down")):
        z = np.array([getattr(d, attr) for d in decisions], dtype=float) * nb[:, :, None]
        over = np.maximum(snap.chan_occ[pool].astype(float) + z.sum(axis=(0, 1)) - 1.0, 0.0)
        mag[:, col] = over.sum()
        blame[:, col] = (z * over[None, None, :]).sum(axis=(1, 2))

    reports = []
    for k in range(K):
        r = ConstraintReport(blame=blame[k])
        r.magnitude[:7] = mag[k, :7]
        r.satisfied[:7] = mag[k, :7] == 0
        if snap.tasks[k] is not None:
            executing = flag_sum[k] == 1 and hold[k] == 0
            D, T = float(delays[k]), float(thresholds[k])
            over = D - T if np.isfinite(D) else float("inf")
            r.magnitude[7] = max(over, 0.0)
            r.satisfied[7] = bool(executing and over <= 0)
        reports.append(r)
    return reports


def joint_feasible(reports) -> bool:
    """True when every vehicle satisfies c1-c8."""
    return all(r.feasible and r.deadline_met for r in reports)


# ---------------------------------------------------------------------------
# exhaustive oracle


def _subsets(n: int):
    return [tuple(c) for c in itertools.product((0, 1), repeat=n)]


def vehicle_options(snap: Snapshot, k: int) -> list[Decision]:
    """Every quantized decision of vehicle ``k`` (hold excluded), lex-sorted.

    CA tasks only get local options, as in the simulator.
    """
    K, pools = snap.K, snap.pools
    task = snap.tasks[k]
    if task is None:
        return [idle(k, K, pools)]
    downloads = task.task_type == TaskType.LPA and task.output_ratio > 0
    grid = snap.fraction_grid
    out = []
    for b in grid:
        out.append(make(k, K, pools, "local", fraction=b))
    if task.task_type == TaskType.CA:
        # critical tasks always run on board
        return sorted(out, key=Decision.lex_key)
    up1 = _subsets(pools["v2i_up"])
    dn1 = _subsets(pools["v2i_down"]) if downloads else [(0,) * pools["v2i_down"]]
    for b in grid:
        for zu in up1:
            for zd in dn1:
                d = make(k, K, pools, "vec", fraction=b)
                d.z_up[:] = zu
                d.z_down[:] = zd
                out.append(d)
    up3 = _subsets(pools["v2v_up"])
    dn3 = _subsets(pools["v2v_down"]) if downloads else [(0,) * pools["v2v_down"]]
    for j in sorted(snap.neighbors[k]):
        for b in grid:
            for zu in up3:
                for zd in dn3:
                    d = make(k, K, pools, "v2v", target=j, fraction=b)
                    d.zc_up[j] = zu
                    d.zc_down[j] = zd
                    out.append(d)
    out.sort(key=Decision.lex_key)
    return out


def _bitmask(bits) -> int:
    m = 0
    for i, b in enumerate(np.asarray(bits).ravel()):
        if b:
            m |= 1 << i
    return m


def _option_table(snap: Snapshot, k: int, prune: bool):
    rows = []
    for d in vehicle_options(snap, k):
        a = assess(snap, d)
        if snap.tasks[k] is None:
            c8 = True
        else:
            c8 = bool(np.isfinite(a.delay) and a.delay <= a.threshold)
        name, target = d.pattern
        # fleet utility of this option alone; V2V payments net out across the fleet
        solo = [idle(j, snap.K, snap.pools) for j in range(snap.K)]
        solo[k] = d
        acct = joint_accounts(snap, solo)
        cpu_idx, cpu_frac = -1, 0.0
        if name == "local":
            cpu_idx, cpu_frac = k, d.frac_local
        elif name == "v2v":
            cpu_idx, cpu_frac = target, float(d.frac_v2v[target])
        masks = (_bitmask(d.z_up), _bitmask(d.z_down), _bitmask(d.zc_up.max(axis=0)),
                 _bitmask(d.zc_down.max(axis=0)))
        row = (d, acct["U"], c8, d.frac_vec, cpu_idx, cpu_frac, masks)
        if prune and not _alone_ok(snap, row):
            continue
        rows.append(row)
    return rows


def _alone_ok(snap: Snapshot, row) -> bool:
    d, _, c8, fv, ci, cf, masks = row
    if not c8:
        return False
    if fv and snap.vec_occ + fv - 1.0 > TOL:
        return False
    if ci >= 0 and snap.cpu_occ[ci] + cf - 1.0 > TOL:
        return False
    occ = [_bitmask(snap.chan_occ[p]) for p in POOLS]
    return all((m & o) == 0 for m, o in zip(masks, occ))


def enumeration_size(snap: Snapshot) -> int:
    """Joint decisions in the raw quantized space (hold included)."""
    n = 1
    for k in range(snap.K):
        extra = 0 if snap.tasks[k] is None else 1
        n *= len(vehicle_options(snap, k)) + extra
    return n


@dataclass
class OracleResult:
    decisions: list
    utility: float
    fallback: bool  # True when only the all-hold decision is feasible
    enumerated: int


def brute_force_best(snap: Snapshot, budget: int = 10**7, prune: bool = True,
                     use_numba: bool | None = None) -> OracleResult:
    """Exhaustive maximizer of fleet utility over quantized joint decisions.

    Feasible means c1-c8 for every vehicle that has a task. Ties go to the
    lexicographically smallest decision vector. When nothing is feasible
    every vehicle with a task holds.
    """
    size = enumeration_size(snap)
    if size > budget:
        raise EnumerationTooLarge(f"{size} joint decisions exceed the budget of {budget}")
    tables = [_option_table(snap, k, prune) for k in range(snap.K)]
    offsets = np.zeros(snap.K + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(t) for t in tables])
    rows = [r for t in tables for r in t]
    n = len(rows)
    util = np.array([r[1] for r in rows], dtype=float).reshape(n)
    c8ok = np.array([r[2] for r in rows], dtype=bool).reshape(n)
    vec = np.array([r[3] for r in rows], dtype=float).reshape(n)
    cpu_idx = np.array([r[4] for r in rows], dtype=np.int64).reshape(n)
    cpu_frac = np.array([r[5] for r in rows], dtype=float).reshape(n)
    masks = np.array([r[6] for r in rows], dtype=np.int64).reshape(n, 4)
    occ = np.array([_bitmask(snap.chan_occ[p]) for p in POOLS], dtype=np.int64)
    best, _, found = search_joint(offsets, util, c8ok, vec, cpu_idx, cpu_frac, masks,
                                  float(snap.vec_occ), np.asarray(snap.cpu_occ, dtype=float),
                                  occ, TOL, use_numba=use_numba)
    if not found:
        decisions = [hold(k, snap.K, snap.pools) if snap.tasks[k] is not None
                     else idle(k, snap.K, snap.pools) for k in range(snap.K)]
        return OracleResult(decisions, 0.0, True, size)
    decisions = [tables[k][int(best[k])][0] for k in range(snap.K)]
    return OracleResult(decisions, joint_accounts(snap, decisions)["U"], False, size)


def restricted_oracle(snap: Snapshot, k: int, **kw) -> OracleResult:
    """Oracle over vehicle ``k``'s options alone; other vehicles stay idle."""
    tasks = [t if j == k else None for j, t in enumerate(snap.tasks)]
    sub = Snapshot(**{**snap.__dict__, "tasks": tasks})
    return brute_force_best(sub, **kw)


def dumps_fixture(snap: Snapshot, result: OracleResult) -> str:
    doc = snap.to_json()
    doc["expected"] = {
        "decision": [d.to_json() for d in result.decisions],
        "utility": result.utility,
        "fallback": result.fallback,
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def random_micro_instance(rng, K: int | None = None, channels: int | None = None,
                          config=None) -> Snapshot:
    """Random instance small enough for :func:`brute_force_best`.

    Up to three vehicles and two channels per pool; rates come from the
    channel model at random positions, and some resources may already be
    held by in-flight work.
    """
    from .channel import link_rates
    from .config import ScenarioConfig
    from .scenario import neighbor_sets

    cfg = ScenarioConfig() if config is None else config
    K = int(rng.integers(1, 4)) if K is None else K
    pools = {p: int(rng.integers(1, 3)) if channels is None else channels for p in POOLS}
    cfg = cfg.replace(vehicle_count=K, channel_counts=pools)
    pos = rng.uniform(0.0, cfg.rsu_coverage, size=K)
    lo, hi = cfg.channel["alignment_loss_range"]
    align = np.triu(rng.uniform(lo, hi, size=(K, K)), 1)
    align = align + align.T
    rates = link_rates(cfg, pos, align, rng)
    tasks, ages = [], []
    for k in range(K):
        if rng.random() < 0.15:
            tasks.append(None)
            ages.append(0.0)
            continue
        ttype = TaskType(int(rng.choice(3, p=cfg.type_mix)))
        tasks.append(Task(id=k, owner=k, task_type=ttype,
                          size=float(rng.uniform(*cfg.task_size_range)),
                          density=float(rng.uniform(*cfg.density_range)),
                          output_ratio=cfg.output_ratio if ttype == TaskType.LPA else 0.0,
                          energy_density=cfg.energy_density, generated_at=0))
        ages.append(float(rng.integers(0, 4)) * cfg.tti)
    busy = rng.random() < 0.3
    return Snapshot(
        K=K, pools=pools, neighbors=[set(n) for n in neighbor_sets(pos, cfg.neighbor_range)],
        tasks=tasks, ages=np.array(ages),
        speeds=rng.uniform(*cfg.speed_range, size=K),
        cpus=rng.uniform(*cfg.vehicle_cpu_range, size=K), rates=rates,
        vec_cpu=float(rng.choice([8e9, 10e9, 12e9, 14e9])), prices=dict(cfg.prices),
        beta=cfg.beta, thresholds=tuple(cfg.thresholds), v_max=cfg.speed_limit,
        hold_wait=cfg.hold_wait, tti=cfg.tti, tx_power_v2i=cfg.tx_power_v2i,
        tx_power_v2v=cfg.tx_power_v2v,
        vec_occ=float(rng.choice([0.0, 0.5])) if busy else 0.0,
        cpu_occ=rng.choice([0.0, 0.5], size=K) if busy else np.zeros(K),
        chan_occ={p: (rng.random(pools[p]) < 0.25) if busy else np.zeros(pools[p], dtype=bool)
                  for p in POOLS},
        positions=pos,
    )
