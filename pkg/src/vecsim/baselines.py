"""Comparison policies (AL, AV, RD, EDG) and policy evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import cost
from .config import POOLS, ScenarioConfig
from .decision import (ContractViolation, Decision, Snapshot, assess, hold, idle, make)
from .env import VecEnv
from .learn import Trained, episode_seed
from .scenario import Status, TaskType, stream

TOL = 1e-9
MIN_SHARE = 1e-6  # leftovers below this are float residue, not capacity
# fraction grid EDG searches when running inside the simulator
EDG_GRID = tuple(np.round(np.linspace(0.1, 1.0, 10), 10))


class PolicyKind(Enum):
    AL = "AL"
    AV = "AV"
    RD = "RD"
    EDG = "EDG"
    DDPG = "DDPG"
    MADDPG = "MADDPG"

    @classmethod
    def parse(cls, name) -> "PolicyKind":
        try:
            return cls(str(name).upper())
        except ValueError:
            raise ContractViolation(f"unknown policy {name!r}") from None


# ---------------------------------------------------------------------------
# size-proportional allocation shared by AL, AV and RD


def _split_counts(n: int, weights) -> list[int]:
    """Integer split of ``n`` proportional to ``weights`` (largest remainder)."""
    w = np.asarray(weights, dtype=float)
    if n <= 0 or len(w) == 0:
        return [0] * len(w)
    exact = n * w / w.sum()
    counts = np.floor(exact).astype(int)
    order = sorted(range(len(w)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: n - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def _snap_down(x: float, grid) -> float:
    if grid is None:
        return x
    ok = [g for g in grid if g <= x + 1e-12]
    return max(ok) if ok else 0.0


def _free(occupied) -> float:
    free = 1.0 - float(occupied)
    return free if free >= MIN_SHARE else 0.0


def allocate(snap: Snapshot, choices, grid=None) -> list[Decision]:
    """Turn per-vehicle ``(pattern, target)`` choices into decisions.

    Every contended resource is split over its contenders in proportion to
    task work (density times size): compute shares of what is still free,
    channels from the free pool in index order. ``grid`` snaps fractions down
    to a quantized set.
    """
    K, pools = snap.K, snap.pools
    w = [0.0 if t is None else t.density * t.size for t in snap.tasks]
    choices = [(None, -1) if snap.tasks[k] is None else c for k, c in enumerate(choices)]

    def lpa(k):
        t = snap.tasks[k]
        return t.task_type == TaskType.LPA and t.output_ratio > 0

    frac = [0.0] * K
    vec = [k for k, (p, _) in enumerate(choices) if p == "vec"]
    free_vec = _free(snap.vec_occ)
    for k in vec:
        frac[k] = free_vec * w[k] / sum(w[j] for j in vec)
    for j in range(K):
        users = [k for k, (p, t) in enumerate(choices)
                 if (p == "local" and k == j) or (p == "v2v" and t == j)]
        free = _free(snap.cpu_occ[j])
        for k in users:
            frac[k] = free * w[k] / sum(w[i] for i in users)

    chans = {k: {} for k in range(K)}
    v2v = [k for k, (p, _) in enumerate(choices) if p == "v2v"]
    groups = {"v2i_up": vec, "v2i_down": [k for k in vec if lpa(k)],
              "v2v_up": v2v, "v2v_down": [k for k in v2v if lpa(k)]}
    for pool, users in groups.items():
        free = np.flatnonzero(~np.asarray(snap.chan_occ[pool], dtype=bool)).tolist()
        counts = _split_counts(len(free), [w[k] for k in users])
        pos = 0
        for k, c in zip(users, counts):
            chans[k][pool] = free[pos:pos + c]
            pos += c

    out = []
    for k, (p, t) in enumerate(choices):
        if p is None:
            out.append(idle(k, K, pools))
            continue
        f = _snap_down(frac[k], grid)
        c = chans[k]
        if p == "vec":
            d = make(k, K, pools, "vec", fraction=f, up=c["v2i_up"], down=c.get("v2i_down", []))
        elif p == "v2v":
            d = make(k, K, pools, "v2v", target=t, fraction=f, up=c["v2v_up"],
                     down=c.get("v2v_down", []))
        else:
            d = make(k, K, pools, "local", fraction=f)
        out.append(d)
    return out


# ---------------------------------------------------------------------------
# per-policy choice rules


def _al_choice(snap, k, rng):
    return ("local", k)


def _av_choice(snap, k, rng):
    if snap.tasks[k].task_type == TaskType.CA:
        return ("local", k)
    return ("vec", -1)


def _rd_choice(snap, k, rng):
    # one uniform draw per vehicle with a task keeps RD streams aligned
    u = rng.random()
    if snap.tasks[k].task_type == TaskType.CA:
        return ("local", k)
    support = [("local", k), ("vec", -1)] + [("v2v", j) for j in sorted(snap.neighbors[k])
                                              if _free(snap.cpu_occ[j]) > 0]
    return support[min(int(u * len(support)), len(support) - 1)]


_RULES = {PolicyKind.AL: _al_choice, PolicyKind.AV: _av_choice, PolicyKind.RD: _rd_choice}


def _edg_key(option):
    u, energy, delay, _ = option
    return (-u, energy, delay)


def edg_options(snap: Snapshot, k: int, vec_free: float, cpu_free, chan_free, grid):
    """Candidate decisions of vehicle ``k`` for EDG with their scores.

    Each link takes every still-free channel of its pool; fractions come from
    ``grid`` and must fit in what is still free.
    """
    K, pools = snap.K, snap.pools
    task = snap.tasks[k]
    lpa = task.task_type == TaskType.LPA and task.output_ratio > 0
    free = {p: np.flatnonzero(chan_free[p]).tolist() for p in POOLS}
    cands = []
    for b in grid:
        if b > 0 and b <= cpu_free[k] + TOL:
            cands.append(make(k, K, pools, "local", fraction=b))
    if task.task_type != TaskType.CA:
        for b in grid:
            if b > 0 and b <= vec_free + TOL:
                cands.append(make(k, K, pools, "vec", fraction=b, up=free["v2i_up"],
                                  down=free["v2i_down"] if lpa else []))
        for j in sorted(snap.neighbors[k]):
            for b in grid:
                if b > 0 and b <= cpu_free[j] + TOL:
                    cands.append(make(k, K, pools, "v2v", target=j, fraction=b,
                                      up=free["v2v_up"], down=free["v2v_down"] if lpa else []))
    out = []
    mb = task.size / cost.MBIT
    price = {"local": snap.prices["local"], "vec": snap.prices["vec"], "v2v": snap.prices["v2v"]}
    for d in cands:
        a = assess(snap, d)
        if not (math.isfinite(a.delay) and a.delay <= a.threshold):
            continue
        u = cost.vehicle_utility(-price[a.pattern] * mb, a.energy, snap.beta)
        out.append((u, a.energy, a.delay, d))
    return out


def edg_joint(snap: Snapshot, grid=None, order=None) -> list[Decision]:
    """Energy-and-delay greedy: vehicles in turn take their best feasible option.

    Best means highest own utility, then lower energy, then lower delay; the
    first candidate wins remaining ties. A vehicle with no feasible option
    holds. Resources taken by earlier vehicles are unavailable to later ones.
    """
    K, pools = snap.K, snap.pools
    grid = snap.fraction_grid if grid is None else grid
    vec_free = max(0.0, 1.0 - snap.vec_occ)
    cpu_free = np.maximum(0.0, 1.0 - np.asarray(snap.cpu_occ, dtype=float))
    chan_free = {p: ~np.asarray(snap.chan_occ[p], dtype=bool) for p in POOLS}
    out = [idle(k, K, pools) for k in range(K)]
    for k in (range(K) if order is None else order):
        if snap.tasks[k] is None:
            continue
        opts = edg_options(snap, k, vec_free, cpu_free, chan_free, grid)
        if not opts:
            out[k] = hold(k, K, pools)
            continue
        best = min(opts, key=_edg_key)[3]
        out[k] = best
        name, target = best.pattern
        if name == "vec":
            vec_free -= best.frac_vec
            chan_free["v2i_up"] &= best.z_up == 0
            chan_free["v2i_down"] &= best.z_down == 0
        elif name == "v2v":
            cpu_free[target] -= best.frac_v2v[target]
            chan_free["v2v_up"] &= best.zc_up[target] == 0
            chan_free["v2v_down"] &= best.zc_down[target] == 0
        else:
            cpu_free[k] -= best.frac_local
    return out


def baseline_joint(kind, snap: Snapshot, rng=None, grid=None) -> list[Decision]:
    """Decisions of every vehicle under a baseline policy."""
    kind = PolicyKind.parse(kind) if not isinstance(kind, PolicyKind) else kind
    if kind == PolicyKind.EDG:
        return edg_joint(snap, grid)
    if kind not in _RULES:
        raise ContractViolation(f"{kind.value} is not a baseline decision rule")
    if kind == PolicyKind.RD and rng is None:
        raise ContractViolation("RD needs an rng")
    rule = _RULES[kind]
    choices = [None if snap.tasks[k] is None else rule(snap, k, rng) for k in range(snap.K)]
    return allocate(snap, choices, grid)


def baseline_decision(kind, snap: Snapshot, k: int, rng=None, grid=None) -> Decision:
    return baseline_joint(kind, snap, rng, grid)[k]


# ---------------------------------------------------------------------------
# policies and evaluation


class BaselinePolicy:
    def __init__(self, kind, seed: int = 0):
        self.kind = PolicyKind.parse(kind) if not isinstance(kind, PolicyKind) else kind
        if self.kind in (PolicyKind.DDPG, PolicyKind.MADDPG):
            raise ContractViolation(f"{self.kind.value} needs trained agents")
        self.rng = stream(seed, f"policy/{self.kind.value}")
        self.name = self.kind.value

    def act(self, env: VecEnv, obs):
        grid = EDG_GRID if self.kind == PolicyKind.EDG else None
        snap = env.snapshot(EDG_GRID)
        return baseline_joint(self.kind, snap, self.rng, grid)


class AgentPolicy:
    def __init__(self, trained: Trained, name: str | None = None):
        self.trained = trained
        self.name = name or trained.hp.mode.upper()

    def act(self, env: VecEnv, obs):
        return self.trained.act(obs)


def make_policy(policy, seed: int = 0):
    if isinstance(policy, Trained):
        return AgentPolicy(policy)
    if hasattr(policy, "act"):
        return policy
    return BaselinePolicy(policy, seed)


@dataclass
class Metrics:
    policy: str
    seed: int
    episodes: int
    fleet: dict
    vehicles: list  # one dict per vehicle
    episode_rewards: list  # mean per-slot, per-vehicle reward of each episode
    config_hash: str = ""
    steps: list = field(default_factory=list, repr=False)


def evaluate_policy(policy, config: ScenarioConfig, episodes: int, seed: int,
                    keep_steps: bool = False) -> Metrics:
    """Run ``episodes`` evaluation episodes and aggregate delay, utility,
    energy, deadline hits and rewards, fleet-wide and per vehicle."""
    pol = make_policy(policy, seed)
    env = VecEnv(config)
    K = env.K
    delays = [[] for _ in range(K)]
    hits = np.zeros(K)
    generated = np.zeros(K)
    done_n = np.zeros(K)
    expired = np.zeros(K)
    dropped = np.zeros(K)
    util = np.zeros(K)
    energy = np.zeros(K)
    reward = np.zeros(K)
    slots = 0
    fleet_u = fleet_e = 0.0
    ep_rewards = []
    steps = []
    for ep in range(episodes):
        obs = env.reset(episode_seed(seed, ep, "eval"))
        done = False
        ep_r = 0.0
        ep_slots = 0
        while not done:
            actions = pol.act(env, obs)
            obs, r, done, info = env.step(actions)
            reward += r
            ep_r += float(np.mean(r))
            ep_slots += 1
            fleet_u += info.utility
            fleet_e += info.energy
            if keep_steps:
                steps.append((ep, info))
        slots += ep_slots
        ep_rewards.append(ep_r / max(ep_slots, 1))
        out = env.task_outcomes()
        for t in out["done"]:
            delays[t.owner].append(t.delay)
            done_n[t.owner] += 1
            energy[t.owner] += t.energy
            if t.delay <= t.threshold + TOL:
                hits[t.owner] += 1
        for t in out["expired"]:
            expired[t.owner] += 1
        for k in range(K):
            dropped[k] += env.scenario.dropped[k]
            generated[k] += sum(1 for t in env.scenario.tasks if t.owner == k) + env.scenario.dropped[k]
        util += np.array(env.vehicle_utility)

    def mean(xs):
        return float(np.mean(xs)) if len(xs) else float("nan")

    all_delays = [x for ds in delays for x in ds]
    vehicles = []
    for k in range(K):
        vehicles.append({
            "vehicle": k, "mean_delay_ms": mean(delays[k]),
            "mean_utility": float(util[k] / max(slots, 1)),
            "mean_energy_j": float(energy[k] / max(slots, 1)),
            "deadline_hit_rate": float(hits[k] / generated[k]) if generated[k] else float("nan"),
            "mean_reward": float(reward[k] / max(slots, 1)),
            "tasks_generated": int(generated[k]), "tasks_done": int(done_n[k]),
            "tasks_expired": int(expired[k]), "tasks_dropped": int(dropped[k]),
        })
    G = generated.sum()
    fleet = {
        "mean_delay_ms": mean(all_delays),
        "mean_utility": fleet_u / max(slots, 1),
        "mean_energy_j": fleet_e / max(slots, 1),
        "deadline_hit_rate": float(hits.sum() / G) if G else float("nan"),
        "mean_reward": float(reward.sum() / max(slots, 1) / K),
        "tasks_generated": int(G), "tasks_done": int(done_n.sum()),
        "tasks_expired": int(expired.sum()), "tasks_dropped": int(dropped.sum()),
    }
    return Metrics(pol.name, seed, episodes, fleet, vehicles, ep_rewards, config.digest(), steps)
