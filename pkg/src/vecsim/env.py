"""Slot-level MDP over one cell: observations, action application, rewards."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cost
from .channel import draw_rates
from .config import POOLS, ScenarioConfig
from .decision import (DEFAULT_GRID, ContractViolation, Decision, Snapshot, action_dim,
                       assess, check_constraints, decode_action, idle, joint_accounts)
from .scenario import IN_FLIGHT, Status, TaskType, spawn_scenario

PENALTY, DEADLINE, UTILITY = "penalty", "deadline", "utility"
_PHASE_STATUS = (Status.UPLOADING, Status.PROCESSING, Status.DOWNLOADING)


def compute_reward(report, delay: float, threshold: float, utility: float, params: dict):
    """Reward and regime tag for one vehicle in one slot.

    Violations of c1-c7 the vehicle is party to take precedence, then a
    missed or uncertified deadline, then the utility regime.
    """
    blame = report.blame
    if not report.cleared:
        g = params["gammas"]
        r = params["l1"] - sum(g[j] * blame[j] for j in range(7) if blame[j] > 0)
        return float(r), PENALTY
    if not report.deadline_met:
        if math.isfinite(delay):
            bonus = math.exp((threshold - delay) / params["t_norm"])
        else:
            bonus = 0.0
        return float(params["l2"] + bonus), DEADLINE
    return float(params["l3"] + params["gammas"][7] * math.exp(utility)), UTILITY


def state_dim(K: int, pools: dict, extended: bool = True) -> int:
    n = 3 * K + 2 + (2 + K) + (2 + K) + sum(pools[p] for p in POOLS)
    return n + (6 + K if extended else 0)


@dataclass
class StepInfo:
    slot: int
    rewards: list
    regimes: list
    delays: list  # predicted D in ms for vehicles that decided this slot, nan otherwise
    thresholds: list
    completions: int
    energy: float
    revenue: float
    utility: float
    decisions: list = field(default_factory=list, repr=False)

    @staticmethod
    def header(K: int) -> list[str]:
        cols = ["slot"]
        for name in ("reward", "regime", "delay_ms", "threshold_ms"):
            cols += [f"{name}_{k}" for k in range(K)]
        return cols + ["completions", "energy_j", "revenue", "utility"]

    def row(self) -> list:
        def num(x):
            return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))

        out = [self.slot]
        out += [repr(float(r)) for r in self.rewards]
        out += list(self.regimes)
        out += [num(d) for d in self.delays]
        out += [num(t) for t in self.thresholds]
        return out + [self.completions, repr(self.energy), repr(self.revenue), repr(self.utility)]


class VecEnv:
    """One cell, one episode at a time.

    Rates for slot ``t`` are drawn before the decisions of slot ``t`` so
    baselines and agents see the same channel state. Arrivals of slot ``t+1``
    are generated at the end of ``step``.
    """

    def __init__(self, config: ScenarioConfig, seed: int | None = None, extended_state: bool = True):
        self.config = config.validate()
        self.seed = config.seed if seed is None else seed
        self.extended_state = extended_state
        self.pools = {p: config.pool_size(p) for p in POOLS}
        self.K = config.vehicle_count
        self.action_dim = action_dim(self.K, self.pools)
        self.state_dim = state_dim(self.K, self.pools, extended_state)
        self.scenario = None
        self.done = True

    # -- episode control -------------------------------------------------
    def reset(self, seed: int | None = None) -> list[np.ndarray]:
        if seed is not None:
            self.seed = seed
        self.scenario = spawn_scenario(self.config, self.seed)
        self.in_flight = []
        self.finished = []  # terminated tasks in termination order
        self.steps = []
        self.energy_total = 0.0
        self.vehicle_utility = np.zeros(self.K)
        self.done = False
        self.scenario.arrivals(0)
        self.rates = draw_rates(self.scenario)
        return self.observe_all()

    @property
    def slot(self) -> int:
        return self.scenario.slot

    # -- resources -------------------------------------------------------
    def occupancy(self):
        vec = 0.0
        cpu = np.zeros(self.K)
        chan = {p: np.zeros(self.pools[p], dtype=bool) for p in POOLS}
        for t in self.in_flight:
            c = t.claims
            vec += c.get("vec", 0.0)
            if "cpu" in c:
                j, f = c["cpu"]
                cpu[j] += f
            for p, idx in c.get("chan", {}).items():
                chan[p][list(idx)] = True
        return vec, cpu, chan

    def threshold(self, k: int, task) -> float:
        cfg = self.config
        return cost.delay_threshold(task.task_type, self.scenario.vehicles[k].speed,
                                    cfg.thresholds, cfg.speed_limit)

    def snapshot(self, fraction_grid=DEFAULT_GRID) -> Snapshot:
        sc, cfg = self.scenario, self.config
        vec, cpu, chan = self.occupancy()
        heads = [v.head() for v in sc.vehicles]
        ages = np.array([0.0 if t is None else t.age_ms(sc.slot, cfg.tti) for t in heads])
        return Snapshot(
            K=self.K, pools=self.pools, neighbors=[set(v.neighbors) for v in sc.vehicles],
            tasks=heads, ages=ages, speeds=sc.speeds, cpus=np.array([v.cpu for v in sc.vehicles]),
            rates=self.rates, vec_cpu=cfg.vec_cpu, prices=cfg.prices, beta=cfg.beta,
            thresholds=tuple(cfg.thresholds), v_max=cfg.speed_limit, hold_wait=cfg.hold_wait,
            tti=cfg.tti, tx_power_v2i=cfg.tx_power_v2i, tx_power_v2v=cfg.tx_power_v2v,
            vec_occ=vec, cpu_occ=cpu, chan_occ=chan, fraction_grid=tuple(fraction_grid),
            v2v_energy_uses_density=cfg.v2v_energy_uses_density, positions=sc.positions,
        )

    # -- observations ----------------------------------------------------
    def observe(self, k: int, occ=None) -> np.ndarray:
        sc, cfg = self.scenario, self.config
        K = self.K
        if not 0 <= k < K:
            raise IndexError(f"vehicle {k} out of range")
        vec_occ, cpu_occ, chan = self.occupancy() if occ is None else occ
        speeds = sc.speeds / cfg.speed_limit
        pos = sc.positions / cfg.rsu_coverage
        sizes = np.array([v.queue[0].size / cost.MBIT if v.queue else 0.0 for v in sc.vehicles])
        me = sc.vehicles[k]
        flags = np.zeros(2 + K)
        fracs = np.zeros(2 + K)
        if me.queue and me.queue[0].status == Status.HOLDING:
            flags[0] = 1.0
        for t in self.in_flight:
            if t.owner != k:
                continue
            if t.pattern == "vec":
                flags[1] = 1.0
                fracs[0] += t.claims["vec"]
            else:
                flags[2 + t.target] = 1.0
        fracs[1] = sum(t.claims["cpu"][1] for t in self.in_flight
                       if t.owner == k and t.pattern == "local")
        fracs[2:] = cpu_occ
        avail = [1.0 - chan[p].astype(float) for p in POOLS]
        parts = [speeds, pos, sizes, [max(0.0, 1.0 - vec_occ), max(0.0, 1.0 - cpu_occ[k])],
                 flags, np.clip(fracs, 0.0, 1.0), *avail]
        if self.extended_state:
            head = me.head()
            extra = np.zeros(6 + K)
            if head is not None:
                extra[int(head.task_type)] = 1.0
                thr = self.threshold(k, head)
                extra[3] = np.clip((thr - head.age_ms(sc.slot, cfg.tti)) / thr, 0.0, 1.0)
                extra[4] = head.density / cfg.density_range[1]
                extra[5] = 1.0
            extra[6 + np.array(sorted(me.neighbors), dtype=int)] = 1.0
            parts.append(extra)
        return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])

    def observe_all(self) -> list[np.ndarray]:
        occ = self.occupancy()
        return [self.observe(k, occ) for k in range(self.K)]

    # -- dynamics --------------------------------------------------------
    def _decide(self, actions, snap: Snapshot) -> list[Decision]:
        K = self.K
        if len(actions) != K:
            raise ContractViolation(f"expected {K} actions, got {len(actions)}")
        out = []
        for k, a in enumerate(actions):
            task = snap.tasks[k]
            if isinstance(a, Decision):
                if a.k != k or a.K != K:
                    raise ContractViolation(f"vehicle {k}: decision belongs to vehicle {a.k}")
                d = a.copy() if task is not None else idle(k, K, self.pools)
                b_local = d.frac_local if d.local else 0.0
            else:
                raw = np.asarray(a, dtype=float)
                d = decode_action(raw, k, K, self.pools, snap.neighbors[k], task)
                b_local = float(np.clip((raw[3 + K] + 1.0) / 2.0, 0.0, 1.0))
            if task is not None and task.task_type == TaskType.CA:
                free = max(0.0, 1.0 - float(snap.cpu_occ[k]))
                d = Decision(k, K, self.pools, local=1, frac_local=b_local if b_local > 0 else free)
            out.append(d)
        return out

    def _commit(self, task, d: Decision, a, slot: int):
        sc = self.scenario
        name, target = d.pattern
        claims = {}
        if name == "vec":
            claims["vec"] = float(d.frac_vec)
            claims["chan"] = {"v2i_up": np.flatnonzero(d.z_up).tolist(),
                              "v2i_down": np.flatnonzero(d.z_down).tolist()}
        elif name == "v2v":
            claims["cpu"] = (target, float(d.frac_v2v[target]))
            claims["chan"] = {"v2v_up": np.flatnonzero(d.zc_up[target]).tolist(),
                              "v2v_down": np.flatnonzero(d.zc_down[target]).tolist()}
        else:
            claims["cpu"] = (d.k, float(d.frac_local))
        task.pattern, task.target = name, target
        task.phases = tuple(int(x) for x in a.phases)
        task.remaining = list(task.phases)
        task.committed_at = slot
        task.delay, task.threshold, task.energy = a.delay, a.threshold, a.energy
        task.claims = claims
        task.status = _PHASE_STATUS[next(i for i, n in enumerate(task.phases) if n > 0)]
        sc.vehicles[d.k].queue.remove(task)
        self.in_flight.append(task)

    def _advance_in_flight(self, slot: int) -> int:
        done = 0
        still = []
        for t in self.in_flight:
            i = _PHASE_STATUS.index(t.status)
            t.remaining[i] -= 1
            while i < 3 and t.remaining[i] == 0:
                i += 1
            if i == 3:
                t.status = Status.DONE
                t.finished_at = slot + 1
                self.finished.append(t)
                done += 1
            else:
                t.status = _PHASE_STATUS[i]
                still.append(t)
        self.in_flight = still
        return done

    def step(self, actions):
        """Apply one joint action; returns ``(obs, rewards, done, info)``."""
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        sc, cfg = self.scenario, self.config
        K, slot = self.K, sc.slot
        snap = self.snapshot()
        decisions = self._decide(actions, snap)
        assessed = [assess(snap, d) for d in decisions]
        delays = np.array([a.delay for a in assessed])
        thresholds = np.array([a.threshold for a in assessed])
        reports = check_constraints(decisions, snap, delays, thresholds)

        executed = [idle(k, K, self.pools) for k in range(K)]
        for k, (d, a, r) in enumerate(zip(decisions, assessed, reports)):
            task = snap.tasks[k]
            if task is None or not r.cleared:
                continue
            if d.hold:
                task.status = Status.HOLDING
                task.hold_left = max(1, int(math.ceil(cfg.hold_wait / cfg.tti - 1e-9)))
            elif d.pattern[0] is not None and math.isfinite(a.delay):
                self._commit(task, d, a, slot)
                executed[k] = d
        acct = joint_accounts(snap, executed)

        rewards, regimes = [], []
        for k in range(K):
            r, tag = compute_reward(reports[k], delays[k], thresholds[k], acct["utility"][k],
                                    cfg.reward_params)
            rewards.append(r)
            regimes.append(tag)
        self.energy_total += acct["E"]
        self.vehicle_utility += acct["utility"]

        completions = self._advance_in_flight(slot)
        for v in sc.vehicles:
            for t in v.queue:
                if t.status == Status.HOLDING:
                    t.hold_left -= 1
                    if t.hold_left <= 0:
                        t.status = Status.QUEUED
        sc.slot = slot + 1
        exited = sc.advance(cfg.tti)
        self._expire(sc.slot)
        self.done = exited or sc.slot >= cfg.episode_length
        if self.done:
            self._finalize()
        else:
            sc.arrivals(sc.slot)
            self.rates = draw_rates(sc)
        info = StepInfo(slot, rewards, regimes,
                        [float(x) if snap.tasks[k] is not None else float("nan")
                         for k, x in enumerate(delays)],
                        [float(x) for x in thresholds], completions, acct["E"], acct["TR"],
                        acct["U"], decisions)
        self.steps.append(info)
        return self.observe_all(), np.array(rewards), self.done, info

    def _expire(self, slot: int):
        tti = self.config.tti
        for k, v in enumerate(self.scenario.vehicles):
            keep = []
            for t in v.queue:
                if t.age_ms(slot, tti) + tti > self.threshold(k, t) + 1e-9:
                    self._terminate(t, Status.EXPIRED, slot)
                else:
                    keep.append(t)
            v.queue = keep

    def _terminate(self, t, status, slot):
        t.status = status
        t.finished_at = slot
        self.finished.append(t)

    def _finalize(self):
        """Close the episode: waiting tasks expire, in-flight tasks run to completion."""
        slot = self.scenario.slot
        for v in self.scenario.vehicles:
            for t in v.queue:
                self._terminate(t, Status.EXPIRED, slot)
            v.queue = []
        for t in self.in_flight:
            t.status = Status.DONE
            t.finished_at = t.committed_at + sum(t.phases)
            self.finished.append(t)
        self.in_flight = []

    # -- episode summaries -------------------------------------------------
    def task_outcomes(self) -> dict:
        done = [t for t in self.finished if t.status == Status.DONE]
        expired = [t for t in self.finished if t.status == Status.EXPIRED]
        return {"done": done, "expired": expired, "dropped": sum(self.scenario.dropped),
                "generated": len(self.scenario.tasks) + sum(self.scenario.dropped)}
