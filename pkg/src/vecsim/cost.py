"""Delay thresholds, completion times, energy, revenue and utility."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import TaskType

MBIT = 1e6
# absorbs float noise such as 1e6 / (0.5e6 * (1 + 1e-16)) before ceiling
_CEIL_SLACK = 1e-9


class InfeasibleAllocation(ValueError):
    pass


def ceil_tti(x: float) -> int:
    return int(math.ceil(x - _CEIL_SLACK)) if x > 0 else 0


def delay_threshold(task_type, speed: float, thresholds, v_max: float) -> float:
    """Deadline in ms for a task of ``task_type`` on a vehicle at ``speed`` m/s.

    HPA deadlines follow a one-tailed normal curve in speed, scaled so the
    deadline equals the HPA threshold at the speed limit, with the standard
    deviation set to ``v_max / 1.96``.
    """
    if speed > v_max * (1 + 1e-12):
        raise ValueError(f"speed {speed} exceeds the road speed limit {v_max}")
    task_type = TaskType(task_type)
    if task_type == TaskType.CA:
        return float(thresholds[0])
    if task_type == TaskType.LPA:
        return float(thresholds[2])
    alpha = v_max / 1.96
    return float(math.exp(-(speed**2 - v_max**2) / (2.0 * alpha**2)) * thresholds[1])


@dataclass(frozen=True)
class ComputeAllocation:
    target: str  # "vec" | "v2v" | "local"
    fraction: float
    cpu: float  # cycles/s of the executing node
    uplink: float = 0.0  # bits/s
    downlink: float = 0.0

    def __post_init__(self):
        if self.target not in ("vec", "v2v", "local"):
            raise ValueError(f"unknown target {self.target!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        if self.uplink < 0 or self.downlink < 0:
            raise ValueError("capacities must be >= 0")


@dataclass(frozen=True)
class CostBreakdown:
    delay: float  # ms of the execution pattern (excludes queueing age)
    energy: float  # J
    phases: tuple  # (upload, process, download) in TTIs


def _download_bits(task) -> float:
    return task.output_ratio * task.size if TaskType(task.task_type) == TaskType.LPA else 0.0


def completion_time(task, alloc: ComputeAllocation, tti: float = 1.0):
    """Whole-TTI duration of executing ``task`` under ``alloc``.

    Returns ``(total, (upload, process, download))``; ``tti`` is in ms.
    """
    tti_s = tti * 1e-3
    speed = alloc.fraction * alloc.cpu
    if speed <= 0:
        raise InfeasibleAllocation("no compute allocated")
    process = ceil_tti(task.density * task.size / (speed * tti_s))
    if alloc.target == "local":
        return process, (0, process, 0)
    up_bits = task.size
    if up_bits > 0 and alloc.uplink <= 0:
        raise InfeasibleAllocation("no uplink capacity")
    upload = ceil_tti(up_bits / (alloc.uplink * tti_s)) if up_bits > 0 else 0
    down_bits = _download_bits(task)
    if down_bits > 0 and alloc.downlink <= 0:
        raise InfeasibleAllocation("no downlink capacity")
    download = ceil_tti(down_bits / (alloc.downlink * tti_s)) if down_bits > 0 else 0
    return upload + process + download, (upload, process, download)


def total_task_delay(age: float, flags, pattern_delays, hold_wait: float) -> float:
    """Generation-to-completion delay in ms.

    ``flags`` is ``(hold, vec, v2v, local)`` where ``v2v`` is a sequence of
    per-neighbor indicators; ``pattern_delays`` is ``(vec, v2v, local)`` in
    the same layout, already in ms. ``age`` is ``(t - t_g)`` in ms.
    """
    hold, vec, v2v, local = flags
    v2v = np.atleast_1d(np.asarray(v2v, dtype=float))
    if hold + vec + v2v.sum() + local > 1:
        raise ValueError("more than one offloading pattern selected")
    if hold:
        return age + hold_wait
    d_vec, d_v2v, d_local = pattern_delays
    # select rather than multiply so an unused infinite delay cannot leak in
    chosen = 0.0
    if vec:
        chosen = d_vec
    elif v2v.any():
        chosen = float(np.atleast_1d(d_v2v)[int(np.argmax(v2v))])
    elif local:
        chosen = d_local
    return age + chosen


def offload_energy(task, alloc: ComputeAllocation, power: float = 0.0,
                   v2v_uses_density: bool = False) -> float:
    """Energy in J spent by the task owner.

    Offloading costs transmit power times un-quantized transfer time; local
    execution costs the dynamic CPU energy of the granted speed.
    """
    if task.size == 0:
        return 0.0
    if alloc.target == "local":
        speed = alloc.fraction * alloc.cpu
        if speed <= 0:
            raise InfeasibleAllocation("no compute allocated")
        return task.energy_density * task.density * task.size * speed**2
    if alloc.uplink <= 0:
        raise InfeasibleAllocation("no uplink capacity")
    up_bits = task.size
    if alloc.target == "v2v" and v2v_uses_density:
        up_bits = task.density * task.size
    energy = power * up_bits / alloc.uplink
    down_bits = _download_bits(task)
    if down_bits > 0:
        if alloc.downlink <= 0:
            raise InfeasibleAllocation("no downlink capacity")
        energy += power * down_bits / alloc.downlink
    return energy


def fleet_energy(energies, hold_flags) -> float:
    e = np.asarray(energies, dtype=float)
    h = np.asarray(hold_flags, dtype=float)
    return float(np.sum((1.0 - h) * e))


def vehicle_revenue(k: int, choices, sizes, prices) -> float:
    """Revenue of vehicle ``k`` in one slot.

    ``choices[j]`` is ``(pattern, target)`` for vehicle ``j`` with pattern in
    {"hold", "vec", "v2v", "local", None}; ``sizes[j]`` its task size in bits.
    Prices are per Mbit.
    """
    rev = 0.0
    for j, (pattern, target) in enumerate(choices):
        if pattern is None or pattern == "hold":
            continue
        mb = sizes[j] / MBIT
        if j == k:
            if pattern == "vec":
                rev -= prices["vec"] * mb
            elif pattern == "v2v":
                rev -= prices["v2v"] * mb
            elif pattern == "local":
                rev -= prices["local"] * mb
        elif pattern == "v2v" and target == k:
            rev += prices["v2v"] * mb
    return rev


def fleet_utility(revenues, energies, beta):
    """Return ``(U_t, TR_t, E_t)`` for per-vehicle revenues and energies."""
    tr = float(np.sum(revenues))
    e = float(np.sum(energies))
    b1, b2 = beta
    return b1 * tr - b2 * e, tr, e


def vehicle_utility(revenue: float, energy: float, beta) -> float:
    return beta[0] * revenue - beta[1] * energy
