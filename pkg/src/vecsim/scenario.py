"""Vehicles on a 1-D road segment served by one RSU, and their task streams."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .config import ScenarioConfig


class TaskType(IntEnum):
    CA = 0
    HPA = 1
    LPA = 2


class Status(Enum):
    QUEUED = "queued"
    HOLDING = "holding"
    UPLOADING = "uploading"
    PROCESSING = "processing"
    DOWNLOADING = "downloading"
    DONE = "done"
    EXPIRED = "expired"


IN_FLIGHT = (Status.UPLOADING, Status.PROCESSING, Status.DOWNLOADING)


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named stream.

    Adding a new stream name never perturbs the draws of existing ones.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(name.encode()),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class Task:
    id: int
    owner: int
    task_type: TaskType
    size: float  # bits
    density: float  # cycles/bit
    output_ratio: float
    energy_density: float
    generated_at: int  # slot
    status: Status = Status.QUEUED
    hold_left: int = 0  # slots of hold-on wait remaining
    # filled in at commitment
    pattern: str = ""  # "vec" | "v2v" | "local"
    target: int = -1
    phases: tuple = (0, 0, 0)
    remaining: int = 0
    committed_at: int = -1
    delay: float = float("nan")  # ms, generation to completion
    threshold: float = float("nan")
    energy: float = 0.0
    finished_at: int = -1
    claims: dict = field(default_factory=dict)

    @property
    def is_ca(self) -> bool:
        return self.task_type == TaskType.CA

    def age_ms(self, slot: int, tti: float) -> float:
        return (slot - self.generated_at) * tti


@dataclass
class VehicleState:
    index: int
    position: float
    speed: float
    cpu: float
    queue: list = field(default_factory=list)
    cpu_used: float = 0.0
    neighbors: frozenset = frozenset()
    exited: bool = False

    @property
    def local_cpu_free(self) -> float:
        return max(0.0, 1.0 - self.cpu_used)

    def head(self):
        """Task awaiting a decision, or None (empty queue or head on hold)."""
        if self.queue and self.queue[0].status == Status.QUEUED:
            return self.queue[0]
        return None


def neighbor_sets(positions, radius: float) -> list[frozenset]:
    pos = np.asarray(positions, dtype=float)
    dist = np.abs(pos[:, None] - pos[None, :])
    near = dist <= radius
    np.fill_diagonal(near, False)
    return [frozenset(np.flatnonzero(row).tolist()) for row in near]


def advance_mobility(state: VehicleState, dt: float, coverage: float) -> VehicleState:
    """Move a vehicle forward by ``dt`` milliseconds at constant speed."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    state.position += state.speed * dt * 1e-3
    if state.position > coverage:
        state.exited = True
    return state


def generate_task(rng: np.random.Generator, config: ScenarioConfig, vehicle_index: int,
                  slot: int, task_id: int = 0):
    """Bernoulli arrival for one vehicle in one slot.

    The same number of variates is consumed whether or not a task arrives, so
    arrival streams stay aligned across policies and configurations.
    """
    u_arrive, u_type = rng.random(2)
    size = rng.uniform(*config.task_size_range)
    density = rng.uniform(*config.density_range)
    if u_arrive >= config.arrival_prob:
        return None
    cum = np.cumsum(config.mix_for(vehicle_index))
    ttype = TaskType(int(min(np.searchsorted(cum, u_type, side="right"), 2)))
    ratio = config.output_ratio if ttype == TaskType.LPA else 0.0
    return Task(id=task_id, owner=vehicle_index, task_type=ttype, size=float(size),
                density=float(density), output_ratio=ratio,
                energy_density=config.energy_density, generated_at=slot)


class Scenario:
    """Mutable simulation state of one cell for one episode."""

    def __init__(self, config: ScenarioConfig, vehicles: list[VehicleState], seed: int):
        self.config = config
        self.vehicles = vehicles
        self.seed = seed
        self.slot = 0
        self.next_id = 0
        self.dropped = [0] * len(vehicles)
        self.tasks: list[Task] = []
        self._task_rngs = [stream(seed, f"tasks/{k}") for k in range(len(vehicles))]
        self.fading_rng = stream(seed, "fading")
        lo, hi = config.channel["alignment_loss_range"]
        K = len(vehicles)
        upper = stream(seed, "alignment").uniform(lo, hi, size=(K, K))
        self.alignment = np.triu(upper, 1) + np.triu(upper, 1).T
        self.refresh_neighbors()

    @property
    def K(self) -> int:
        return len(self.vehicles)

    @property
    def positions(self) -> np.ndarray:
        return np.array([v.position for v in self.vehicles])

    @property
    def speeds(self) -> np.ndarray:
        return np.array([v.speed for v in self.vehicles])

    def refresh_neighbors(self):
        for v, nb in zip(self.vehicles, neighbor_sets(self.positions, self.config.neighbor_range)):
            v.neighbors = nb

    def arrivals(self, slot: int) -> list[Task]:
        new = []
        for k, v in enumerate(self.vehicles):
            task = generate_task(self._task_rngs[k], self.config, k, slot, self.next_id)
            if task is None:
                continue
            if len(v.queue) >= self.config.queue_capacity:
                self.dropped[k] += 1
                continue
            self.next_id += 1
            v.queue.append(task)
            self.tasks.append(task)
            new.append(task)
        return new

    def advance(self, dt: float) -> bool:
        """Advance all vehicles; returns True if any left the coverage area."""
        for v in self.vehicles:
            advance_mobility(v, dt, self.config.rsu_coverage)
        self.refresh_neighbors()
        return any(v.exited for v in self.vehicles)

    def snapshot(self) -> dict:
        """Plain-data view used for determinism checks."""
        return {
            "slot": self.slot,
            "vehicles": [(v.position, v.speed, v.cpu, v.cpu_used, sorted(v.neighbors),
                          [t.id for t in v.queue]) for v in self.vehicles],
            "tasks": [(t.id, t.owner, int(t.task_type), t.size, t.density, t.generated_at,
                       t.status.value, t.delay) for t in self.tasks],
            "dropped": list(self.dropped),
        }


def spawn_scenario(config: ScenarioConfig, seed: int | None = None) -> Scenario:
    config.validate()
    seed = config.seed if seed is None else seed
    vehicles = []
    for k in range(config.vehicle_count):
        rng = stream(seed, f"vehicle/{k}")
        vehicles.append(VehicleState(
            index=k,
            position=float(rng.uniform(0.0, config.rsu_coverage)),
            speed=float(rng.uniform(*config.speed_range)),
            cpu=float(rng.uniform(*config.vehicle_cpu_range)),
        ))
    return Scenario(config, vehicles, seed)
