"""Scenario configuration: defaults, JSON ingestion and validation.

All physical quantities are SI except where noted: times in ms (``tti``,
``hold_wait``, ``thresholds``), sizes in bits, prices per Mbit.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

KMH = 1.0 / 3.6

POOLS = ("v2i_up", "v2i_down", "v2v_up", "v2v_down")


class ConfigError(ValueError):
    """Raised when a configuration fails validation.

    ``errors`` holds every violation found, one message per offending field.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _default_channel() -> dict:
    return {
        "path_loss_intercept": 128.1,
        "path_loss_slope": 37.6,
        "noise_density_dbm_hz": -174.0,
        "interference": 0.0,
        "alignment_loss_range": [0.05, 0.2],
        "fading": True,
        "rsu_offset": 25.0,
        "min_distance": 1.0,
    }


@dataclass
class ScenarioConfig:
    vehicle_count: int = 7
    queue_capacity: int = 10
    task_size_range: list = field(default_factory=lambda: [0.2e6, 1.0e6])
    density_range: list = field(default_factory=lambda: [20.0, 50.0])
    speed_range: list = field(default_factory=lambda: [30 * KMH, 80 * KMH])
    speed_limit: float = 80 * KMH
    rsu_coverage: float = 500.0
    vec_cpu: float = 8e9
    vehicle_cpu_range: list = field(default_factory=lambda: [1.8e9, 3.6e9])
    bandwidth_v2i_up: float = 100e6
    bandwidth_v2i_down: float = 100e6
    bandwidth_v2v_up: float = 1e9
    bandwidth_v2v_down: float = 1e9
    channel_counts: dict = field(
        default_factory=lambda: {"v2i_up": 4, "v2i_down": 4, "v2v_up": 4, "v2v_down": 4}
    )
    tx_power_v2i: float = 0.5
    tx_power_v2v: float = 1.0
    output_ratio: float = 0.05
    energy_density: float = 1.25e-26
    prices: dict = field(default_factory=lambda: {"vec": 0.06, "v2v": 0.06, "local": 0.01})
    hold_wait: float = 10.0
    thresholds: list = field(default_factory=lambda: [10.0, 40.0, 100.0])
    utility_weights: list = field(default_factory=lambda: [0.8, 0.4])
    reward_params: dict = field(
        default_factory=lambda: {
            "l1": -0.4,
            "l2": -0.2,
            "l3": 0.5,
            "gammas": [0.8, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.9],
            "t_norm": 1000.0,
        }
    )
    tti: float = 1.0
    episode_length: int = 100
    seed: int = 0
    arrival_prob: float = 0.05
    type_mix: list = field(default_factory=lambda: [0.2, 0.4, 0.4])
    type_mix_overrides: dict = field(default_factory=dict)
    neighbor_range: float = 200.0
    v2v_energy_uses_density: bool = False
    channel: dict = field(default_factory=_default_channel)

    # -- derived ---------------------------------------------------------
    @property
    def beta(self) -> tuple[float, float]:
        return float(self.utility_weights[0]), float(self.utility_weights[1])

    def pool_size(self, pool: str) -> int:
        return int(self.channel_counts[pool])

    def bandwidth(self, pool: str) -> float:
        return float(getattr(self, "bandwidth_" + pool))

    def mix_for(self, k: int) -> list:
        return self.type_mix_overrides.get(str(k), self.type_mix)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "ScenarioConfig":
        d = copy.deepcopy(self.to_dict())
        for key, value in changes.items():
            if "." in key:
                head, tail = key.split(".", 1)
                d[head][tail] = value
            else:
                d[key] = value
        return ScenarioConfig.from_dict(d)

    # -- validation ------------------------------------------------------
    def problems(self) -> list[str]:
        errs: list[str] = []

        def rng_ok(name):
            r = getattr(self, name)
            if not (isinstance(r, (list, tuple)) and len(r) == 2):
                errs.append(f"{name}: expected [low, high]")
                return False
            if not 0.0 <= r[0] <= r[1]:
                errs.append(f"{name}: range {r} is empty or negative")
                return False
            return True

        if not isinstance(self.vehicle_count, int) or self.vehicle_count < 1:
            errs.append(f"vehicle_count: must be a positive integer, got {self.vehicle_count!r}")
        if not isinstance(self.queue_capacity, int) or self.queue_capacity < 1:
            errs.append(f"queue_capacity: must be a positive integer, got {self.queue_capacity!r}")
        for name in ("task_size_range", "density_range", "vehicle_cpu_range"):
            rng_ok(name)
        if rng_ok("speed_range") and self.speed_range[1] > self.speed_limit + 1e-12:
            errs.append("speed_range: upper bound exceeds speed_limit")
        for name in ("speed_limit", "rsu_coverage", "vec_cpu", "tti", "hold_wait"):
            if not getattr(self, name) > 0:
                errs.append(f"{name}: must be > 0")
        for pool in POOLS:
            if not self.bandwidth(pool) > 0:
                errs.append(f"bandwidth_{pool}: must be > 0")
        if set(self.channel_counts) != set(POOLS):
            errs.append(f"channel_counts: expected keys {list(POOLS)}")
        else:
            for pool in POOLS:
                n = self.channel_counts[pool]
                if not isinstance(n, int) or n < 1:
                    errs.append(f"channel_counts.{pool}: must be an integer >= 1")
        for name in ("tx_power_v2i", "tx_power_v2v", "energy_density"):
            if getattr(self, name) < 0:
                errs.append(f"{name}: must be >= 0")
        if not 0.0 <= self.output_ratio <= 1.0:
            errs.append("output_ratio: must lie in [0, 1]")
        if set(self.prices) != {"vec", "v2v", "local"}:
            errs.append("prices: expected keys vec, v2v, local")
        if len(self.thresholds) != 3 or min(self.thresholds) <= 0:
            errs.append("thresholds: expected three positive values (ms)")
        if len(self.utility_weights) != 2 or min(self.utility_weights) <= 0:
            errs.append("utility_weights: beta1 and beta2 must both be > 0")
        rp = self.reward_params
        missing = {"l1", "l2", "l3", "gammas", "t_norm"} - set(rp)
        if missing:
            errs.append(f"reward_params: missing {sorted(missing)}")
        elif len(rp["gammas"]) != 8 or rp["t_norm"] <= 0:
            errs.append("reward_params: need 8 gammas and t_norm > 0")
        if not isinstance(self.episode_length, int) or self.episode_length < 1:
            errs.append("episode_length: must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            errs.append("seed: must be a 64-bit unsigned integer")
        if not 0.0 <= self.arrival_prob <= 1.0:
            errs.append("arrival_prob: must lie in [0, 1]")
        mixes = [("type_mix", self.type_mix)]
        mixes += [(f"type_mix_overrides.{k}", m) for k, m in self.type_mix_overrides.items()]
        for name, mix in mixes:
            if len(mix) != 3 or min(mix) < 0 or abs(sum(mix) - 1.0) > 1e-9:
                errs.append(f"{name}: must be three nonnegative weights summing to 1")
        if self.neighbor_range <= 0:
            errs.append("neighbor_range: must be > 0")
        ch = self.channel
        lo, hi = ch.get("alignment_loss_range", [0, 0])
        if not 0.0 <= lo <= hi < 1.0:
            errs.append("channel.alignment_loss_range: must satisfy 0 <= low <= high < 1")
        if ch.get("interference", 0.0) < 0:
            errs.append("channel.interference: must be >= 0")
        if ch.get("min_distance", 1.0) <= 0:
            errs.append("channel.min_distance: must be > 0")
        return errs

    def validate(self) -> "ScenarioConfig":
        errs = self.problems()
        if errs:
            raise ConfigError(errs)
        return self

    # -- construction ----------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        errs = [f"{k}: unknown field" for k in unknown]
        kwargs = {k: copy.deepcopy(v) for k, v in data.items() if k in known}
        # nested dicts merge over defaults so partial overrides work
        base = cls()
        for key in ("channel", "reward_params", "prices", "channel_counts"):
            if key in kwargs and isinstance(kwargs[key], dict):
                merged = copy.deepcopy(getattr(base, key))
                merged.update(kwargs[key])
                kwargs[key] = merged
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:  # pragma: no cover - dataclass signature mismatch
            raise ConfigError(errs + [str(exc)]) from exc
        errs += cfg.problems()
        if errs:
            raise ConfigError(errs)
        return cfg


PRESETS = Path(__file__).with_name("presets")


def preset_path(name: str) -> Path | None:
    """Bundled preset matching ``name`` ("desk", "desk.json", ...), if any."""
    stem = Path(str(name)).name
    stem = stem[:-5] if stem.endswith(".json") else stem
    p = PRESETS / f"{stem}.json"
    return p if p.is_file() else None


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a JSON config; a missing file named like a bundled preset loads the preset."""
    if not Path(path).exists() and preset_path(path) is not None:
        path = preset_path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {path}: {exc.strerror or exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: {path} is not valid JSON: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a JSON object"])
    return ScenarioConfig.from_dict(data)


def desk_config(**changes) -> ScenarioConfig:
    """Small three-vehicle setup used by the acceptance runs."""
    cfg = load_config(PRESETS / "desk.json")
    return cfg.replace(**changes) if changes else cfg
