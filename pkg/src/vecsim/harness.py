"""Experiment runner: seeded evaluation sweeps, metric files, comparisons, fixtures."""
from __future__ import annotations

import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import Metrics, PolicyKind, evaluate_policy
from .config import ScenarioConfig, load_config
from .decision import brute_force_best, dumps_fixture, random_micro_instance
from .env import VecEnv
from .learn import TrainConfig, Trained, load_checkpoint, save_checkpoint, train_maddpg

METRICS_COLUMNS = [
    "policy", "seed", "episodes", "mean_delay_ms", "mean_utility", "mean_energy_j",
    "deadline_hit_rate", "mean_reward", "tasks_generated", "tasks_done", "tasks_expired",
    "tasks_dropped", "config_hash", "code_version",
]
VEHICLE_COLUMNS = [
    "policy", "seed", "vehicle", "mean_delay_ms", "mean_utility", "mean_energy_j",
    "deadline_hit_rate", "mean_reward", "tasks_generated", "tasks_done", "tasks_expired",
    "tasks_dropped",
]
REWARD_COLUMNS = ["policy", "seed", "episode", "mean_reward"]
TRAINING_COLUMNS = ["episode", "mean_reward", "critic_loss", "actor_objective"]
COMPARE_METRICS = ["mean_delay_ms", "mean_utility", "mean_energy_j", "deadline_hit_rate",
                   "mean_reward"]


class SchemaError(ValueError):
    pass


def parse_seeds(text: str) -> list[int]:
    """``"a..b"`` (inclusive), ``"a,b,c"`` or a single integer."""
    text = str(text).strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"bad seed range {text!r}; expected a..b") from None


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)


def write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def metrics_row(m: Metrics) -> dict:
    return {"policy": m.policy, "seed": m.seed, "episodes": m.episodes, **m.fleet,
            "config_hash": m.config_hash, "code_version": __version__}


def workers_for(n_jobs: int) -> int:
    cap = os.environ.get("VECSIM_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            pass
    return max(1, min(n_jobs, limit))


def _eval_job(args):
    policy, config_dict, episodes, seed = args
    return evaluate_policy(policy, ScenarioConfig.from_dict(config_dict), episodes, seed)


def evaluate_seeds(policy, config: ScenarioConfig, episodes: int, seeds) -> list[Metrics]:
    """Evaluate ``policy`` on every seed; results come back in seed order."""
    jobs = [(policy, config.to_dict(), episodes, s) for s in seeds]
    n = workers_for(len(jobs))
    if n == 1:
        return [_eval_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_eval_job, jobs))


def train_policy(config: ScenarioConfig, kind: PolicyKind, episodes: int, seed: int,
                 hp: TrainConfig | None = None) -> Trained:
    hp = hp or TrainConfig()
    mode = "ddpg" if kind == PolicyKind.DDPG else "maddpg"
    hp = TrainConfig.from_dict({**hp.to_dict(), "episodes": episodes, "seed": seed, "mode": mode})
    return train_maddpg(lambda: VecEnv(config), hp)


def write_training_log(path, trained: Trained):
    cols = TRAINING_COLUMNS + [k for k in trained.log[0] if k.startswith("reward_")] if trained.log \
        else TRAINING_COLUMNS
    write_csv(path, cols, trained.log)


def run_experiment(config, policy: str, seeds, out_dir, checkpoint=None, episodes: int = 20,
                   train_episodes: int | None = None, train_config: TrainConfig | None = None):
    """Evaluate one policy on a list of seeds and write the run's files.

    Learned policies are trained first (seeded by the first seed) unless a
    checkpoint is given. Returns the list of per-seed :class:`Metrics`.
    """
    if not isinstance(config, ScenarioConfig):
        config = load_config(config)
    seeds = list(seeds)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = PolicyKind.parse(policy)
    target = kind.value
    trained = None
    hp = train_config or TrainConfig()
    if kind in (PolicyKind.MADDPG, PolicyKind.DDPG):
        if checkpoint:
            trained = load_checkpoint(checkpoint)
        else:
            n = hp.episodes if train_episodes is None else train_episodes
            trained = train_policy(config, kind, n, seeds[0], hp)
            write_training_log(out / "training_log.csv", trained)
            save_checkpoint(out / "model.npz", trained)
        target = trained
    results = evaluate_seeds(target, config, episodes, seeds)
    for m in results:
        m.policy = kind.value
    write_metrics(out, results)
    run = {
        "code_version": __version__, "policy": kind.value, "seeds": seeds,
        "eval_episodes": episodes, "checkpoint": str(checkpoint) if checkpoint else None,
        "config": config.to_dict(), "config_hash": config.digest(),
        "training": trained.hp.to_dict() if trained is not None else None,
    }
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump(run, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return results


def write_metrics(out: Path, results):
    write_csv(out / "metrics.csv", METRICS_COLUMNS, [metrics_row(m) for m in results])
    rows = [{"policy": m.policy, "seed": m.seed, **v} for m in results for v in m.vehicles]
    write_csv(out / "vehicle_metrics.csv", VEHICLE_COLUMNS, rows)
    rows = [{"policy": m.policy, "seed": m.seed, "episode": i, "mean_reward": r}
            for m in results for i, r in enumerate(m.episode_rewards)]
    write_csv(out / "rewards.csv", REWARD_COLUMNS, rows)


def read_metrics(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in METRICS_COLUMNS:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        return list(reader)


def compare(paths, out=None, stream=None) -> list[dict]:
    """Fleet means per file plus paired-seed differences against the first file."""
    if len(paths) < 2:
        raise SchemaError("compare needs at least two metrics files")
    stream = sys.stdout if stream is None else stream
    tables = [read_metrics(p) for p in paths]
    base = {r["seed"]: r for r in tables[0]}
    rows = []
    for path, table in zip(paths, tables):
        by_seed = {r["seed"]: r for r in table}
        common = [s for s in base if s in by_seed]
        row = {"file": str(path), "policy": table[0]["policy"] if table else "",
               "paired_seeds": len(common)}
        for m in COMPARE_METRICS:
            vals = [float(r[m]) for r in table]
            diffs = [float(by_seed[s][m]) - float(base[s][m]) for s in common]
            row[f"{m}"] = float(np.mean(vals)) if vals else float("nan")
            row[f"{m}_diff"] = float(np.mean(diffs)) if diffs else float("nan")
            row[f"{m}_pos"] = sum(d > 0 for d in diffs)
            row[f"{m}_neg"] = sum(d < 0 for d in diffs)
        rows.append(row)
    cols = ["file", "policy", "paired_seeds"]
    for m in COMPARE_METRICS:
        cols += [m, f"{m}_diff", f"{m}_pos", f"{m}_neg"]
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    if out is not None:
        write_csv(out, cols, rows)
    return rows


def make_fixtures(count: int, seed: int, out_dir) -> list[Path]:
    """Write ``count`` micro-instances with their oracle solution embedded."""
    if not 0 <= count <= 10_000:
        raise ValueError("count must lie in [0, 10000]")
    from .scenario import stream
    rng = stream(seed, "fixtures")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        snap = random_micro_instance(rng)
        result = brute_force_best(snap)
        p = out / f"fixture_{i:04d}.json"
        p.write_text(dumps_fixture(snap, result) + "\n", encoding="utf-8")
        paths.append(p)
    return paths
