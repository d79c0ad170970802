"""``vecsim`` command line: run, compare, fixtures, train, eval."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .baselines import PolicyKind
from .config import ConfigError, desk_config, load_config
from .harness import (SchemaError, compare, evaluate_seeds, make_fixtures, parse_seeds,
                      run_experiment, train_policy, write_metrics, write_training_log)
from .learn import CheckpointError, TrainConfig, load_checkpoint, save_checkpoint

EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_SCHEMA = 2, 3, 4


def _config(path):
    return desk_config() if path is None else load_config(path)


def _train_config(args) -> TrainConfig:
    hp = TrainConfig()
    if getattr(args, "train_config", None):
        import json
        with open(args.train_config, encoding="utf-8") as fh:
            hp = TrainConfig.from_dict({**hp.to_dict(), **json.load(fh)})
    return hp


def cmd_run(args):
    run_experiment(_config(args.config), args.policy, parse_seeds(args.seeds), args.out,
                   checkpoint=args.checkpoint, episodes=args.eval_episodes,
                   train_episodes=args.episodes, train_config=_train_config(args))
    print(f"wrote {Path(args.out) / 'metrics.csv'}")


def cmd_compare(args):
    compare(args.files, out=args.out)


def cmd_fixtures(args):
    paths = make_fixtures(args.count, args.seed, args.out)
    print(f"wrote {len(paths)} fixtures to {args.out}")


def cmd_train(args):
    kind = PolicyKind.parse(args.policy)
    if kind not in (PolicyKind.MADDPG, PolicyKind.DDPG):
        raise SystemExit(f"train supports MADDPG and DDPG, not {kind.value}")
    seed = parse_seeds(args.seeds)[0]
    hp = _train_config(args)
    episodes = hp.episodes if args.episodes is None else args.episodes
    trained = train_policy(_config(args.config), kind, episodes, seed, hp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_training_log(out / "training_log.csv", trained)
    ck = Path(args.checkpoint) if args.checkpoint else out / "model.npz"
    save_checkpoint(ck, trained)
    print(f"wrote {ck}")


def cmd_eval(args):
    if not args.checkpoint:
        raise CheckpointError("eval needs --checkpoint")
    trained = load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = evaluate_seeds(trained, _config(args.config), args.eval_episodes,
                             parse_seeds(args.seeds))
    for m in results:
        m.policy = trained.hp.mode.upper()
    write_metrics(out, results)
    print(f"wrote {out / 'metrics.csv'}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vecsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, policy=True):
        sp.add_argument("--config", help="scenario JSON (default: built-in desk preset)")
        if policy:
            sp.add_argument("--policy", default="EDG", help="AL, AV, RD, EDG, DDPG or MADDPG")
        sp.add_argument("--seeds", default="0", help="inclusive range a..b")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--checkpoint", help="model checkpoint (.npz)")
        sp.add_argument("--episodes", type=int, help="training episodes")
        sp.add_argument("--eval-episodes", type=int, default=20, help="evaluation episodes per seed")
        sp.add_argument("--train-config", help="JSON with training hyperparameters")

    common(sub.add_parser("run", help="train if needed, evaluate, write metrics"))
    common(sub.add_parser("train", help="train MADDPG or DDPG and save a checkpoint"))
    common(sub.add_parser("eval", help="evaluate a checkpoint"), policy=False)
    sp = sub.add_parser("compare", help="paired comparison of metrics files")
    sp.add_argument("files", nargs="+")
    sp.add_argument("--out", help="also write the table as CSV")
    sp = sub.add_parser("fixtures", help="write oracle micro-instance fixtures")
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="fixtures")
    return p


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "fixtures": cmd_fixtures,
            "train": cmd_train, "eval": cmd_eval}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
