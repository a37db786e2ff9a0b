"""Command-line entry points: ``run``, ``eval``, and ``inspect``.

Exit codes: 0 on success (including a run that stopped on divergence — that
is a recorded result, not a crash), 2 for an invalid config with a diagnostic
on stderr, and 1 for a runtime failure (partial artifacts are left in place
for post-mortem).
"""

import argparse
import json
import sys

from .experiment import (
    evaluate_checkpoint,
    inspect_checkpoint,
    run_experiment,
)
from .model import ConfigError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="latentplan",
        description="Train, evaluate, and inspect latent-space planning agents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train per a JSON config")
    run_p.add_argument("config", help="path to the experiment config (JSON)")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default=None, help="override the output directory")
    run_p.add_argument("--env-steps", type=int, default=None,
                       help="override the total environment-step budget")

    eval_p = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    eval_p.add_argument("checkpoint", help="checkpoint directory (or run directory)")
    eval_p.add_argument("config", help="the experiment config the checkpoint was trained with")
    eval_p.add_argument("--episodes", type=int, default=10, help="evaluation episode count")
    eval_p.add_argument("--seed", type=int, default=None, help="override the config seed")

    ins_p = sub.add_parser("inspect", help="summarize a checkpoint's contents")
    ins_p.add_argument("checkpoint", help="checkpoint directory (or run directory)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            run_experiment(args.config, seed=args.seed, out=args.out,
                           env_steps=args.env_steps)
        elif args.command == "eval":
            result = evaluate_checkpoint(args.checkpoint, args.config,
                                         episodes=args.episodes, seed=args.seed)
            print(json.dumps(result, indent=1))
        else:
            print(json.dumps(inspect_checkpoint(args.checkpoint), indent=1))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: map failures to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
