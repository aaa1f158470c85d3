"""Command-line entry point: train, evaluate, match, bench."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .engine import GameError, load_map
from .harness import PolicyAgent, bench, evaluate, make_agent, play_match, train
from .learner.checkpoint import CheckpointError, load_checkpoint

log = logging.getLogger("gridrts")


def _cmd_train(args) -> int:
    cfg = load_config(args.config)

    def report(row):
        if row["update"] % args.log_every == 0:
            log.info("update %d steps %d episodes %d shaped %s sparse %s entropy %.3f",
                     row["update"], row["env_steps"], row["episodes"], row["shaped_return"],
                     row["sparse_return"], row["entropy"])

    res = train(cfg, seed=args.seed, out_dir=args.out, max_updates=args.max_updates, on_update=report)
    print(f"trained {res.updates} updates ({res.env_steps} env steps); "
          f"metrics {res.metrics_path}, checkpoint {res.checkpoint_path}")
    return 0


def _cmd_evaluate(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    agent = PolicyAgent(ck, greedy=not args.sample, seed=args.seed)
    map_spec = load_map(args.map or f"basesWorkers{ck.arch.w}x{ck.arch.h}")
    pool = [p.strip() for p in args.pool.split(",") if p.strip()]
    rep = evaluate(agent, pool, map_spec, args.games, args.max_ticks, args.seed)
    print(rep.summary())
    if args.csv:
        Path(args.csv).write_text(rep.to_csv(args.seed))
    return 0


def _cmd_match(args) -> int:
    a = make_agent(args.a, args.seed)
    b = make_agent(args.b, args.seed)
    m = play_match(a, b, load_map(args.map), args.max_ticks, args.seed)
    print(f"{m.bot_a} vs {m.bot_b} on {m.map} (seed {m.seed}): winner {m.winner} after {m.ticks} ticks; "
          f"shaped returns {m.return_a:.1f} / {m.return_b:.1f}")
    return 0


def _cmd_bench(args) -> int:
    print(bench(load_config(args.config)).summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridrts", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run PPO from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p.add_argument("--out", default=None, help="override [run] out_dir")
    p.add_argument("--max-updates", type=int, default=None)
    p.add_argument("--log-every", type=int, default=10)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="play a checkpoint against a pool of bots")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pool", default="passive,random,randombiased,workerrush,lightrush")
    p.add_argument("--games", type=int, default=100)
    p.add_argument("--max-ticks", type=int, default=4000)
    p.add_argument("--map", default=None, help="defaults to basesWorkers<W>x<H> of the checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample", action="store_true", help="sample actions instead of greedy argmax")
    p.add_argument("--csv", default=None, help="write per-match results here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("match", help="play one game between two bots or checkpoints")
    p.add_argument("--a", required=True, help="bot name or ckpt:PATH")
    p.add_argument("--b", required=True)
    p.add_argument("--map", default="basesWorkers16x16")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-ticks", type=int, default=4000)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("bench", help="measure engine and pipeline throughput")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, GameError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
