"""``darqn`` command line: train, eval, gan {gen-data,train,eval}, plot.

Exit status is 0 on success, 2 for configuration or input problems and 3 when
training diverges numerically.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import gan as G
from .config import load_run_config
from .errors import ConfigError, ContractError, DimensionError, NumericError
from .nn import load_checkpoint
from .plotting import plot_attention, plot_learning_curves
from .runner import BASELINES, GreedyPolicy, evaluate, train, write_attention_csv, write_csv

log = logging.getLogger("darqn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
GAN_HISTORY_HEADER = "# darqn gan losses v1"


def _common(p):
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. agent.learning_rate=3e-4")


def build_parser():
    parser = argparse.ArgumentParser(prog="darqn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a Q-network over the configured curriculum")
    _common(p)
    p.add_argument("--variant", choices=["dqn", "drqn", "drqn_ta"])
    p.add_argument("--world", help="single training world (ignored when a curriculum is configured)")
    p.add_argument("--steps", type=int, help="total environment steps")

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint or a baseline")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint file from 'train'")
    p.add_argument("--baseline", choices=sorted(BASELINES))
    p.add_argument("--world")
    p.add_argument("--episodes", type=int)
    p.add_argument("--attention", action="store_true", help="also write the first episode's attention weights")

    p = sub.add_parser("gan", help="depth-from-pseudo-RGB translation network")
    gsub = p.add_subparsers(dest="gan_command", required=True)
    q = gsub.add_parser("gen-data", help="render a pair dataset")
    _common(q)
    q.add_argument("--count", type=int, default=1000)
    q = gsub.add_parser("train", help="train generator and discriminator on a pair dataset")
    _common(q)
    q.add_argument("--data", required=True)
    q.add_argument("--epochs", type=int)
    q = gsub.add_parser("eval", help="L1 and adversarial loss of a trained model on a pair dataset")
    _common(q)
    q.add_argument("--data", required=True)
    q.add_argument("--model", required=True)

    p = sub.add_parser("plot", help="SVG learning curves or attention strip from CSV logs")
    _common(p)
    p.add_argument("kind", choices=["curves", "attention"])
    p.add_argument("csv", nargs="+")
    p.add_argument("--labels", nargs="*")
    p.add_argument("--window", type=int, default=50)
    return parser


def _run_config(args, **overrides):
    return load_run_config(args.config, {"seed": args.seed, "out": args.out, **overrides}, args.set)


def _progress(step, rows):
    eps = [r["steps_until_collision"] for r in rows[-20:] if r["event"] == "episode"]
    if eps and step % 10_000 == 0:
        log.info("step %d: mean steps until collision (last %d) %.1f", step, len(eps), np.mean(eps))


def cmd_train(args):
    overrides = {"variant": args.variant, "world": args.world}
    if args.steps is not None:
        args.set = args.set + [f"agent.total_steps={args.steps}"]
    rc = _run_config(args, **overrides)
    cfg = rc.train_config()
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(rc.to_dict(), sort_keys=True))
    log.info("training %s for %d steps over %s", cfg.agent.net.variant, cfg.total_steps,
             [s.world for s in cfg.stages])
    res = train(cfg, out, progress=_progress)
    print(f"wrote {len(res.checkpoints)} checkpoint(s) and {out / 'train_log.csv'}")
    return EXIT_OK


def cmd_eval(args):
    rc = _run_config(args, world=args.world, episodes=args.episodes, checkpoint=args.checkpoint)
    seed = rc.require_seed()
    env = rc.env_config()
    if args.baseline:
        policy, stem = BASELINES[args.baseline](), args.baseline
    elif rc.checkpoint:
        params, net, _ = load_checkpoint(rc.checkpoint)
        if net.input_shape != env.observation_shape:
            raise ConfigError(f"checkpoint expects observations {net.input_shape}, "
                              f"environment produces {env.observation_shape}")
        policy, stem = GreedyPolicy(params, net), net.variant
    elif rc.variant in BASELINES:
        policy, stem = BASELINES[rc.variant](), rc.variant
    else:
        raise ConfigError("eval needs --checkpoint or a baseline policy")
    result = evaluate(policy, rc.world, rc.episodes, seed, env, record_attention=args.attention)
    report, attention = result if args.attention else (result, None)
    out = Path(rc.out)
    report.write(out, f"eval_{stem}")
    if attention:
        write_attention_csv(out / f"attention_{stem}.csv", attention)
    print(report.summary(), end="")
    return EXIT_OK


def cmd_gan(args):
    rc = _run_config(args)
    seed = rc.require_seed()
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = rc.gan_config()
    if args.gan_command == "gen-data":
        pairs = G.generate_pairs(args.count, seed, size=cfg.image_size)
        path = out / "pairs.bin"
        G.save_pairs(path, pairs, {"seed": seed})
        print(f"wrote {len(pairs)} pairs to {path}")
    elif args.gan_command == "train":
        if args.epochs is not None:
            cfg.epochs = args.epochs
        pairs = G.load_pairs(args.data)
        train_pairs, held = G.split_pairs(pairs, cfg.heldout_fraction, seed)
        result = G.train_gan(train_pairs, held, cfg, seed,
                             progress=lambda r: log.info("epoch %d: heldout L1 %.4f", r["epoch"], r["heldout_L1"]))
        G.save_gan(out / "gan.ckpt", result, cfg)
        write_csv(out / "gan_history.csv", GAN_HISTORY_HEADER, G.HISTORY_FIELDS, result.history)
        last = result.history[-1]
        print(f"held-out L1 {result.history[0]['heldout_L1']:.4f} -> {last['heldout_L1']:.4f}")
    else:
        gen, disc, mcfg = G.load_gan(args.model)
        pairs = G.load_pairs(args.data)
        l1, adv = G.evaluate_gan(pairs, gen, disc, mcfg)
        write_csv(out / "gan_eval.csv", GAN_HISTORY_HEADER, ["pairs", "L1", "cGAN"],
                  [{"pairs": len(pairs), "L1": l1, "cGAN": adv}])
        print(f"pairs: {len(pairs)}  L1: {l1:.5f}  cGAN: {adv:.5f}")
    return EXIT_OK


def cmd_plot(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "curves":
        path = out / "learning_curves.svg"
        plot_learning_curves(args.csv, path, args.labels, args.window)
    else:
        path = out / "attention.svg"
        plot_attention(args.csv[0], path)
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gan": cmd_gan, "plot": cmd_plot}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericError as e:
        print(f"darqn: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ContractError, DimensionError, FileNotFoundError) as e:
        print(f"darqn: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
