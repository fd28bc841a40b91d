"""Command-line front end.

Subcommands:
    run              full episode (auction, placement, both loops)
    baseline         same episode under uniformly random actions
    auction          one-shot auction from an instance JSON file
    compare-auction  greedy allocation vs. the exhaustive oracle
    write-config     dump the default (or full-scale) config JSON

The RANSLICE_LOG_LEVEL environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import auction as arb
from . import runner
from .config import ConfigError, ScenarioConfig, desk_config, full_scale_config

log = logging.getLogger("ranslice")


def _load_config(args) -> ScenarioConfig:
    if getattr(args, "full_scale", False):
        cfg = full_scale_config()
    elif args.config:
        cfg = ScenarioConfig.from_file(args.config)
    else:
        cfg = desk_config()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "steps", None) is not None:
        cfg.steps = args.steps
    if getattr(args, "deterministic", False):
        cfg.deterministic = True
        cfg.actors = 1
    if getattr(args, "actors", None) is not None:
        cfg.actors = args.actors
        if args.actors > 1:
            cfg.deterministic = False
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    return cfg.validate()


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    log.info("running %d steps (seed %d) -> %s", cfg.steps, cfg.seed, cfg.out_dir)
    report = runner.run(cfg)
    print(json.dumps({"out_dir": report.out_dir, "summary": report.summary}, indent=2))
    return 0 if report.ok else 1


def _cmd_baseline(args) -> int:
    cfg = _load_config(args)
    report = runner.baseline_random(cfg)
    print(json.dumps({"out_dir": report.out_dir, "summary": report.summary}, indent=2))
    return 0 if report.ok else 1


def _cmd_auction(args) -> int:
    with open(args.input) as fh:
        bids, aconfig = arb.instance_from_json(fh.read())
    outcome = arb.vcg_payments(arb.determine_winners(bids, aconfig), bids, aconfig)
    payload = arb.outcome_to_json(outcome, bids)
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_compare(args) -> int:
    if args.input:
        with open(args.input) as fh:
            bids, aconfig = arb.instance_from_json(fh.read())
        table = runner.compare_auction_instance(bids, aconfig)
    else:
        cfg = _load_config(args)
        table = runner.compare_auction(cfg)
    print(json.dumps(table, indent=2))
    g, o = table["greedy"], table["oracle"]
    print(
        f"# greedy : welfare {g['welfare']:.1f}  allocated {g['allocated_fraction']:.1%}",
        file=sys.stderr,
    )
    print(
        f"# oracle : welfare {o['welfare']:.1f}  allocated {o['allocated_fraction']:.1%}",
        file=sys.stderr,
    )
    return 0


def _cmd_write_config(args) -> int:
    cfg = full_scale_config() if args.full_scale else desk_config()
    text = cfg.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ranslice", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_opts(p):
        p.add_argument("--config", help="scenario config JSON file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--deterministic", action="store_true", help="single-threaded fixed-order mode")
        p.add_argument("--actors", type=int, default=None, help="loop-1 actor threads")
        p.add_argument("--out", help="output directory for metrics/summary/checkpoint")
        p.add_argument("--full-scale", action="store_true", help="100k-step long-run profile")

    p_run = sub.add_parser("run", help="full training episode")
    add_run_opts(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_base = sub.add_parser("baseline", help="random-policy episode")
    add_run_opts(p_base)
    p_base.set_defaults(func=_cmd_baseline)

    p_auc = sub.add_parser("auction", help="one-shot auction from JSON")
    p_auc.add_argument("--input", required=True, help="auction instance JSON file")
    p_auc.add_argument("--out", help="write outcome JSON here as well")
    p_auc.set_defaults(func=_cmd_auction)

    p_cmp = sub.add_parser("compare-auction", help="greedy vs. exhaustive oracle")
    p_cmp.add_argument("--input", help="auction instance JSON file (default: scenario instance)")
    p_cmp.add_argument("--config", help="scenario config JSON file")
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.set_defaults(func=_cmd_compare)

    p_cfg = sub.add_parser("write-config", help="print the default config JSON")
    p_cfg.add_argument("--full-scale", action="store_true")
    p_cfg.add_argument("--out")
    p_cfg.set_defaults(func=_cmd_write_config)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RANSLICE_LOG_LEVEL", "INFO").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
