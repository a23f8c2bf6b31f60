"""Command-line front end: ``sdecert <command> [--config PATH] [overrides]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, RunConfig
from .evt import EstimatorFailure
from .pipeline import COMMANDS, run
from .presets import PRESETS, SCALES, preset

EXIT_CONFIG = 2
EXIT_ESTIMATOR = 3


def _common(p, example=True):
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    if example:
        p.add_argument("--example", choices=sorted(PRESETS),
                       help="start from a packaged example config")
    p.add_argument("--scale", choices=SCALES, default=None, help="preset scale (default desk)")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--workers", type=int, help="worker processes (overrides $SDECERT_WORKERS)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                   help="override a config entry, e.g. --set n_pairs=500 --set coupling.kind='\"maximal\"'")
    p.add_argument("-q", "--quiet", action="store_true")


_HELP = {
    "finite-error": "estimate the fine/coarse finite-time error E",
    "contraction": "estimate the contraction factor alpha from coupled pairs",
    "tail-rate": "fit the exponential tail rate of coupling times",
    "certify": "finite error + contraction -> certified bound",
    "rough": "finite error + tail rate -> rough bound",
    "validate": "compare a sampled invariant density with the analytic one",
}


def build_parser():
    ap = argparse.ArgumentParser(prog="sdecert",
                                 description="Certified Wasserstein bounds for SDE invariant measures.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _common(sub.add_parser(name, help=_HELP[name]))
    rp = sub.add_parser("reproduce", help="run a packaged example end to end")
    rp.add_argument("example", choices=sorted(PRESETS))
    _common(rp, example=False)
    rp.add_argument("--validate", action="store_true", help="also run the density validation")
    cp = sub.add_parser("show-config", help="print the resolved configuration")
    _common(cp)
    return ap


def _apply_set(cfg: RunConfig, items) -> RunConfig:
    d = cfg.to_dict()
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = d
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown config section {p!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return RunConfig.from_dict(d)


def resolve_config(args) -> RunConfig:
    example = getattr(args, "example", None)
    if args.config:
        cfg = RunConfig.load(args.config)
    elif example:
        cfg = preset(example, args.scale or "desk")
    else:
        cfg = RunConfig()
    cfg = _apply_set(cfg, args.set)
    cfg = cfg.updated(seed=args.seed, workers=args.workers, out=args.out)
    return cfg.check()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        if args.command == "show-config":
            print(cfg.to_json())
            return 0
        if args.command == "reproduce":
            command = "certify" if cfg.mode == "certified" else "rough"
            summary = run(command, cfg)
            if args.validate:
                run("validate", cfg, out=cfg.out + "/validate")
        else:
            summary = run(args.command, cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except EstimatorFailure as err:
        print(f"estimator failure: {err}", file=sys.stderr)
        return EXIT_ESTIMATOR
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(_headline(summary), sort_keys=True))
    return 0


def _headline(s: dict) -> dict:
    keys = ("command", "status", "bound", "rough_bound", "mode", "epsilon", "config_hash")
    out = {k: s[k] for k in keys if k in s}
    for section, fields in (("finite_error", ("E",)), ("contraction", ("alpha", "max_r")),
                            ("tail", ("gamma",)), ("validate", ("tv", "tv_extrapolated"))):
        for f in fields:
            if f in s.get(section, {}):
                out[f] = s[section][f]
    return out


if __name__ == "__main__":
    sys.exit(main())
