"""Command line: validate configs, run simulations/verifications, emit figures.

    forwardnash validate CONFIG
    forwardnash simulate CONFIG [--output-dir DIR] [--seed N] [--threads N]
    forwardnash verify   CONFIG [...]
    forwardnash figures  CONFIG [...]

CONFIG is a TOML path or the name of a bundled scenario (paper_figures,
verification_suite). Exit codes: 0 all good, 1 verification failure,
2 config/usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, bundled_scenario_path, load_scenario
from .runner import run_scenario

_VERBS = {"simulate": ("simulate",), "verify": ("verify",), "figures": ("figures",)}


def _resolve(config: str) -> Path:
    p = Path(config)
    if p.exists():
        return p
    if "/" not in config and not config.endswith(".toml"):
        return bundled_scenario_path(config)
    raise ConfigError(f"{config}: no such scenario file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forwardnash",
        description="Simulation and verification of forward relative-performance equilibria.")
    sub = parser.add_subparsers(dest="verb", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario TOML path or bundled scenario name")
    common.add_argument("--output-dir", default="runs", help="run directory root")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--threads", type=int, default=None, help="cap kernel threads")
    common.add_argument("-q", "--quiet", action="store_true", help="suppress progress logging")
    for verb in ("simulate", "verify", "figures"):
        sub.add_parser(verb, parents=[common])
    val = sub.add_parser("validate")
    val.add_argument("config")
    val.add_argument("-q", "--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        path = _resolve(args.config)
        if args.verb == "validate":
            cfg = load_scenario(path)
            print(f"{path}: ok (scenario {cfg.name!r}, kind {cfg.kind}, "
                  f"{len(cfg.agents)} agents, {len(cfg.figures)} figures, "
                  f"{len(cfg.verification)} verification tasks)")
            return 0
        result = run_scenario(path, steps=_VERBS[args.verb], out_dir=args.output_dir,
                              seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for name, rep in result.reports:
        print(f"[{rep.verdict.upper():7s}] {name}: statistic={rep.statistic:.6g} "
              f"(se={rep.mc_std_error:.3g}, n={rep.n_paths})")
    print(f"run directory: {result.run_dir}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
