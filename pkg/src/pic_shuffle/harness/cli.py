"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 amplification infeasible.
"""
from __future__ import annotations

import argparse
import sys
from typing import Sequence

from ..amplification import InfeasibleAmplificationError
from . import experiments as ex
from .config import SCENARIOS, ConfigError, build_config, parse_value, read_config_file
from .data import DataError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3

# flag name -> help text; every flag is also a config-file key.
_FLAGS = {
    "mechanism": "mechanism id, comma list, or 'all'",
    "eps": "local budget(s), comma list; selects LDP mode",
    "eps-central": "central budget(s), comma list; selects PIC mode",
    "delta": "central delta (default 0.01/n; 1e-6 for rates)",
    "n": "group size(s) or population grid, comma list; '2^k' allowed",
    "groups": "number of groups",
    "tau": "serving or search radius in normalized units",
    "trials": "reports (randomize) or repeated seeds (other scenarios)",
    "seed": "base seed",
    "dataset": "id,x,y CSV file(s), comma list, one per group",
    "out": "write CSV rows here instead of stdout",
    "policy": "amplification population: full, minus-one, fraction=F",
    "dim": "data dimension",
    "domain": "ball or cube",
    "task": "protocol-demo task id",
    "samples": "Monte Carlo orderings for Shapley values",
    "clip": "gradient clipping bound c",
    "box": "source box xmin,xmax,ymin,ymax for dataset normalization",
    "deterministic-keys": "seed key generation from --seed (test mode)",
    "radius-mode": "minkowski radius: searched or formula",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pic-shuffle", description="PIC shuffle-model randomizers, amplification and experiments.")
    sub = parser.add_subparsers(dest="scenario", required=True, parser_class=_Parser)
    for name in SCENARIOS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value file; flags override it")
        for flag, help_text in _FLAGS.items():
            p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), default=None, help=help_text)
    return parser


def parse_config(argv: Sequence[str] | None = None):
    args = build_parser().parse_args(argv)
    file_values = read_config_file(args.config) if args.config else {}
    flags = {}
    for flag in _FLAGS:
        raw = getattr(args, flag.replace("-", "_"))
        if raw is not None:
            key, value = parse_value(flag, raw)
            flags[key] = value
    return build_config(args.scenario, file_values, flags)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(cfg) -> int:
    runners = {
        "randomize": ex.run_single_report,
        "amplify": ex.run_amplify,
        "crowdsourcing": ex.run_crowdsourcing,
        "social": ex.run_social,
        "incentive": ex.run_incentive,
        "rates": ex.run_rates,
    }
    if cfg.scenario == "protocol-demo":
        demo = ex.run_protocol_demo(cfg)
        for text in demo.transcripts:
            sys.stdout.write(text)
        if cfg.out:
            ex.write_rows(demo.rows, cfg.out)
        else:
            sys.stdout.write(ex.rows_to_csv(demo.rows))
        return EXIT_OK
    _emit(ex.rows_to_csv(runners[cfg.scenario](cfg)), cfg.out)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
        return run(cfg)
    except (ConfigError, DataError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleAmplificationError as exc:
        hint = f" (need n >= {exc.min_population})" if exc.min_population else ""
        print(f"amplification infeasible: {exc}{hint}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
