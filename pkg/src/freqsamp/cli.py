"""Command-line entry point.

Every subcommand reads a JSON config (schema ``flamo-spec-1``); keys left
out take the defaults listed in :data:`freqsamp.apps.runs.DEFAULTS`.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigurationError, DomainError, NumericalError, ShapeError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SEED_ENV = "FREQSAMP_SEED"

log = logging.getLogger("freqsamp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freqsamp", description="Differentiable frequency-sampled audio systems")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fdn-optim": "optimize a colorless FDN, then render it with GEQ attenuation",
        "aa-optim": "flatten an active-acoustics feedback loop",
        "render": "render a saved system to WAV",
        "gradcheck": "compare gradients against finite differences",
        "metrics": "echo density of a WAV or loop eigenvalue statistics",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="JSON config file (defaults apply when omitted)")
        p.add_argument("--out", type=Path, default=Path("out") / name, help="output directory")
        p.add_argument("--seed", type=int, help=f"overrides ${SEED_ENV} and the config seed")
        p.add_argument("--antialias-db", type=float, dest="antialias_db",
                       help="envelope attenuation at the frame end in dB; 0 disables")
    return parser


def load_config(command: str, path: Path | None, seed=None, antialias_db=None) -> dict:
    from .apps.runs import merge_config

    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None
    cfg = merge_config(command, user)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise ConfigurationError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    if seed is not None:
        cfg["seed"] = seed
    if antialias_db is not None:
        if "antialias_db" not in cfg:
            raise ConfigurationError(f"{command} has no anti-aliasing option")
        cfg["antialias_db"] = antialias_db
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .apps.runs import RUNNERS

    try:
        cfg = load_config(args.command, args.config, args.seed, args.antialias_db)
        summary = RUNNERS[args.command](cfg, args.out)
    except (ConfigurationError, ShapeError, DomainError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    print(json.dumps(summary, indent=1, sort_keys=True))
    if summary.get("status") == "aborted" or summary.get("failed"):
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
