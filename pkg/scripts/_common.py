"""Shared argument handling for the experiment scripts."""

import argparse
import logging
from pathlib import Path

from vaproxy.config import load_config


def parse(description, **extra):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--macro-runs", type=int)
    for name, kwargs in extra.items():
        p.add_argument(f"--{name.replace('_', '-')}", **kwargs)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    cfg = load_config(args.config, macro_runs=args.macro_runs)
    args.out.mkdir(parents=True, exist_ok=True)
    return args, cfg
