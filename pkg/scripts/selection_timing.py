#!/usr/bin/env python3
"""Per-selection wall time for HP, WHP and IG on identical action sets and priors.

    python scripts/selection_timing.py [--config configs/bench.toml] [--out runs/bench/bench.csv]
"""
import argparse
from pathlib import Path

from touchloc.config import load_config
from touchloc.experiment import run_bench, write_bench


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/bench.toml")
    p.add_argument("--out", default="runs/bench/bench.csv")
    args = p.parse_args()
    res = run_bench(load_config(args.config))
    print(res.table())
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_bench(res, args.out)


if __name__ == "__main__":
    main()
