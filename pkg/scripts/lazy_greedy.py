#!/usr/bin/env python3
"""Lazy vs naive greedy: chosen actions and gain evaluations per round.

    python scripts/lazy_greedy.py [--config configs/lazy.toml]
"""
import argparse

from touchloc.config import load_config
from touchloc.experiment import compare_lazy, lazy_savings


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/lazy.toml")
    args = p.parse_args()
    cfg = load_config(args.config)
    comps = compare_lazy(cfg)
    for c in comps:
        print(f"seed {c.seed:<3} {c.scheme:<4} match={c.match!s:<5} naive={c.naive_evals} lazy={c.lazy_evals}")
    n_match = sum(c.match for c in comps)
    print(f"|A| = {cfg.n_actions}: {n_match}/{len(comps)} identical sequences; "
          f"evaluations saved over rounds 2+: {lazy_savings(comps):.1%}")


if __name__ == "__main__":
    main()
