#!/usr/bin/env python3
"""Covariance decay per scheme at desk scale.

Runs every scheme on shared action sets and priors, writes the episode and
summary CSVs, and prints the per-step mean covariance eigenvalue sum with
its ratio to the initial value.

    python scripts/covariance_decay.py [--config configs/decay.toml] [--out runs/decay]
"""
import argparse
import time

from touchloc.config import load_config
from touchloc.experiment import run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/decay.toml")
    p.add_argument("--out", default=None)
    args = p.parse_args()
    cfg = load_config(args.config)
    t0 = time.perf_counter()
    res = run_experiment(cfg, args.out)
    steps = sorted({r[1] for r in res.summary})
    by = {(r[0], r[1]): r for r in res.summary}
    print(f"{len(cfg.seeds)} seeds, {cfg.particles} particles, {cfg.n_actions} actions "
          f"({time.perf_counter() - t0:.1f} s); mean cov eig sum [95% CI]")
    for scheme in cfg.metrics:
        first = by[(scheme, 0)][2]
        cells = [f"{by[(scheme, s)][2]:.4f}" for s in steps]
        last = by[(scheme, steps[-1])]
        print(f"  {scheme:<7} " + " ".join(cells)
              + f"   final/initial {last[2] / first:.3f} [{last[3] / first:.3f}, {last[4] / first:.3f}]")
    print(f"csv: {res.out_dir / 'summary.csv'}")


if __name__ == "__main__":
    main()
