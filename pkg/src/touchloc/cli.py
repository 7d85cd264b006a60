"""Command line: ``touchloc run | check | bench | certify``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

from touchloc import oracle
from touchloc.checks import run_property_suite
from touchloc.config import ConfigError, load_config
from touchloc.experiment import run_bench, run_experiment, write_bench
from touchloc.rng import stream


def _seed_list(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("need at least one seed")
    return seeds


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    t0 = time.perf_counter()
    res = run_experiment(cfg, args.out, args.seeds)
    print(f"wrote {len(res.logs)} episodes to {res.out_dir} in {time.perf_counter() - t0:.1f} s")
    last = max(r[1] for r in res.summary)
    for r in res.summary:
        if r[1] in (0, last):
            print(f"  {r[0]:<7} step {r[1]}: mean cov eig sum {r[2]:.5f}")
    return 0


def cmd_check(args) -> int:
    report = run_property_suite(args.seed)
    print(report.text())
    return 0 if report.ok else 1


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    res = run_bench(cfg, args.seeds)
    print(res.table())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_bench(res, args.out)
    return 0 if res.ordering_ok else 1


def certify_instances(n: int, seed: int = 0):
    """Certificates for ``n`` random tiny instances, alternating HP and WHP weightings."""
    rng = stream(seed, "certify")
    rows = []
    while len(rows) < n:
        kind = "hp" if len(rows) % 2 == 0 else "whp"
        problem = oracle.build_noisy_problem(oracle.random_tiny_instance(rng, kind))
        q = oracle.random_target(problem, rng)
        if q is None:
            continue
        rows.append((len(rows), kind, oracle.certify_bounds(problem, q)))
    return rows


def cmd_certify(args) -> int:
    rows = certify_instances(args.instances, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance", "weighting"] + oracle.CERTIFICATE_COLUMNS)
        for i, kind, certs in rows:
            for c in certs:
                w.writerow([i, kind] + c.row())
    certs = [c for _, _, cs in rows for c in cs]
    failed = sum(not c.passed for c in certs)
    worst = max(c.greedy_cost / c.optimal_cost for c in certs if c.optimal_cost > 0)
    print(f"{len(rows)} instances, {len(certs)} certificates, {failed} failed; "
          f"worst greedy/optimal = {worst:.3f}; csv: {out}")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="touchloc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a seeded experiment and write CSVs")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    r.add_argument("--seeds", type=_seed_list, default=None, help="e.g. 0,1,2")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run the randomized property suite")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check)

    b = sub.add_parser("bench", help="time one selection per metric on identical inputs")
    b.add_argument("--config", required=True)
    b.add_argument("--seeds", type=_seed_list, default=None)
    b.add_argument("--out", default=None, help="optional CSV path")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("certify", help="greedy vs exhaustive optimal policies on tiny instances")
    e.add_argument("--instances", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="runs/certify/certificates.csv")
    e.set_defaults(func=cmd_certify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
