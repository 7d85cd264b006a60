#!/usr/bin/env python3
"""Greedy vs exhaustively optimal policies on random tiny instances, with cost bounds.

    python scripts/certify.py [--instances 50] [--out runs/certify/certificates.csv]
"""
import argparse
import sys

from touchloc.cli import main as cli_main


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/certify/certificates.csv")
    args = p.parse_args()
    return cli_main(["certify", "--instances", str(args.instances), "--seed", str(args.seed),
                     "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
