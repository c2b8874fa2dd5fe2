#!/usr/bin/env python3
"""Validate a sweep CSV written by `textgraph sweep-lambda`.

Checks the header, that lambda is strictly increasing inside [0, 1] and that
every accuracy is empty (no such split) or inside [0, 1]. Prints the best
lambda by test accuracy, or by dev accuracy with --by dev.
"""

import argparse
import csv
import math
import sys

HEADER = ["lambda", "dev_acc", "test_acc"]


def parse_acc(text, where):
    if text == "":
        return math.nan
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{where}: accuracy {value} outside [0, 1]")
    return value


def read_sweep(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != HEADER:
            raise ValueError(f"header {header!r}, expected {HEADER!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValueError(f"line {lineno}: {len(row)} fields")
            lam = float(row[0])
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"line {lineno}: lambda {lam} outside [0, 1]")
            if rows and lam <= rows[-1][0]:
                raise ValueError(f"line {lineno}: lambda {lam} not increasing")
            rows.append((lam, parse_acc(row[1], f"line {lineno}"), parse_acc(row[2], f"line {lineno}")))
    if not rows:
        raise ValueError("no rows")
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv")
    parser.add_argument("--by", choices=["dev", "test"], default="test")
    parser.add_argument("--rows", type=int, help="expected number of rows")
    args = parser.parse_args(argv)
    try:
        rows = read_sweep(args.csv)
        if args.rows is not None and len(rows) != args.rows:
            raise ValueError(f"{len(rows)} rows, expected {args.rows}")
    except (OSError, ValueError) as e:
        print(f"{args.csv}: {e}", file=sys.stderr)
        return 1
    col = 1 if args.by == "dev" else 2
    scored = [r for r in rows if not math.isnan(r[col])]
    if scored:
        best = max(scored, key=lambda r: r[col])
        print(f"{len(rows)} rows; best {args.by}_acc {best[col]:.4f} at lambda {best[0]:g}")
    else:
        print(f"{len(rows)} rows; no {args.by} accuracy recorded")
    return 0


if __name__ == "__main__":
    sys.exit(main())
