#!/usr/bin/env python3
"""Median cost table for every deployment flavor at one grid point.

Answers the deployment question directly: what do the crypto paths cost
next to the enclave paths, and what does query confidentiality add on
top. OT flavors interleave computation with communication, so their
split columns are blank and only the total is comparable.

    python3 scripts/compare_flavors.py --parties 50 --db-size 10000 \
        --reps 10 --out flavors.csv
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from secagg.bench import (BENCH_VARIANTS, BenchSpec, emit_csv,
                          median_metrics, run_bench)
from secagg.group import DEFAULT_GROUP


def _col(value, width=10):
    if value is None:
        return " " * (width - 1) + "-"
    if isinstance(value, float):
        return f"{value:{width}.4f}"
    return f"{value:{width}}"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variants", default=",".join(BENCH_VARIANTS))
    ap.add_argument("--parties", type=int, default=50)
    ap.add_argument("--db-size", type=int, default=10000)
    ap.add_argument("--k", type=int, default=16)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--group", default=DEFAULT_GROUP)
    ap.add_argument("--out", default="flavors.csv")
    args = ap.parse_args()

    spec = BenchSpec(
        variants=tuple(args.variants.split(",")),
        party_counts=(args.parties,),
        db_sizes=(args.db_size,),
        k_candidates=args.k,
        repetitions=args.reps,
        seed=args.seed,
        group_id=args.group,
        gen_bound=50,
        timeout=120.0)
    rows = run_bench(spec)
    emit_csv(rows, args.out)
    print(f"{len(rows)} rows -> {args.out}\n")

    print(f"{'flavor':10s} {'total_s':>10s} {'compute_s':>10s} "
          f"{'comm_s':>10s} {'bytes':>10s} {'payload':>10s}")
    order = {v: i for i, v in enumerate(spec.variants)}
    medians = sorted(median_metrics(rows), key=lambda r: order[r.variant])
    for row in medians:
        print(f"{row.variant:10s} {_col(row.total_s)} {_col(row.compute_s)} "
              f"{_col(row.comm_s)} {_col(row.bytes_total)} "
              f"{_col(row.payload_bytes)}")


if __name__ == "__main__":
    main()
