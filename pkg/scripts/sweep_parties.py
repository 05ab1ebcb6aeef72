#!/usr/bin/env python3
"""Sweep the party count and fit traffic and time against it.

Writes one CSV row per repetition and prints a least-squares line per
variant and metric. Traffic should come out linear in n with R^2 near
1; wall time is noisier but should trend the same way.

    python3 scripts/sweep_parties.py --variants v1,v6 \
        --parties 10,25,50,100,150 --reps 3 --out parties.csv
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from secagg.bench import (BenchSpec, emit_csv, fit_scalability,
                          median_metrics, run_bench)
from secagg.group import DEFAULT_GROUP


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variants", default="v1,v6")
    ap.add_argument("--parties", default="10,25,50,100,150")
    ap.add_argument("--db-size", type=int, default=100)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--group", default=DEFAULT_GROUP)
    ap.add_argument("--out", default="parties.csv")
    args = ap.parse_args()

    spec = BenchSpec(
        variants=tuple(args.variants.split(",")),
        party_counts=tuple(int(x) for x in args.parties.split(",")),
        db_sizes=(args.db_size,),
        k_candidates=args.k,
        repetitions=args.reps,
        seed=args.seed,
        group_id=args.group,
        gen_bound=50,
        timeout=120.0)
    rows = run_bench(spec)
    emit_csv(rows, args.out)
    print(f"{len(rows)} rows -> {args.out}")

    for variant in spec.variants:
        sub = [r for r in rows if r.variant == variant]
        for metric in ("bytes_total", "total_s"):
            fit = fit_scalability(sub, axis="n", metric=metric)
            print(f"{variant:10s} {metric:12s} "
                  f"slope {fit.slope:12.4g}  intercept {fit.intercept:12.4g}"
                  f"  R^2 {fit.r_squared:.4f}")
    for row in median_metrics(rows):
        print(f"median {row.variant} n={row.n}: "
              f"{row.total_s:.3f}s, {row.bytes_total} bytes")


if __name__ == "__main__":
    main()
