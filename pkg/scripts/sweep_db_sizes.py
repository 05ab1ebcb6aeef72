#!/usr/bin/env python3
"""Sweep the per-party dataset size at a fixed party count.

The point of the sweep is what does NOT move: round traffic depends on
the group and the fleet, not on how much data sits behind each party,
so the bytes columns must be identical across db sizes. Evaluation time
does grow with the data; the script prints both so the contrast is
visible.

    python3 scripts/sweep_db_sizes.py --variants v1,v6 \
        --db-sizes 1000,10000,100000 --out dbsizes.csv
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from secagg.bench import BenchSpec, emit_csv, median_metrics, run_bench
from secagg.group import DEFAULT_GROUP


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variants", default="v1,v6")
    ap.add_argument("--parties", type=int, default=50)
    ap.add_argument("--db-sizes", default="1000,10000,100000")
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--group", default=DEFAULT_GROUP)
    ap.add_argument("--out", default="dbsizes.csv")
    args = ap.parse_args()

    spec = BenchSpec(
        variants=tuple(args.variants.split(",")),
        party_counts=(args.parties,),
        db_sizes=tuple(int(x) for x in args.db_sizes.split(",")),
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
        medians = [r for r in median_metrics(rows) if r.variant == variant]
        drift = len({r.bytes_total for r in medians}) > 1
        print(f"\n{variant}: traffic {'DRIFTS' if drift else 'flat'} "
              f"across db sizes")
        for row in sorted(medians, key=lambda r: r.db_size):
            print(f"  db={row.db_size:>8}: {row.bytes_total} bytes, "
                  f"{row.total_s:.3f}s")


if __name__ == "__main__":
    main()
