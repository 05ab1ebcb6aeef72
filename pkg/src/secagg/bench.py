"""Benchmark harness: grids over variants, party counts, and DB sizes.

Each grid point gets one session (setup cost excluded, as keys and
attestation are a one-time cost) and `repetitions` measured rounds. One
CSV row per repetition; medians are computed downstream, never stored.

total_s is the aggregator's wall time from dispatch to final broadcast.
compute_s sums the instrumented crypto/TEE/evaluation sections across
all roles (every role runs in this process); comm_s is the remainder.
For OT-path runs the exchange interleaves computation and communication
so only total_s is reported and the split columns stay empty.

Every repetition is cross-checked against a plaintext oracle over the
reporting parties; a mismatch aborts the benchmark because timing a
wrong protocol is worse than no benchmark at all.

The plaintext bound is sized per grid point as db_size * gen_bound so
any subresult fits the decode window. Ciphertext and message sizes
depend only on the group, never on the bound, which is what makes the
traffic-vs-db-size invariance measurable at all.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, fields

import numpy as np

from .datastore import Dataset, Query, eval_query, generate_dataset
from .errors import ConfigError, InsufficientPoints, SecaggError
from .group import DEFAULT_GROUP
from .protocol import Mechanism, Session, SessionOptions, VariantConfig

BENCH_VARIANTS = ("v1", "v2", "v3", "v4", "v5", "v6",
                  "hetero", "hetero-ca", "baseline")

CSV_HEADER = ("variant,n,db_size,rep,total_s,compute_s,comm_s,"
              "bytes_total,payload_bytes,aggregate,ok")


@dataclass(frozen=True)
class BenchSpec:
    variants: tuple[str, ...] = ("v1",)
    party_counts: tuple[int, ...] = (10,)
    db_sizes: tuple[int, ...] = (10000,)
    k_candidates: int = 16
    t_rule: str = "all"
    repetitions: int = 10
    transport: str = "inproc"
    seed: int = 0
    group_id: str = DEFAULT_GROUP
    gen_bound: int = 100
    query_text: str = "SUM"
    query_id: int = 0
    timeout: float = 30.0


@dataclass(frozen=True)
class RoundMetrics:
    variant: str
    n: int
    db_size: int
    rep: int
    total_s: float
    compute_s: float | None
    comm_s: float | None
    bytes_total: int
    payload_bytes: int
    aggregate: int
    ok: bool


@dataclass(frozen=True)
class ScalabilityFit:
    slope: float
    intercept: float
    r_squared: float


def threshold_for(rule: str, n: int) -> int:
    if rule == "all":
        return n
    if rule == "majority":
        return n // 2 + 1
    if rule.startswith("fixed:"):
        return int(rule.split(":", 1)[1])
    raise ConfigError(f"unknown t-rule {rule!r}")


def config_for(variant: str, n: int, t: int, k: int) -> VariantConfig:
    """Map a bench variant token to a config. 'hetero' alternates TEE and
    crypto parties under a TEE aggregator; 'hetero-ca' does the same
    under a crypto aggregator."""
    if variant in ("hetero", "hetero-ca"):
        mechs = tuple(Mechanism.TEE if i % 2 == 0 else Mechanism.CRYPTO
                      for i in range(n))
        agg = Mechanism.TEE if variant == "hetero" else Mechanism.CRYPTO
        return VariantConfig(n_parties=n, threshold=t, party_mechs=mechs,
                             aggregator_mech=agg, query_confidential=True,
                             k_candidates=k)
    return VariantConfig.for_variant(variant, n, t, k)


def datasets_for(spec: BenchSpec, n: int, db_size: int) -> list[Dataset]:
    """Per-party synthetic data. A party's dataset depends only on
    (seed, db_size, party index), so sweeps over n and variant compare
    identical data."""
    out = []
    for i in range(1, n + 1):
        ss = np.random.SeedSequence([spec.seed, db_size, i])
        child_seed = int(ss.generate_state(1)[0])
        out.append(generate_dataset(child_seed, db_size, spec.gen_bound,
                                    party_id=i))
    return out


def _plaintext_bound(spec: BenchSpec, db_size: int) -> int:
    return max(db_size * spec.gen_bound, 1)


def run_bench(spec: BenchSpec) -> list[RoundMetrics]:
    rows: list[RoundMetrics] = []
    for variant in spec.variants:
        if variant not in BENCH_VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}")
        for n in spec.party_counts:
            t = threshold_for(spec.t_rule, n)
            config = config_for(variant, n, t, spec.k_candidates)
            for db_size in spec.db_sizes:
                rows.extend(_run_grid_point(spec, variant, config, n, db_size))
    return rows


def _run_grid_point(spec: BenchSpec, variant: str, config: VariantConfig,
                    n: int, db_size: int) -> list[RoundMetrics]:
    datasets = datasets_for(spec, n, db_size)
    options = SessionOptions(
        group_id=spec.group_id,
        plaintext_bound=_plaintext_bound(spec, db_size),
        timeout=spec.timeout,
        transport=spec.transport)
    query: Query | int
    if config.query_confidential:
        query = spec.query_id  # candidate index; the universe is synthesized
    else:
        query = Query.parse(spec.query_text)
    rows = []
    with Session(config, datasets, options) as session:
        effective = session.candidates[spec.query_id] \
            if config.query_confidential else query
        for rep in range(spec.repetitions):
            try:
                result = session.run_query(query)
            except SecaggError:
                rows.append(RoundMetrics(
                    variant=variant, n=n, db_size=db_size, rep=rep,
                    total_s=0.0, compute_s=None, comm_s=None, bytes_total=0,
                    payload_bytes=0, aggregate=0, ok=False))
                continue
            expected = sum(
                eval_query(effective, datasets[i - 1]).value
                for i in result.contributors)
            if result.value != expected:
                raise RuntimeError(
                    f"oracle mismatch at {variant} n={n} db={db_size} "
                    f"rep={rep}: protocol {result.value}, oracle {expected}")
            if config.uses_ot:
                compute = comm = None
            else:
                compute = result.compute_s
                comm = max(result.wall_s - result.compute_s, 0.0)
            rows.append(RoundMetrics(
                variant=variant, n=n, db_size=db_size, rep=rep,
                total_s=result.wall_s, compute_s=compute, comm_s=comm,
                bytes_total=result.bytes_total,
                payload_bytes=result.payload_bytes,
                aggregate=result.value, ok=True))
    return rows


def run_baseline(spec: BenchSpec) -> RoundMetrics:
    """Median metrics for the plaintext control on the spec's first
    (party count, db size) grid point."""
    sub = BenchSpec(variants=("baseline",),
                    party_counts=spec.party_counts[:1],
                    db_sizes=spec.db_sizes[:1],
                    k_candidates=spec.k_candidates, t_rule=spec.t_rule,
                    repetitions=spec.repetitions, transport=spec.transport,
                    seed=spec.seed, group_id=spec.group_id,
                    gen_bound=spec.gen_bound, query_text=spec.query_text,
                    query_id=spec.query_id, timeout=spec.timeout)
    medians = median_metrics(run_bench(sub))
    return medians[0]


def median_metrics(rows: list[RoundMetrics]) -> list[RoundMetrics]:
    """One row per (variant, n, db_size): medians over successful reps,
    rep = -1 to mark the aggregation. Grid points with no successful rep
    are dropped."""
    groups: dict[tuple, list[RoundMetrics]] = {}
    for row in rows:
        groups.setdefault((row.variant, row.n, row.db_size), []).append(row)
    out = []
    for (variant, n, db_size), group in groups.items():
        ok_rows = [r for r in group if r.ok]
        if not ok_rows:
            continue

        def med(attr):
            vals = [getattr(r, attr) for r in ok_rows]
            if any(v is None for v in vals):
                return None
            return statistics.median(vals)

        out.append(RoundMetrics(
            variant=variant, n=n, db_size=db_size, rep=-1,
            total_s=med("total_s"), compute_s=med("compute_s"),
            comm_s=med("comm_s"), bytes_total=int(med("bytes_total")),
            payload_bytes=int(med("payload_bytes")),
            aggregate=ok_rows[0].aggregate,
            ok=len(ok_rows) == len(group)))
    return out


def fit_scalability(rows: list[RoundMetrics], axis: str = "n",
                    metric: str = "total_s") -> ScalabilityFit:
    """Least-squares line of metric against axis ('n' or 'db_size'),
    fitted on per-grid-point medians."""
    if axis not in ("n", "db_size"):
        raise ConfigError(f"axis must be 'n' or 'db_size', not {axis!r}")
    medians = median_metrics(rows)
    points = {}
    for row in medians:
        value = getattr(row, metric)
        if value is None:
            continue
        points.setdefault(getattr(row, axis), []).append(value)
    if len(points) < 3:
        raise InsufficientPoints(
            f"need 3 distinct {axis} values, have {len(points)}")
    xs = np.array(sorted(points), dtype=float)
    ys = np.array([statistics.median(points[x]) for x in sorted(points)],
                  dtype=float)
    if np.all(ys == ys[0]):
        # zero variance: the constant line is an exact fit, and polyfit
        # would only add rounding noise to it
        return ScalabilityFit(slope=0.0, intercept=float(ys[0]),
                              r_squared=1.0)
    slope, intercept = np.polyfit(xs, ys, 1)
    residuals = ys - (slope * xs + intercept)
    ss_res = float(np.sum(residuals ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot
    return ScalabilityFit(slope=float(slope), intercept=float(intercept),
                          r_squared=r_squared)


# -- CSV round trip --

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(rows: list[RoundMetrics], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for row in rows:
            writer.writerow([_cell(getattr(row, f.name))
                             for f in fields(RoundMetrics)])


def read_csv(path) -> list[RoundMetrics]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER.split(","):
            raise ConfigError(f"unexpected CSV header {header}")
        for rec in reader:
            (variant, n, db_size, rep, total_s, compute_s, comm_s,
             bytes_total, payload_bytes, aggregate, ok) = rec
            out.append(RoundMetrics(
                variant=variant, n=int(n), db_size=int(db_size), rep=int(rep),
                total_s=float(total_s),
                compute_s=float(compute_s) if compute_s else None,
                comm_s=float(comm_s) if comm_s else None,
                bytes_total=int(bytes_total),
                payload_bytes=int(payload_bytes),
                aggregate=int(aggregate), ok=ok == "true"))
    return out
