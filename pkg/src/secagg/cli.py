"""Command line front end.

    secagg bench       grid benchmark, CSV out
    secagg run         one aggregation in-process (threads)
    secagg aggregator  aggregator role over TCP, separate processes
    secagg party       party role over TCP

The run/aggregator/party commands share a key = value config file:

    variant = v1          # v1..v6 | hetero | hetero-ca | baseline
    parties = 3
    threshold = 3         # default: parties
    k = 16
    query = SUM where > 2
    query_id = 2          # candidate index for confidential variants
    group = modp-2048
    timeout = 30
    seed = 0              # synthetic data
    db_size = 1000
    gen_bound = 100
    data.1 = party1.csv   # optional explicit per-party data
    listen = 127.0.0.1:7742
    party_mechs = tee,crypto,tee    # hetero only
    aggregator_mech = tee           # hetero only
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench as bench_mod
from .bench import BenchSpec, emit_csv
from .datastore import (
    Dataset,
    Query,
    QueryKind,
    generate_dataset,
    load_dataset,
)
from .errors import ConfigError, SecaggError
from .group import DEFAULT_GROUP
from .protocol import Mechanism, PartyRuntime, Session, SessionOptions, VariantConfig
from .transport import tcp_accept, tcp_connect, tcp_listen


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma list of ints: {text!r}")


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secagg",
        description="Secure aggregation with interchangeable TEE and "
                    "cryptographic paths.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a benchmark grid, write CSV")
    b.add_argument("--variant", type=_str_list, default=("v1",),
                   help="comma list out of v1..v6, hetero, hetero-ca, baseline")
    b.add_argument("--parties", type=_int_list, default=(10,))
    b.add_argument("--db-sizes", type=_int_list, default=(10000,))
    b.add_argument("--t-rule", default="all",
                   help="all | majority | fixed:N")
    b.add_argument("--k", type=int, default=16,
                   help="candidate universe size for confidential queries")
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--group", default=DEFAULT_GROUP)
    b.add_argument("--gen-bound", type=int, default=100)
    b.add_argument("--query", default="SUM")
    b.add_argument("--query-id", type=int, default=0)
    b.add_argument("--timeout", type=float, default=30.0)
    b.add_argument("--out", required=True, help="CSV output path")

    r = sub.add_parser("run", help="run one query in-process")
    r.add_argument("--config", required=True)

    a = sub.add_parser("aggregator", help="aggregator over TCP")
    a.add_argument("--config", required=True)
    a.add_argument("--listen", default=None, help="HOST:PORT")

    p = sub.add_parser("party", help="party over TCP")
    p.add_argument("--config", required=True)
    p.add_argument("--party-id", type=int, required=True)
    p.add_argument("--connect", default=None, help="HOST:PORT")
    p.add_argument("--data", default=None, help="CSV path for this party")
    return parser


# -- config file --

def parse_config_file(path) -> dict[str, str]:
    cfg: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            cfg[key.strip()] = value.strip()
    return cfg


def _config_objects(cfg: dict[str, str]):
    n = int(cfg.get("parties", "3"))
    t = int(cfg["threshold"]) if "threshold" in cfg else n
    k = int(cfg.get("k", "16"))
    variant = cfg.get("variant", "v1")
    if variant in ("hetero", "hetero-ca") and "party_mechs" in cfg:
        mechs = tuple(Mechanism(m.strip())
                      for m in cfg["party_mechs"].split(","))
        agg = Mechanism(cfg.get(
            "aggregator_mech",
            "tee" if variant == "hetero" else "crypto"))
        config = VariantConfig(n_parties=len(mechs), threshold=t,
                               party_mechs=mechs, aggregator_mech=agg,
                               query_confidential=True, k_candidates=k)
    else:
        config = bench_mod.config_for(variant, n, t, k)
    return config


def _datasets_from_config(cfg: dict[str, str], config: VariantConfig,
                          only_party: int | None = None):
    seed = int(cfg.get("seed", "0"))
    db_size = int(cfg.get("db_size", "1000"))
    gen_bound = int(cfg.get("gen_bound", "100"))
    indices = [only_party] if only_party else \
        range(1, config.n_parties + 1)
    out = []
    for i in indices:
        if f"data.{i}" in cfg:
            out.append(load_dataset(cfg[f"data.{i}"], party_id=i))
        else:
            ss = np.random.SeedSequence([seed, db_size, i])
            out.append(generate_dataset(int(ss.generate_state(1)[0]),
                                        db_size, gen_bound, party_id=i))
    return out


def _required_bound(datasets: list[Dataset]) -> int:
    return max(max(1, int(np.abs(d.values).sum())) for d in datasets)


def _options_from_config(cfg: dict[str, str],
                         datasets: list[Dataset] | None) -> SessionOptions:
    if "bound" in cfg:
        bound = int(cfg["bound"])
    elif datasets:
        bound = _required_bound(datasets)
    else:
        bound = None
    kwargs = dict(group_id=cfg.get("group", DEFAULT_GROUP),
                  timeout=float(cfg.get("timeout", "30")))
    if bound is not None:
        kwargs["plaintext_bound"] = bound
    return SessionOptions(**kwargs)


def _query_from_config(cfg: dict[str, str], config: VariantConfig):
    if config.query_confidential and "query_id" in cfg:
        return int(cfg["query_id"])
    return Query.parse(cfg.get("query", "SUM"))


def _split_hostport(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


# -- commands --

def cmd_bench(args) -> int:
    spec = BenchSpec(
        variants=args.variant, party_counts=args.parties,
        db_sizes=args.db_sizes, k_candidates=args.k, t_rule=args.t_rule,
        repetitions=args.reps, transport=args.transport, seed=args.seed,
        group_id=args.group, gen_bound=args.gen_bound,
        query_text=args.query, query_id=args.query_id, timeout=args.timeout)
    rows = bench_mod.run_bench(spec)
    emit_csv(rows, args.out)
    ok = sum(1 for r in rows if r.ok)
    print(f"{len(rows)} rows ({ok} ok) -> {args.out}")
    for med in bench_mod.median_metrics(rows):
        split = ""
        if med.compute_s is not None:
            split = (f" compute={med.compute_s:.4f}s"
                     f" comm={med.comm_s:.4f}s")
        print(f"  {med.variant} n={med.n} db={med.db_size}: "
              f"median total={med.total_s:.4f}s{split} "
              f"bytes={med.bytes_total} payload={med.payload_bytes} "
              f"agg={med.aggregate}")
    return 0


def cmd_run(args) -> int:
    cfg = parse_config_file(args.config)
    config = _config_objects(cfg)
    datasets = _datasets_from_config(cfg, config)
    options = _options_from_config(cfg, datasets)
    query = _query_from_config(cfg, config)
    with Session(config, datasets, options) as session:
        if isinstance(query, Query) and query.kind == QueryKind.AVG_PAIR:
            avg = session.run_avg(query)
            print(f"average = {avg.numerator}/{avg.denominator}"
                  + (f" = {float(avg.as_fraction()):.6g}"
                     if avg.denominator else " (empty selection)"))
            result = avg.count_round
        else:
            result = session.run_query(query)
            print(f"aggregate = {result.value}")
        print(f"round {result.round_id}: {result.wall_s:.4f}s, "
              f"{result.bytes_total} bytes, "
              f"{result.message_count} messages, "
              f"parties {list(result.contributors)}")
    return 0


def cmd_aggregator(args) -> int:
    cfg = parse_config_file(args.config)
    config = _config_objects(cfg)
    options = _options_from_config(cfg, None)
    if "bound" not in cfg:
        # no sight of the data here; size the window from the generator
        db_size = int(cfg.get("db_size", "1000"))
        gen_bound = int(cfg.get("gen_bound", "100"))
        options.plaintext_bound = max(db_size * gen_bound, 1)
    query = _query_from_config(cfg, config)
    host, port = _split_hostport(args.listen or cfg.get("listen",
                                                        "127.0.0.1:7742"))
    listener = tcp_listen(host, port)
    print(f"listening on {listener.getsockname()[0]}:"
          f"{listener.getsockname()[1]}, waiting for "
          f"{config.n_parties} parties", flush=True)
    channels = [tcp_accept(listener) for _ in range(config.n_parties)]
    listener.close()
    session = Session(config, None, options, channels=channels)
    try:
        if isinstance(query, Query) and query.kind == QueryKind.AVG_PAIR:
            avg = session.run_avg(query)
            print(f"average = {avg.numerator}/{avg.denominator}")
            result = avg.count_round
        else:
            result = session.run_query(query)
            print(f"aggregate = {result.value}")
        print(f"round {result.round_id}: {result.wall_s:.4f}s, "
              f"{result.bytes_total} bytes on the wire")
    finally:
        session.close()
    return 0


def cmd_party(args) -> int:
    cfg = parse_config_file(args.config)
    config = _config_objects(cfg)
    if not 1 <= args.party_id <= config.n_parties:
        raise ConfigError(f"party id {args.party_id} not in "
                          f"[1, {config.n_parties}]")
    if args.data:
        dataset = load_dataset(args.data, party_id=args.party_id)
    else:
        dataset = _datasets_from_config(cfg, config,
                                        only_party=args.party_id)[0]
    host, port = _split_hostport(args.connect or cfg.get("listen",
                                                         "127.0.0.1:7742"))
    channel = tcp_connect(host, port)
    runtime = PartyRuntime(args.party_id, channel, dataset)
    print(f"party {args.party_id} connected to {host}:{port}", flush=True)
    runtime.run()
    if runtime.error is not None:
        print(f"party {args.party_id} failed: {runtime.error}",
              file=sys.stderr)
        return 1
    finals = ", ".join(f"round {r}: {v}" if s == 0 else f"round {r}: error"
                       for r, (s, v) in sorted(runtime.finals.items()))
    print(f"party {args.party_id} done ({finals})")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bench":
            return cmd_bench(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "aggregator":
            return cmd_aggregator(args)
        if args.command == "party":
            return cmd_party(args)
    except SecaggError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
