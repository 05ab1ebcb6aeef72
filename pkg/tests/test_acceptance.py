"""Acceptance gate for the whole stack, one test per criterion.

Each test prints a single `[acceptance] <name>: PASS/FAIL` line (visible
under `pytest -s`) and asserts a wall-time budget. The budgets are
generous against observed runtimes; they exist so a regression cannot
quietly turn a minutes-long gate into an hours-long one.

Criteria 1 and 5-9 run on the default 2048-bit group because they make
end-to-end claims; the primitive suites (2, 3) run on the 1024-bit group
where the algebra is identical and the budget is tight.
"""

import dataclasses
import itertools
import math
import random
import struct
import time
from contextlib import contextmanager

import numpy as np
import pytest
import scipy.stats

from secagg.bench import (BENCH_VARIANTS, BenchSpec, config_for,
                          datasets_for, fit_scalability, median_metrics,
                          run_bench)
from secagg.datastore import Query, Subresult, eval_query, make_candidates
from secagg.errors import (AuthenticationFailure, ThresholdNotMet,
                           ThresholdNotReached)
from secagg.group import DEFAULT_GROUP
from secagg.ot import (receive_round1, receive_round2, sender_init,
                       sender_respond)
from secagg.protocol import Session, SessionOptions, VariantConfig
from secagg.tee import (REPORT_SIZE, AttestationReport, PlatformRoot,
                        enclave_create, pk_enc, verify_report)
from secagg.thfhe import (combine, encrypt, eval_sum, partial_decrypt,
                          setup)
from secagg.transport import MsgType, channel_pair, encode_frame

from conftest import FAST_GROUP, make_dataset


@contextmanager
def reported(name, budget_s):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"\n[acceptance] {name}: FAIL "
              f"({time.perf_counter() - t0:.1f}s)")
        raise
    dt = time.perf_counter() - t0
    verdict = "PASS" if dt < budget_s else "FAIL"
    print(f"\n[acceptance] {name}: {verdict} "
          f"({dt:.1f}s, budget {budget_s:.0f}s)")
    assert dt < budget_s, f"{name} blew its {budget_s:.0f}s budget: {dt:.1f}s"


# -------------------------------------------------- 1: oracle equivalence


def test_criterion_1_oracle_equivalence_grid():
    """Every flavor, over the full (n, t, k) grid, returns exactly the
    plaintext sum of the contributing parties' subresults. Collection
    closes at the threshold, so with t < n the contributing subset is
    whichever t-or-more answered first; at t = n it is everyone and the
    result is pinned to the full sum. 9 flavors x 45 grid points."""
    name = "criterion 1: oracle equivalence, 405 grid runs"
    runs = 0
    with reported(name, 300):
        for flavor in BENCH_VARIANTS:
            for n in (1, 3, 5, 10, 20):
                for t in (1, math.ceil(n / 2), n):
                    for k in (1, 4, 8):
                        spec = BenchSpec(seed=20, gen_bound=50)
                        datasets = datasets_for(spec, n, 100)
                        cfg = config_for(flavor, n, t, k)
                        opts = SessionOptions(group_id=DEFAULT_GROUP,
                                              plaintext_bound=100 * 50,
                                              timeout=30.0)
                        with Session(cfg, datasets, opts) as sess:
                            res = sess.run_query(
                                0 if cfg.query_confidential
                                else Query.parse("SUM"))
                        query = make_candidates(k)[0] \
                            if cfg.query_confidential else Query.parse("SUM")
                        tag = (flavor, n, t, k)
                        assert len(res.contributors) >= t, tag
                        if t == n:
                            assert res.contributors == tuple(range(1, n + 1))
                        expected = sum(
                            eval_query(query, datasets[i - 1]).value
                            for i in res.contributors)
                        assert res.value == expected, tag
                        runs += 1
        assert runs == 405


# ------------------------------------------- 2: threshold encryption suite


def test_criterion_2_thfhe_suite():
    name = "criterion 2: threshold encryption suite"
    rng = random.Random(1002)
    with reported(name, 60):
        # homomorphism: 200 random trials, exact equality after combining
        pk, shares = setup(64, 3, bound=2 ** 20, group_id=FAST_GROUP, rng=rng)
        for _ in range(200):
            msgs = [rng.randint(-2 ** 14, 2 ** 14)
                    for _ in range(rng.randint(1, 64))]
            agg = eval_sum(pk, [encrypt(m, pk, rng) for m in msgs])
            partials = [partial_decrypt(agg, sh, pk.params)
                        for sh in rng.sample(shares, 3)]
            assert combine(agg, partials, pk.params) == sum(msgs)

        # threshold soundness, exhaustive over every subset for n <= 6:
        # any t shares decrypt, any t-1 shares are refused
        for n in range(1, 7):
            for t in range(1, n + 1):
                pk, shares = setup(n, t, bound=1000, group_id=FAST_GROUP,
                                   rng=rng)
                m = rng.randint(-500, 500)
                ct = encrypt(m, pk, rng)
                for subset in itertools.combinations(shares, t):
                    partials = [partial_decrypt(ct, sh, pk.params)
                                for sh in subset]
                    assert combine(ct, partials, pk.params) == m
                for subset in itertools.combinations(shares, t - 1):
                    partials = [partial_decrypt(ct, sh, pk.params)
                                for sh in subset]
                    with pytest.raises(ThresholdNotMet):
                        combine(ct, partials, pk.params)

        # randomization: 1000 pairs of encryptions of the same value
        pk, _ = setup(3, 2, bound=1000, group_id=FAST_GROUP, rng=rng)
        collisions = sum(
            encrypt(7, pk, rng).c1 == encrypt(7, pk, rng).c1
            for _ in range(1000))
        assert collisions == 0


# ------------------------------------------------ 3: oblivious transfer


def test_criterion_3_ot_suite():
    name = "criterion 3: oblivious transfer suite"
    with reported(name, 120):
        # exhaustive correctness and wrong-index failure for k <= 16:
        # the chosen slot always opens, every other slot never does
        for k in range(1, 17):
            payloads = [struct.pack("<I", 1000 + j) + bytes([j]) * (j % 5)
                        for j in range(k)]
            for choice in range(k):
                rng = random.Random(k * 1000 + choice)
                sender, announce = sender_init(payloads, FAST_GROUP, rng)
                receiver, response = receive_round1(announce, choice,
                                                    FAST_GROUP, rng)
                blob = sender_respond(sender, response)
                assert receive_round2(receiver, blob) == payloads[choice]
                for wrong in range(k):
                    if wrong == choice:
                        continue
                    forged = dataclasses.replace(receiver,
                                                 choice_index=wrong)
                    with pytest.raises(AuthenticationFailure):
                        receive_round2(forged, blob)

        # response uniformity: 1000 responses per choice against one
        # announcement; every byte histogram must look uniform and the
        # per-choice histograms must be mutually indistinguishable
        rng = random.Random(31337)
        _, announce = sender_init([b"left", b"right"], FAST_GROUP, rng)
        hists = []
        for choice in (0, 1):
            hist = np.zeros(256, dtype=np.int64)
            for _ in range(1000):
                _, response = receive_round1(announce, choice, FAST_GROUP,
                                             rng)
                elem = np.frombuffer(response[1:], dtype=np.uint8)
                hist += np.bincount(elem, minlength=256)
            assert scipy.stats.chisquare(hist).pvalue > 0.01
            hists.append(hist)
        assert scipy.stats.chi2_contingency(np.stack(hists)).pvalue > 0.01


# ------------------------------------------------- 4: release gate


def test_criterion_4_threshold_gate_exhaustive():
    """Aggregate is released iff submissions reach the threshold, over
    the full (count, t) grid up to 10."""
    name = "criterion 4: aggregate release gate"
    with reported(name, 30):
        platform = PlatformRoot()
        for t in range(1, 11):
            for count in range(0, 11):
                enclave = enclave_create(b"release gate check", t, platform)
                for pid in range(1, count + 1):
                    blob = pk_enc(Subresult(value=pid, query_id=0).to_bytes(),
                                  enclave.public_key_bytes)
                    assert enclave.submit_subresult(pid, blob) == "accepted"
                if count >= t:
                    assert enclave.aggregate() == count * (count + 1) // 2
                else:
                    with pytest.raises(ThresholdNotReached) as exc:
                        enclave.aggregate()
                    assert "Threshold not reached" in str(exc.value)


# ------------------------------------------- 5: relative cost directions


def test_criterion_5_relative_cost_directions():
    """Median-of-10 orderings at n=50, db=10000: crypto aggregation costs
    more compute than enclave aggregation, query confidentiality costs
    total time, and ciphertext payloads dwarf sealed ones."""
    name = "criterion 5: relative cost directions (n=50, 10 reps)"
    with reported(name, 600):
        spec = BenchSpec(variants=("v1", "v2", "v3", "v4", "v5", "v6"),
                         party_counts=(50,), db_sizes=(10000,),
                         k_candidates=16, t_rule="all", repetitions=10,
                         seed=5, group_id=DEFAULT_GROUP, gen_bound=50,
                         timeout=60.0)
        med = {row.variant: row for row in median_metrics(run_bench(spec))}
        assert set(med) == set(spec.variants)
        assert all(med[v].ok for v in spec.variants)
        assert med["v1"].compute_s > med["v2"].compute_s
        assert med["v5"].compute_s > med["v6"].compute_s
        assert med["v3"].total_s > med["v1"].total_s
        assert med["v4"].total_s > med["v2"].total_s
        assert med["v1"].payload_bytes > med["v2"].payload_bytes


# --------------------------------------------- 6: linearity in parties


def test_criterion_6_traffic_linear_in_party_count():
    name = "criterion 6: traffic linear in party count"
    with reported(name, 600):
        spec = BenchSpec(variants=("v1", "v6"),
                         party_counts=(10, 25, 50, 100, 150),
                         db_sizes=(100,), k_candidates=4, t_rule="all",
                         repetitions=1, seed=6, group_id=DEFAULT_GROUP,
                         gen_bound=50, timeout=60.0)
        rows = run_bench(spec)
        assert all(r.ok for r in rows)
        for variant in ("v1", "v6"):
            sub = [r for r in rows if r.variant == variant]
            fit = fit_scalability(sub, axis="n", metric="bytes_total")
            assert fit.slope > 0
            assert fit.r_squared >= 0.9, (variant, fit)


# ------------------------------------- 7: traffic flat across db sizes


def test_criterion_7_aggregator_traffic_independent_of_db_size():
    """Round traffic depends on the group and n, never on how much data
    sits behind each party: byte counts match exactly across db sizes."""
    name = "criterion 7: traffic flat across database sizes"
    with reported(name, 300):
        spec = BenchSpec(variants=("v1", "v6"), party_counts=(50,),
                         db_sizes=(1000, 10000, 100000), k_candidates=4,
                         t_rule="all", repetitions=1, seed=7,
                         group_id=DEFAULT_GROUP, gen_bound=50, timeout=60.0)
        rows = run_bench(spec)
        assert all(r.ok for r in rows)
        for variant in ("v1", "v6"):
            sub = [r for r in rows if r.variant == variant]
            assert len(sub) == 3
            assert len({r.bytes_total for r in sub}) == 1, sub
            assert len({r.payload_bytes for r in sub}) == 1, sub


# ----------------------------------------------------- 8: wire goldens


def test_criterion_8_wire_goldens_across_transports():
    name = "criterion 8: wire goldens over inproc and tcp"
    golden_frame = bytes.fromhex("000000050100000000")
    with reported(name, 60):
        assert encode_frame(MsgType.QUERY, 0) == golden_frame
        platform = PlatformRoot()
        enclave = enclave_create(b"wire golden check", 1, platform)
        report_wire = enclave.attest().to_bytes()
        assert len(report_wire) == REPORT_SIZE == 128
        for kind in ("inproc", "tcp"):
            a, b = channel_pair(kind)
            try:
                a.send(MsgType.QUERY, 0)
                a.send(MsgType.ATTEST_REPORT, 3, report_wire)
                empty = b.recv(timeout=5.0)
                assert encode_frame(empty.msg_type, empty.round_id,
                                    empty.body) == golden_frame
                framed = b.recv(timeout=5.0)
                assert framed.body == report_wire
                report = AttestationReport.from_bytes(framed.body)
                assert report.to_bytes() == report_wire
                assert verify_report(report, platform.verification_key_bytes,
                                     enclave.measurement)
            finally:
                a.close()
                b.close()


# ----------------------------------------------------- 9: canary audit


def test_criterion_9_canary_audit():
    """Distinctive per-party values never cross the aggregator boundary
    in the clear; the same audit lights up on the plaintext control."""
    name = "criterion 9: plaintext canary audit"
    canaries = [837465, 914233]
    patterns = [struct.pack("<q", v) for v in canaries]

    def recv_bodies(variant):
        datasets = [make_dataset([v], party_id=i)
                    for i, v in enumerate(canaries, 1)]
        cfg = VariantConfig.for_variant(variant, n=2, t=2, k=4)
        opts = SessionOptions(group_id=DEFAULT_GROUP,
                              plaintext_bound=2 ** 20, timeout=15.0,
                              capture_wire=True)
        with Session(cfg, datasets, opts) as sess:
            query = 0 if cfg.query_confidential \
                else Query.parse("SUM where > 0")
            assert sess.run_query(query).value == sum(canaries)
            return [f.body for _, d, f in sess.wire_log() if d == "recv"]

    with reported(name, 120):
        for variant in ("v1", "v3", "v5", "v2", "v4", "v6"):
            bodies = recv_bodies(variant)
            assert bodies
            for body in bodies:
                for pat in patterns:
                    assert pat not in body, variant
        # positive control: the audit must catch the plaintext baseline
        seen = [pat for body in recv_bodies("baseline")
                for pat in patterns if pat in body]
        assert sorted(seen) == sorted(patterns)
