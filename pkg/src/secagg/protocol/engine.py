"""Round execution: one aggregator, n parties, message-driven.

The aggregator drives rounds; parties are reactive state machines that
answer whatever arrives on their channel. A round moves through the
phases DISPATCH (query goes out, unless the OT path makes the parties
open), EVALUATE (subresult ciphertexts come in), AGGREGATE (combine or
enclave release), DONE (final result broadcast to every party). Phases
only ever advance.

Per-party mechanism decides the shape of each leg:

  * public query:        QUERY in clear to every party
  * confidential + TEE:  query hybrid-encrypted to the party's enclave
  * confidential + crypto: 1-of-k OT; the party announces, the
    aggregator's choice is the candidate index, the transferred payload
    is the already-encrypted subresult

  * crypto aggregator: subresults are threshold-AHE ciphertexts; the
    aggregated ciphertext goes back out, t partial decryptions return,
    the aggregator combines
  * TEE aggregator: subresults are hybrid-encrypted into the enclave,
    which releases the sum only at or above the threshold

Stragglers: the aggregator closes the collection phase as soon as t
subresults arrived, or errors at the timeout. Parties that missed a
round resynchronize via the final-result broadcast (which also carries
an error flag on failed rounds, so OT parties keep announcing).

Setup is dealer-based and happens over the same channels (HELLO, SETUP,
attestation exchange); setup traffic is not part of round accounting.
"""

from __future__ import annotations

import hashlib
import queue
import secrets
import threading
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

from .. import ot, thfhe
from ..datastore import (
    Dataset,
    Query,
    QueryKind,
    Subresult,
    eval_query,
    expand_avg,
    make_candidates,
)
from ..errors import (
    AttestationFailure,
    ChoiceOutOfRange,
    ConfigError,
    IllegalMessage,
    QueryMalformed,
    SecaggError,
    ThresholdNotMet,
    Truncated,
)
from ..group import DEFAULT_GROUP, get_group
from ..tee import (
    AttestationReport,
    PlatformRoot,
    enclave_create,
    pk_enc,
    require_valid_report,
    tee_aggregate,
    tee_eval,
    tee_sk_dec,
    tee_submit_subresult,
)
from ..thfhe import Ciphertext, JointPublicKey, SecretKeyShare, ThfheParams
from ..transport import (
    Channel,
    MsgType,
    SecureChannel,
    channel_pair,
)
from .config import Mechanism, VariantConfig
from .messages import (
    FINAL_ERROR,
    FINAL_OK,
    decode_final,
    decode_hello,
    decode_partial_dec,
    decode_setup,
    encode_final,
    encode_hello,
    encode_partial_dec,
    encode_setup,
    setup_blob,
)

AGG_CODE_IDENTITY = b"secagg aggregator enclave v1"
PARTY_CODE_IDENTITY = b"secagg party enclave v1"

_HANDSHAKE_TIMEOUT = 30.0


class Phase(IntEnum):
    SETUP = 0
    DISPATCH = 1
    EVALUATE = 2
    AGGREGATE = 3
    DONE = 4


@dataclass
class RoundState:
    round_id: int
    phase: Phase = Phase.SETUP
    history: list[Phase] = field(default_factory=lambda: [Phase.SETUP])
    subresults: dict[int, bytes] = field(default_factory=dict)
    partials: dict[int, int] = field(default_factory=dict)

    def advance(self, phase: Phase) -> None:
        if phase <= self.phase:
            raise IllegalMessage(
                f"phase may not go from {self.phase.name} to {phase.name}")
        self.phase = phase
        self.history.append(phase)


@dataclass(frozen=True)
class RoundResult:
    round_id: int
    value: int
    contributors: tuple[int, ...]
    bytes_total: int
    payload_bytes: int
    message_count: int
    wall_s: float
    compute_s: float


@dataclass(frozen=True)
class AvgResult:
    numerator: int
    denominator: int
    sum_round: RoundResult
    count_round: RoundResult

    def as_fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)


class ComputeMeter:
    """Accumulates wall time spent in instrumented compute sections,
    across every thread that shares the meter."""

    def __init__(self):
        self._lock = threading.Lock()
        self._seconds = 0.0

    @contextmanager
    def section(self):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            dt = time.perf_counter() - t0
            with self._lock:
                self._seconds += dt

    def reset(self) -> None:
        with self._lock:
            self._seconds = 0.0

    def read(self) -> float:
        with self._lock:
            return self._seconds


@dataclass
class SessionOptions:
    group_id: str = DEFAULT_GROUP
    plaintext_bound: int = thfhe.DEFAULT_BOUND
    timeout: float = 30.0
    transport: str = "inproc"  # inproc | tcp (loopback, party threads)
    secure_channels: bool = False
    candidates: list[Query] | None = None
    capture_wire: bool = False
    tamper_attestation: str | None = None  # None | "agg" | "party"


class PartyRuntime:
    """One party's protocol automaton. Runs in a thread next to the
    aggregator or alone inside a separate OS process; the code path is
    the same because all configuration arrives in the SETUP message."""

    def __init__(self, party_index: int, channel: Channel,
                 dataset: Dataset, platform: PlatformRoot | None = None,
                 meter: ComputeMeter | None = None):
        self.index = party_index
        self.chan = channel
        self.dataset = dataset
        self.platform = platform
        self.meter = meter if meter is not None else ComputeMeter()
        self.mute_subresult = False  # test hook: act as a straggler
        self.mute_partial = False
        self.error: BaseException | None = None
        self.finals: dict[int, tuple[int, int]] = {}
        self._ot_states: dict[int, ot.OtSenderState] = {}
        self.enclave = None
        self._configured = False

    # -- setup --

    def _handshake(self) -> None:
        self._node_sk = X25519PrivateKey.generate()
        node_pk = self._node_sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        self._node_pk = node_pk
        self.chan.send(MsgType.HELLO, 0, encode_hello(self.index, node_pk))
        frame = self.chan.recv(timeout=_HANDSHAKE_TIMEOUT)
        if frame.msg_type != MsgType.SETUP:
            raise IllegalMessage(f"expected SETUP, got {frame.msg_type.name}")
        self._configure(decode_setup(frame.body))
        if self.mech is Mechanism.TEE:
            frame = self.chan.recv(timeout=_HANDSHAKE_TIMEOUT)
            if frame.msg_type != MsgType.ATTEST_REQ:
                raise IllegalMessage(
                    f"expected ATTEST_REQ, got {frame.msg_type.name}")
            report = self.enclave.attest().to_bytes()
            if self._tamper_report:
                report = report[:-1] + bytes([report[-1] ^ 1])
            self.chan.send(MsgType.ATTEST_REPORT, 0, report)
        else:
            self.chan.send(MsgType.HELLO, 0,
                           encode_hello(self.index, self._node_pk))
        if self._channel_key is not None:
            self.chan = SecureChannel(self.chan, self._channel_key)

    def _configure(self, blob: dict) -> None:
        self.n = blob["n"]
        self.t = blob["t"]
        self.mech = Mechanism(blob["party_mech"])
        self.agg_mech = Mechanism(blob["aggregator_mech"])
        self.confidential = blob["query_confidential"]
        self.baseline = blob["baseline"]
        self.group_id = blob["group"]
        self.group = get_group(self.group_id)
        self._tamper_report = bool(blob.get("tamper_report"))
        self._channel_key = (bytes.fromhex(blob["channel_key"])
                             if blob.get("channel_key") else None)
        root_vk = bytes.fromhex(blob["root_vk"])
        if self.platform is None and blob.get("platform_sk"):
            self.platform = PlatformRoot(bytes.fromhex(blob["platform_sk"]))
        self.agg_pk: bytes | None = None
        if self.agg_mech is Mechanism.TEE:
            report = AttestationReport.from_bytes(
                bytes.fromhex(blob["agg_report"]))
            try:
                require_valid_report(
                    report, root_vk,
                    expected_measurement=bytes.fromhex(blob["agg_measurement"]))
            except AttestationFailure:
                self.chan.send(MsgType.SHUTDOWN, 0, b"attestation rejected")
                raise
            self.agg_pk = report.enclave_public_key
        self.params = None
        self.pk = None
        self.share = None
        if blob["thfhe_pk"] is not None:
            self.params = ThfheParams(
                group_id=self.group_id, plaintext_bound=blob["bound"],
                n_parties=self.n, threshold=self.t)
            self.pk = JointPublicKey(
                group_element=self.group.decode_element(
                    bytes.fromhex(blob["thfhe_pk"])),
                params=self.params)
        if blob["share"] is not None:
            self.share = SecretKeyShare(
                party_index=blob["share"]["index"],
                scalar_share=int(blob["share"]["scalar"], 16))
        self.candidates = None
        if blob["candidates"] is not None:
            self.candidates = [Query.from_bytes(bytes.fromhex(h))
                               for h in blob["candidates"]]
        if self.mech is Mechanism.TEE:
            self.enclave = enclave_create(PARTY_CODE_IDENTITY, 1, self.platform)
        self._configured = True

    @property
    def _ot_party(self) -> bool:
        return (self.mech is Mechanism.CRYPTO and self.confidential
                and not self.baseline)

    # -- main loop --

    def run(self) -> None:
        try:
            self._handshake()
            if self._ot_party and not self.mute_subresult:
                self._announce(1)
            while True:
                frame = self.chan.recv()
                if frame.msg_type == MsgType.SHUTDOWN:
                    break
                self._handle(frame)
        except (EOFError, Truncated):
            pass
        except BaseException as exc:  # surfaced via Session.close()
            self.error = exc
        finally:
            self.chan.close()

    def _handle(self, frame) -> None:
        kind, rid, body = frame.msg_type, frame.round_id, frame.body
        if kind == MsgType.QUERY:
            q = Query.from_bytes(body)
            with self.meter.section():
                sub = eval_query(q, self.dataset)
            if self.mute_subresult:
                return
            if self.baseline:
                self.chan.send(MsgType.SUBRESULT, rid,
                               sub.value.to_bytes(8, "little", signed=True))
            else:
                self.chan.send(MsgType.SUBRESULT, rid,
                               self._encrypt_subresult(sub))
        elif kind == MsgType.ENC_QUERY:
            # Decryption and evaluation happen inside the enclave; the
            # plaintext query never leaves this handler.
            with self.meter.section():
                plain = tee_sk_dec(self.enclave, body)
                q = Query.from_bytes(plain)
                sub = tee_eval(self.enclave, q, self.dataset)
                unit = None if self.mute_subresult \
                    else self._encrypt_subresult(sub)
            if unit is not None:
                self.chan.send(MsgType.SUBRESULT, rid, unit)
        elif kind == MsgType.OT_RESPONSE:
            state = self._ot_states.pop(rid, None)
            if state is None:
                return  # response for a round this party gave up on
            with self.meter.section():
                payload_msg = ot.sender_respond(state, body)
            self.chan.send(MsgType.OT_PAYLOADS, rid, payload_msg)
        elif kind == MsgType.ENC_AGGREGATE:
            if self.share is None:
                raise IllegalMessage("no key share, cannot partially decrypt")
            ct = Ciphertext.from_bytes(body, self.group)
            with self.meter.section():
                pd = thfhe.partial_decrypt(ct, self.share, self.params)
            if self.mute_partial:
                return
            self.chan.send(
                MsgType.PARTIAL_DEC, rid,
                encode_partial_dec(self.index, pd.share_element, self.group))
        elif kind == MsgType.FINAL_RESULT:
            status, value = decode_final(body)
            self.finals[rid] = (status, value)
            if self._ot_party and not self.mute_subresult:
                self._announce(rid + 1)
        elif kind == MsgType.ATTEST_REQ:
            if self.enclave is not None:
                self.chan.send(MsgType.ATTEST_REPORT, rid,
                               self.enclave.attest().to_bytes())
        # anything else: not addressed to a party; ignore

    def _encrypt_subresult(self, sub: Subresult) -> bytes:
        if self.agg_mech is Mechanism.TEE:
            return pk_enc(sub.to_bytes(), self.agg_pk)
        ct = thfhe.encrypt(sub.value, self.pk)
        return ct.to_bytes(self.group)

    def _announce(self, rid: int) -> None:
        """OT bootstrap: evaluate and encrypt every candidate, then send
        the announcement. The aggregator's choice arrives as OT_RESPONSE."""
        with self.meter.section():
            payloads = []
            for q in self.candidates:
                sub = eval_query(q, self.dataset)
                payloads.append(self._encrypt_subresult(sub))
            state, msg = ot.sender_init(payloads, self.group_id)
        self._ot_states = {rid: state}  # older rounds are dead
        self.chan.send(MsgType.OT_ANNOUNCE, rid, msg)


class Session:
    """Aggregator-side context: keys, enclaves, channels, round driver.

    Build with setup(); in thread mode party runtimes run inside this
    process, in process mode pre-accepted channels are handed in and the
    parties live elsewhere.
    """

    def __init__(self, config: VariantConfig, datasets: list[Dataset] | None,
                 options: SessionOptions | None = None,
                 channels: list[Channel] | None = None):
        self.config = config
        self.options = options or SessionOptions()
        self.meter = ComputeMeter()
        self.platform = PlatformRoot()
        self.last_round_state: RoundState | None = None
        self._round_counter = 1
        self._inbox: queue.Queue = queue.Queue()
        self._pending: dict[int, deque] = {}
        self._readers: list[threading.Thread] = []
        self._party_threads: list[threading.Thread] = []
        self.party_runtimes: list[PartyRuntime] = []
        self.channels: list[Channel] = []
        self._closed = False

        cfg = config
        opts = self.options
        self.group = get_group(opts.group_id)
        self.params: ThfheParams | None = None
        self.pk: JointPublicKey | None = None
        self._shares: list[SecretKeyShare] | None = None
        if cfg.needs_thfhe:
            self.params = ThfheParams(
                group_id=opts.group_id, plaintext_bound=opts.plaintext_bound,
                n_parties=cfg.n_parties, threshold=cfg.threshold)
            self.pk, self._shares = thfhe.setup(
                cfg.n_parties, cfg.threshold, opts.plaintext_bound,
                opts.group_id)
        self.enclave = None
        if cfg.aggregator_mech is Mechanism.TEE:
            self.enclave = enclave_create(AGG_CODE_IDENTITY, cfg.threshold,
                                          self.platform)
        self.candidates: list[Query] | None = None
        if cfg.query_confidential:
            self.candidates = (opts.candidates if opts.candidates is not None
                               else make_candidates(cfg.k_candidates))
            if len(self.candidates) != cfg.k_candidates:
                raise ConfigError(
                    f"candidate universe has {len(self.candidates)} entries, "
                    f"config says k={cfg.k_candidates}")
        self.party_enclave_pks: dict[int, bytes] = {}

        external = channels is not None
        if external:
            if len(channels) != cfg.n_parties:
                raise ConfigError(
                    f"{len(channels)} channels for {cfg.n_parties} parties")
            self.channels = self._order_external_channels(channels)
        else:
            if datasets is None or len(datasets) != cfg.n_parties:
                raise ConfigError(
                    f"need one dataset per party ({cfg.n_parties})")
            self.channels = self._spawn_parties(datasets)
        try:
            self._setup_handshake(external)
        except BaseException:
            self.close()
            raise
        for i, chan in enumerate(self.channels, 1):
            reader = threading.Thread(
                target=self._reader, args=(i, chan), daemon=True,
                name=f"secagg-reader-{i}")
            reader.start()
            self._readers.append(reader)

    # -- wiring --

    def _spawn_parties(self, datasets: list[Dataset]) -> list[Channel]:
        agg_ends = []
        for i in range(1, self.config.n_parties + 1):
            a, b = channel_pair(self.options.transport)
            runtime = PartyRuntime(i, b, datasets[i - 1],
                                   platform=self.platform, meter=self.meter)
            thread = threading.Thread(target=runtime.run, daemon=True,
                                      name=f"secagg-party-{i}")
            thread.start()
            self.party_runtimes.append(runtime)
            self._party_threads.append(thread)
            agg_ends.append(a)
        return agg_ends

    def _order_external_channels(self, channels: list[Channel]) -> list[Channel]:
        by_index: dict[int, Channel] = {}
        for chan in channels:
            frame = chan.recv(timeout=_HANDSHAKE_TIMEOUT)
            if frame.msg_type != MsgType.HELLO:
                raise IllegalMessage(
                    f"expected HELLO, got {frame.msg_type.name}")
            idx, _node_pk = decode_hello(frame.body)
            if not 1 <= idx <= self.config.n_parties or idx in by_index:
                raise ConfigError(f"bad or duplicate party index {idx}")
            by_index[idx] = chan
        return [by_index[i] for i in range(1, self.config.n_parties + 1)]

    def _setup_handshake(self, external: bool) -> None:
        cfg, opts = self.config, self.options
        if not external:
            for i, chan in enumerate(self.channels, 1):
                frame = chan.recv(timeout=_HANDSHAKE_TIMEOUT)
                if frame.msg_type != MsgType.HELLO:
                    raise IllegalMessage(
                        f"expected HELLO, got {frame.msg_type.name}")
                idx, _ = decode_hello(frame.body)
                if idx != i:
                    raise ConfigError(f"channel {i} sent party index {idx}")
        agg_report = None
        if self.enclave is not None:
            agg_report = self.enclave.attest().to_bytes()
            if opts.tamper_attestation == "agg":
                agg_report = agg_report[:-1] + bytes([agg_report[-1] ^ 1])
        channel_keys: list[bytes | None] = []
        for i, chan in enumerate(self.channels, 1):
            key = secrets.token_bytes(32) if opts.secure_channels else None
            channel_keys.append(key)
            blob = setup_blob(
                party_index=i, config=cfg, options=opts, params=self.params,
                pk=self.pk,
                share=self._shares[i - 1] if self._shares else None,
                agg_report_bytes=agg_report,
                root_vk=self.platform.verification_key_bytes,
                platform_sk=(self.platform.signing_key_bytes
                             if external else None),
                agg_measurement=hashlib.sha256(AGG_CODE_IDENTITY).digest(),
                candidates=(self.candidates
                            if cfg.query_confidential else None),
                channel_key=key)
            if opts.tamper_attestation == "party" \
                    and cfg.party_mechs[i - 1] is Mechanism.TEE:
                blob["tamper_report"] = True
            chan.send(MsgType.SETUP, 0, encode_setup(blob))
            if cfg.party_mechs[i - 1] is Mechanism.TEE:
                chan.send(MsgType.ATTEST_REQ, 0, b"")
        self._shares = None  # dealer forgets the shares once delivered
        expected_party_measurement = hashlib.sha256(PARTY_CODE_IDENTITY).digest()
        for i, chan in enumerate(self.channels, 1):
            frame = chan.recv(timeout=_HANDSHAKE_TIMEOUT)
            if frame.msg_type == MsgType.SHUTDOWN:
                raise AttestationFailure(
                    f"party {i} aborted setup: {frame.body.decode(errors='replace')}")
            if cfg.party_mechs[i - 1] is Mechanism.TEE:
                if frame.msg_type != MsgType.ATTEST_REPORT:
                    raise IllegalMessage(
                        f"expected ATTEST_REPORT, got {frame.msg_type.name}")
                report = AttestationReport.from_bytes(frame.body)
                require_valid_report(
                    report, self.platform.verification_key_bytes,
                    expected_measurement=expected_party_measurement)
                self.party_enclave_pks[i] = report.enclave_public_key
            else:
                if frame.msg_type != MsgType.HELLO:
                    raise IllegalMessage(
                        f"expected HELLO ack, got {frame.msg_type.name}")
        if opts.secure_channels:
            self.channels = [SecureChannel(chan, key)
                             for chan, key in zip(self.channels, channel_keys)]
        if opts.capture_wire:
            for chan in self.channels:
                chan.capture = []

    def _reader(self, party: int, chan: Channel) -> None:
        while True:
            try:
                frame = chan.recv()
            except (EOFError, Truncated, OSError, SecaggError):
                return
            self._inbox.put((party, frame))

    # -- round driver --

    def run_query(self, query_or_id) -> RoundResult:
        """Run one aggregation round. Accepts a Query, or a candidate
        index when the query is confidential."""
        query, qid = self._resolve_query(query_or_id)
        rid = self._round_counter
        self._round_counter += 1
        state = RoundState(round_id=rid)
        self.last_round_state = state
        tally = _Tally()
        self.meter.reset()
        t0 = time.perf_counter()
        try:
            value, contributors, payload_bytes = self._execute(
                state, query, qid, tally, t0)
        except BaseException:
            self._broadcast_final(rid, FINAL_ERROR, 0, tally)
            raise
        wall = time.perf_counter() - t0
        return RoundResult(
            round_id=rid, value=value, contributors=tuple(contributors),
            bytes_total=tally.bytes, payload_bytes=payload_bytes,
            message_count=tally.messages, wall_s=wall,
            compute_s=min(self.meter.read(), wall))

    def run_avg(self, query: Query) -> AvgResult:
        """AVG as the protocols actually run it: a SUM round, a COUNT
        round, division only after decryption."""
        if query.kind != QueryKind.AVG_PAIR:
            raise QueryMalformed("run_avg needs an AVG query")
        q_sum, q_count = expand_avg(query)
        r_sum = self.run_query(q_sum)
        r_count = self.run_query(q_count)
        return AvgResult(numerator=r_sum.value, denominator=r_count.value,
                         sum_round=r_sum, count_round=r_count)

    def _resolve_query(self, query_or_id) -> tuple[Query | None, int | None]:
        cfg = self.config
        if isinstance(query_or_id, int):
            if not cfg.query_confidential:
                raise ConfigError("candidate index given for a public query")
            qid = query_or_id
            if not 0 <= qid < len(self.candidates):
                raise ChoiceOutOfRange(
                    f"query_id {qid} not in [0, {len(self.candidates)})")
            return self.candidates[qid], qid
        query = query_or_id
        if query.kind == QueryKind.AVG_PAIR:
            raise QueryMalformed("AVG queries run via run_avg")
        if not cfg.query_confidential:
            return query, None
        if cfg.uses_ot:
            for j, cand in enumerate(self.candidates):
                if cand.kind == query.kind and cand.predicate == query.predicate:
                    return cand, j
            raise ConfigError(
                "confidential query must be in the candidate universe when "
                "any party runs the OT path")
        return query, None  # all-TEE: arbitrary confidential query

    def _execute(self, state, query, qid, tally, t0):
        cfg = self.config
        deadline = t0 + self.options.timeout

        state.advance(Phase.DISPATCH)
        for i in range(1, cfg.n_parties + 1):
            mech = cfg.party_mechs[i - 1]
            if not cfg.query_confidential:
                self._send(i, MsgType.QUERY, state.round_id,
                           query.to_bytes(), tally)
            elif mech is Mechanism.TEE:
                with self.meter.section():
                    blob = pk_enc(query.to_bytes(), self.party_enclave_pks[i])
                self._send(i, MsgType.ENC_QUERY, state.round_id, blob, tally)
            # confidential + crypto party: the party opens with OT_ANNOUNCE

        state.advance(Phase.EVALUATE)
        ot_rx: dict[int, ot.OtReceiverState] = {}
        submitted: set[int] = set()
        while len(state.subresults) < cfg.threshold:
            try:
                party, frame = self._next_frame(state.round_id, deadline, tally)
            except TimeoutError:
                break
            self._eval_phase_frame(state, party, frame, qid, ot_rx,
                                   submitted, tally)

        state.advance(Phase.AGGREGATE)
        contributors = sorted(state.subresults)
        payload_sizes = {len(b) for b in state.subresults.values()}
        payload_bytes = payload_sizes.pop() if len(payload_sizes) == 1 else max(
            payload_sizes, default=0)

        if cfg.baseline_plaintext:
            if len(contributors) < cfg.threshold:
                raise ThresholdNotMet(
                    f"{len(contributors)} of {cfg.threshold} subresults")
            with self.meter.section():
                value = sum(
                    int.from_bytes(state.subresults[i], "little", signed=True)
                    for i in contributors)
        elif cfg.aggregator_mech is Mechanism.TEE:
            with self.meter.section():
                value = tee_aggregate(self.enclave)  # enforces the threshold
        else:
            if len(contributors) < cfg.threshold:
                raise ThresholdNotMet(
                    f"{len(contributors)} of {cfg.threshold} subresults")
            with self.meter.section():
                cts = [Ciphertext.from_bytes(state.subresults[i], self.group)
                       for i in contributors]
                agg_ct = thfhe.eval_sum(self.pk, cts)
            body = agg_ct.to_bytes(self.group)
            for i in range(1, cfg.n_parties + 1):
                self._send(i, MsgType.ENC_AGGREGATE, state.round_id, body, tally)
            while len(state.partials) < cfg.threshold:
                try:
                    party, frame = self._next_frame(state.round_id, deadline,
                                                    tally)
                except TimeoutError:
                    raise ThresholdNotMet(
                        f"{len(state.partials)} of {cfg.threshold} partial "
                        f"decryptions") from None
                self._agg_phase_frame(state, party, frame)
            with self.meter.section():
                partials = [thfhe.PartialDecryption(i, state.partials[i])
                            for i in sorted(state.partials)]
                value = thfhe.combine(agg_ct, partials, self.params)

        self._broadcast_final(state.round_id, FINAL_OK, value, tally)
        state.advance(Phase.DONE)
        return value, contributors, payload_bytes

    def _eval_phase_frame(self, state, party, frame, qid, ot_rx, submitted,
                          tally) -> None:
        cfg = self.config
        mech = cfg.party_mechs[party - 1]
        ot_path = cfg.query_confidential and mech is Mechanism.CRYPTO
        kind = frame.msg_type
        if ot_path and kind == MsgType.OT_ANNOUNCE:
            with self.meter.section():
                rx, resp = ot.receive_round1(frame.body, qid,
                                             self.options.group_id)
            ot_rx[party] = rx
            self._send(party, MsgType.OT_RESPONSE, state.round_id, resp, tally)
        elif ot_path and kind == MsgType.OT_PAYLOADS:
            rx = ot_rx.pop(party, None)
            if rx is None:
                raise IllegalMessage(
                    f"OT payloads from party {party} without announcement")
            with self.meter.section():
                unit = ot.receive_round2(rx, frame.body)
            self._accept_subresult(state, party, unit, submitted)
        elif not ot_path and kind == MsgType.SUBRESULT:
            self._accept_subresult(state, party, frame.body, submitted)
        elif kind == MsgType.SHUTDOWN:
            pass  # dead party; the straggler policy covers it
        else:
            raise IllegalMessage(
                f"{kind.name} from party {party} during EVALUATE")

    def _agg_phase_frame(self, state, party, frame) -> None:
        kind = frame.msg_type
        if kind == MsgType.PARTIAL_DEC:
            idx, elem = decode_partial_dec(frame.body, self.group)
            if idx != party:
                raise IllegalMessage(
                    f"party {party} sent partial decryption labeled {idx}")
            state.partials[party] = elem
        elif kind in (MsgType.SUBRESULT, MsgType.OT_ANNOUNCE,
                      MsgType.OT_PAYLOADS, MsgType.SHUTDOWN):
            pass  # late for this round; tolerated and dropped
        else:
            raise IllegalMessage(
                f"{kind.name} from party {party} during AGGREGATE")

    def _accept_subresult(self, state, party, unit, submitted) -> None:
        if party in state.subresults:
            return  # duplicate; first write wins
        if self.config.aggregator_mech is Mechanism.TEE:
            with self.meter.section():
                status = tee_submit_subresult(self.enclave, party, unit)
            if status != "accepted":
                return
            submitted.add(party)
        state.subresults[party] = unit

    # -- plumbing --

    def _send(self, party: int, msg_type, rid: int, body: bytes,
              tally) -> None:
        self.channels[party - 1].send(msg_type, rid, body)
        tally.add(len(body))

    def _broadcast_final(self, rid: int, status: int, value: int,
                         tally) -> None:
        body = encode_final(status, value)
        for i in range(1, self.config.n_parties + 1):
            try:
                self._send(i, MsgType.FINAL_RESULT, rid, body, tally)
            except OSError:
                pass  # closing party; best effort on error paths

    def _next_frame(self, rid: int, deadline: float, tally):
        pend = self._pending.get(rid)
        if pend:
            party, frame = pend.popleft()
            if not pend:
                del self._pending[rid]
            tally.add(len(frame.body))
            return party, frame
        while True:
            timeout = deadline - time.perf_counter()
            if timeout <= 0:
                raise TimeoutError("round deadline reached")
            try:
                party, frame = self._inbox.get(timeout=timeout)
            except queue.Empty:
                raise TimeoutError("round deadline reached") from None
            if frame.round_id < rid:
                continue  # straggler from a closed round
            if frame.round_id > rid:
                self._pending.setdefault(frame.round_id, deque()).append(
                    (party, frame))
                continue
            tally.add(len(frame.body))
            return party, frame

    def wire_log(self) -> list[tuple[int, str, object]]:
        """Captured frames per party channel (capture_wire option)."""
        out = []
        for i, chan in enumerate(self.channels, 1):
            for direction, frame in (chan.capture or []):
                out.append((i, direction, frame))
        return out

    def party_errors(self) -> list[tuple[int, BaseException]]:
        """Exceptions raised inside in-process party runtimes so far."""
        return [(rt.index, rt.error) for rt in self.party_runtimes
                if rt.error is not None]

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for chan in self.channels:
            try:
                chan.send(MsgType.SHUTDOWN, 0, b"")
            except (OSError, SecaggError):
                pass
        for chan in self.channels:
            try:
                chan.close()
            except OSError:
                pass
        for thread in self._party_threads:
            thread.join(timeout=5)
        for reader in self._readers:
            reader.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _Tally:
    """Deterministic per-round accounting of frames the aggregator
    touched. 9 bytes of framing per message plus the body."""

    def __init__(self):
        self.bytes = 0
        self.messages = 0

    def add(self, body_len: int) -> None:
        self.bytes += 9 + body_len
        self.messages += 1


def setup(config: VariantConfig, datasets: list[Dataset],
          options: SessionOptions | None = None) -> Session:
    """Offline phase: channels, attestation, key dealing. The returned
    session runs any number of rounds until closed."""
    return Session(config, datasets, options)


def _require_variant(ctx: Session, name: str) -> None:
    actual = ctx.config.variant_name()
    if actual != name:
        raise ConfigError(f"session is configured as {actual}, not {name}")


def run_variant1(ctx: Session, query: Query) -> int:
    """Crypto parties, crypto aggregator, public query."""
    _require_variant(ctx, "v1")
    return ctx.run_query(query).value


def run_variant2(ctx: Session, query: Query) -> int:
    """Crypto parties, TEE aggregator, public query."""
    _require_variant(ctx, "v2")
    return ctx.run_query(query).value


def run_variant3(ctx: Session, query_or_id) -> int:
    """Crypto parties, crypto aggregator, confidential query via OT."""
    _require_variant(ctx, "v3")
    return ctx.run_query(query_or_id).value


def run_variant4(ctx: Session, query_or_id) -> int:
    """Crypto parties, TEE aggregator, confidential query via OT."""
    _require_variant(ctx, "v4")
    return ctx.run_query(query_or_id).value


def run_variant5(ctx: Session, query: Query) -> int:
    """TEE parties, crypto aggregator, confidential query."""
    _require_variant(ctx, "v5")
    return ctx.run_query(query).value


def run_variant6(ctx: Session, query: Query) -> int:
    """TEE parties, TEE aggregator, confidential query."""
    _require_variant(ctx, "v6")
    return ctx.run_query(query).value


def run_heterogeneous(ctx: Session, per_party_mechs, query_or_id) -> int:
    """Mixed per-party mechanisms; confidential queries only."""
    mechs = tuple(Mechanism(m) for m in per_party_mechs)
    if mechs != ctx.config.party_mechs:
        raise ConfigError("per-party mechanisms do not match the session")
    return ctx.run_query(query_or_id).value
