"""1-of-k oblivious transfer tests."""

import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from secagg.errors import (AuthenticationFailure, ChoiceOutOfRange,
                           EmptyPayloadSet, MalformedGroupElement)
from secagg.group import get_group
from secagg.ot import (exchange, receive_round1, receive_round2, sender_init,
                       sender_respond)

from conftest import FAST_GROUP

GROUP = get_group(FAST_GROUP)


def run_ot(payloads, choice, seed=0):
    rng = random.Random(seed)
    sender, announce = sender_init(payloads, FAST_GROUP, rng)
    receiver, response = receive_round1(announce, choice, FAST_GROUP, rng)
    blob = sender_respond(sender, response)
    return receive_round2(receiver, blob), (announce, response, blob)


def test_exhaustive_small_k_all_choices():
    for k in range(1, 9):
        payloads = [bytes([i]) * (i + 1) for i in range(k)]
        for choice in range(k):
            got, _ = run_ot(payloads, choice, seed=k * 100 + choice)
            assert got == payloads[choice]


def test_exchange_convenience_wrapper():
    rng = random.Random(5)
    payloads = [b"alpha", b"bravo", b"charlie"]
    plain, transcript = exchange(payloads, 2, FAST_GROUP, rng)
    assert plain == b"charlie"
    assert transcript.announcement[0] == 1
    assert len(transcript.response) == 1 + GROUP.element_size


def test_three_message_transcript_shape():
    payloads = [b"x" * 40, b"y" * 3, b"z" * 17]
    _, (announce, response, blob) = run_ot(payloads, 1)
    # announce: version byte, payload count, one group element
    assert len(announce) == 1 + 4 + GROUP.element_size
    assert announce[0] == 1
    assert int.from_bytes(announce[1:5], "little") == 3
    # response: version byte, one group element
    assert len(response) == 1 + GROUP.element_size
    # final message: version, count, then k equal-width sealed payloads
    assert blob[0] == 1
    width = 4 + 40 + 16  # length prefix + longest payload + AEAD tag
    assert len(blob) == 1 + 4 + 3 * (4 + width)


def test_sealed_payloads_have_uniform_width():
    payloads = [b"", b"q" * 100, b"r"]
    _, (_, _, blob) = run_ot(payloads, 0)
    off = 5
    widths = []
    for _ in payloads:
        n = int.from_bytes(blob[off:off + 4], "little")
        widths.append(n)
        off += 4 + n
    assert len(set(widths)) == 1


def test_empty_payload_round_trips():
    got, _ = run_ot([b"", b"nonempty"], 0)
    assert got == b""


def test_empty_payload_set_rejected():
    rng = random.Random(6)
    with pytest.raises(EmptyPayloadSet):
        sender_init([], FAST_GROUP, rng)


def test_choice_out_of_range():
    rng = random.Random(7)
    _, announce = sender_init([b"a", b"b"], FAST_GROUP, rng)
    with pytest.raises(ChoiceOutOfRange):
        receive_round1(announce, 2, FAST_GROUP, rng)
    with pytest.raises(ChoiceOutOfRange):
        receive_round1(announce, -1, FAST_GROUP, rng)


def test_wrong_choice_index_cannot_open_other_slot():
    # A receiver who committed to one slot must not be able to reuse the
    # transcript to open any other slot.
    rng = random.Random(8)
    for k in (2, 3, 5):
        payloads = [bytes([40 + i]) * 8 for i in range(k)]
        for choice in range(k):
            sender, announce = sender_init(payloads, FAST_GROUP, rng)
            receiver, response = receive_round1(announce, choice,
                                                FAST_GROUP, rng)
            blob = sender_respond(sender, response)
            for other in range(k):
                if other == choice:
                    continue
                cheat = dataclasses.replace(receiver, choice_index=other)
                with pytest.raises(AuthenticationFailure):
                    receive_round2(cheat, blob)


def test_tampered_ciphertext_rejected():
    rng = random.Random(9)
    sender, announce = sender_init([b"p0", b"p1"], FAST_GROUP, rng)
    receiver, response = receive_round1(announce, 1, FAST_GROUP, rng)
    blob = bytearray(sender_respond(sender, response))
    blob[-1] ^= 0x01
    with pytest.raises(AuthenticationFailure):
        receive_round2(receiver, bytes(blob))


def test_malformed_announcement_rejected():
    rng = random.Random(10)
    with pytest.raises(MalformedGroupElement):
        receive_round1(b"\x01" + (1).to_bytes(4, "little") + b"\xff" * 3,
                       0, FAST_GROUP, rng)
    _, announce = sender_init([b"a"], FAST_GROUP, rng)
    with pytest.raises(ValueError):
        receive_round1(b"\x02" + announce[1:], 0, FAST_GROUP, rng)


def test_malformed_response_element_rejected():
    rng = random.Random(11)
    sender, _ = sender_init([b"a", b"b"], FAST_GROUP, rng)
    # p-1 is a valid residue class but lies outside the prime-order subgroup
    bad = b"\x01" + GROUP.encode_element(GROUP.p - 1)
    with pytest.raises(MalformedGroupElement):
        sender_respond(sender, bad)


def test_payload_count_mismatch_rejected():
    rng = random.Random(12)
    sender, announce = sender_init([b"a", b"b"], FAST_GROUP, rng)
    receiver, response = receive_round1(announce, 0, FAST_GROUP, rng)
    blob = bytearray(sender_respond(sender, response))
    blob[1:5] = (3).to_bytes(4, "little")
    with pytest.raises(ValueError):
        receive_round2(receiver, bytes(blob))


def test_truncated_final_message_rejected():
    rng = random.Random(13)
    sender, announce = sender_init([b"a", b"b"], FAST_GROUP, rng)
    receiver, response = receive_round1(announce, 0, FAST_GROUP, rng)
    blob = sender_respond(sender, response)
    with pytest.raises(ValueError):
        receive_round2(receiver, blob[:-3])


def test_deterministic_under_seeded_rng():
    a1 = run_ot([b"p", b"q"], 1, seed=77)[1][0]
    a2 = run_ot([b"p", b"q"], 1, seed=77)[1][0]
    a3 = run_ot([b"p", b"q"], 1, seed=78)[1][0]
    assert a1 == a2
    assert a1 != a3


def test_response_independent_payload_width():
    # Response length must not depend on the choice; a length channel
    # would defeat the point of the protocol.
    lens = set()
    for choice in range(4):
        _, (_, response, _) = run_ot([b"w" * 9] * 4, choice, seed=choice)
        lens.add(len(response))
    assert len(lens) == 1


@settings(max_examples=25, deadline=None)
@given(data=st.data(),
       payloads=st.lists(st.binary(max_size=64), min_size=1, max_size=6))
def test_round_trip_property(data, payloads):
    choice = data.draw(st.integers(min_value=0, max_value=len(payloads) - 1))
    seed = data.draw(st.integers(min_value=0, max_value=2 ** 16))
    got, _ = run_ot(payloads, choice, seed=seed)
    assert got == payloads[choice]
