"""1-of-k oblivious transfer over a prime-order group.

Diffie-Hellman OT in the Chou-Orlandi style, generalized from 1-of-2 to
1-of-k. Three messages:

    1. sender   -> receiver: announcement A = g^a, plus k
    2. receiver -> sender:   response B = A^choice * g^b
    3. sender   -> receiver: k AEAD ciphertexts, key_j = KDF((B * A^-j)^a)

The receiver can only form key_choice = KDF(A^b); for j != choice the key
material (B * A^-j)^a is a fresh DH value the receiver cannot compute.
The sender sees B, which is uniform in the subgroup whatever the choice.

Payloads are padded to a common length before encryption so ciphertext
sizes leak nothing about individual payloads. Keys are single-use, so the
AEAD nonce is fixed at zero.

Indices are 0-based throughout.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import (
    AuthenticationFailure,
    ChoiceOutOfRange,
    EmptyPayloadSet,
    MalformedGroupElement,
)
from .group import DEFAULT_GROUP, get_group, mpz

_VERSION = 1
_NONCE = bytes(12)  # keys are never reused across encryptions
_KDF_INFO = b"secagg ot key v1"


@dataclass
class OtSenderState:
    group_id: str
    secret_scalar: int
    announcement: int
    payloads: tuple[bytes, ...]


@dataclass
class OtReceiverState:
    group_id: str
    k: int
    choice_index: int
    blind_scalar: int
    announcement: int
    response: int


@dataclass(frozen=True)
class OtTranscript:
    """Everything that went over the wire, for audits and tests."""
    announcement: bytes
    response: bytes
    encrypted_payloads: bytes


def _rand_scalar(group, rng) -> int:
    if rng is None:
        return secrets.randbelow(group.q)
    return rng.randrange(group.q)


def _derive_key(group, element, index: int) -> bytes:
    ikm = group.encode_element(element)
    info = _KDF_INFO + index.to_bytes(4, "little")
    return HKDF(algorithm=SHA256(), length=32, salt=None, info=info).derive(ikm)


def _pad(payload: bytes, width: int) -> bytes:
    return len(payload).to_bytes(4, "little") + payload + bytes(width - len(payload))


def _unpad(plain: bytes) -> bytes:
    if len(plain) < 4:
        raise AuthenticationFailure("decrypted payload shorter than its header")
    n = int.from_bytes(plain[:4], "little")
    if n > len(plain) - 4:
        raise AuthenticationFailure("decrypted payload length header corrupt")
    return plain[4:4 + n]


def sender_init(payloads: list[bytes], group_id: str = DEFAULT_GROUP,
                rng=None) -> tuple[OtSenderState, bytes]:
    """Step 1: fix the payload set, emit the announcement message."""
    if not payloads:
        raise EmptyPayloadSet("need at least one payload")
    group = get_group(group_id)
    a = _rand_scalar(group, rng)
    announcement = int(group.exp_g(a))
    state = OtSenderState(group_id=group_id, secret_scalar=a,
                          announcement=announcement,
                          payloads=tuple(bytes(p) for p in payloads))
    msg = (bytes([_VERSION]) + len(payloads).to_bytes(4, "little")
           + group.encode_element(announcement))
    return state, msg


def receive_round1(announcement_msg: bytes, choice: int,
                   group_id: str = DEFAULT_GROUP, rng=None,
                   ) -> tuple[OtReceiverState, bytes]:
    """Step 2: blind the choice into the response message."""
    group = get_group(group_id)
    if len(announcement_msg) != 5 + group.element_size:
        raise MalformedGroupElement("announcement has wrong length")
    if announcement_msg[0] != _VERSION:
        raise ValueError(f"unsupported OT version {announcement_msg[0]}")
    k = int.from_bytes(announcement_msg[1:5], "little")
    if k < 1:
        raise EmptyPayloadSet("announcement declares zero payloads")
    a_elem = group.decode_element(announcement_msg[5:])
    if not 0 <= choice < k:
        raise ChoiceOutOfRange(f"choice {choice} not in [0, {k})")
    b = _rand_scalar(group, rng)
    response = int(group.mul(group.pow(a_elem, choice), group.exp_g(b)))
    state = OtReceiverState(group_id=group_id, k=k, choice_index=choice,
                            blind_scalar=b, announcement=a_elem,
                            response=response)
    msg = bytes([_VERSION]) + group.encode_element(response)
    return state, msg


def sender_respond(state: OtSenderState, response_msg: bytes) -> bytes:
    """Step 3: derive all k keys, encrypt every payload."""
    group = get_group(state.group_id)
    if len(response_msg) != 1 + group.element_size:
        raise MalformedGroupElement("response has wrong length")
    if response_msg[0] != _VERSION:
        raise ValueError(f"unsupported OT version {response_msg[0]}")
    b_elem = group.decode_element(response_msg[1:])  # subgroup-checked

    # key_j material: (B * A^-j)^a = B^a * (A^-a)^j, computed incrementally.
    p = mpz(group.p)
    t = group.pow(b_elem, state.secret_scalar)
    step = group.pow(state.announcement, group.q - state.secret_scalar)
    width = max(len(pl) for pl in state.payloads)
    k = len(state.payloads)
    parts = [bytes([_VERSION]) + k.to_bytes(4, "little")]
    for j, payload in enumerate(state.payloads):
        key = _derive_key(group, t, j)
        ct = ChaCha20Poly1305(key).encrypt(_NONCE, _pad(payload, width), None)
        parts.append(len(ct).to_bytes(4, "little") + ct)
        t = (t * step) % p
    return b"".join(parts)


def receive_round2(state: OtReceiverState, payloads_msg: bytes) -> bytes:
    """Step 4 (local): decrypt the chosen payload, and only that one."""
    group = get_group(state.group_id)
    if payloads_msg[0] != _VERSION:
        raise ValueError(f"unsupported OT version {payloads_msg[0]}")
    k = int.from_bytes(payloads_msg[1:5], "little")
    if k != state.k:
        raise ValueError(f"payload count {k} does not match announced {state.k}")
    cts = []
    off = 5
    for _ in range(k):
        if off + 4 > len(payloads_msg):
            raise ValueError("payload message truncated")
        n = int.from_bytes(payloads_msg[off:off + 4], "little")
        off += 4
        if off + n > len(payloads_msg):
            raise ValueError("payload message truncated")
        cts.append(payloads_msg[off:off + n])
        off += n
    if off != len(payloads_msg):
        raise ValueError("trailing bytes after payloads")

    key_elem = group.pow(state.announcement, state.blind_scalar)  # A^b
    key = _derive_key(group, key_elem, state.choice_index)
    try:
        plain = ChaCha20Poly1305(key).decrypt(_NONCE, cts[state.choice_index], None)
    except InvalidTag:
        raise AuthenticationFailure("payload failed authentication") from None
    return _unpad(plain)


def exchange(payloads: list[bytes], choice: int,
             group_id: str = DEFAULT_GROUP, rng=None,
             ) -> tuple[bytes, OtTranscript]:
    """Run a whole OT locally. Returns the chosen payload and the transcript."""
    sender, announcement = sender_init(payloads, group_id, rng)
    receiver, response = receive_round1(announcement, choice, group_id, rng)
    encrypted = sender_respond(sender, response)
    plain = receive_round2(receiver, encrypted)
    return plain, OtTranscript(announcement=announcement, response=response,
                               encrypted_payloads=encrypted)
