"""Simulated trusted execution environment.

Models what the protocols need from an enclave and nothing more:

  * a measurement (SHA-256 of the code identity),
  * a sealed X25519 keypair whose private half never leaves the handle,
  * remote attestation: a report binding measurement and public key,
    signed by a simulated platform root (Ed25519),
  * threshold-gated aggregation: buffered subresults are summed and
    released only once at least t distinct parties have submitted.

This is process-level make-believe, not isolation. The private key and
the buffer live in name-mangled attributes and are kept out of repr();
tests audit that nothing below ever shows up outside the handle. A real
deployment swaps this module for actual enclave bindings.

The platform root key is generated per test universe. Its verification
key is distributed at setup; in TCP role-process mode the signing key
also travels at setup so remote enclaves can be provisioned, which real
hardware would of course keep to itself.
"""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives import serialization

from .datastore import Dataset, Query, Subresult, eval_query
from .errors import (
    AttestationFailure,
    DecryptionFailure,
    InvalidThreshold,
    ThresholdNotReached,
)

REPORT_SIZE = 128  # 32 measurement + 32 public key + 64 signature

_ENC_INFO = b"secagg pk enc v1"
_ENC_OVERHEAD = 32 + 12 + 16  # ephemeral pk + nonce + AEAD tag


def measure(code_identity: bytes) -> bytes:
    return hashlib.sha256(code_identity).digest()


@dataclass(frozen=True)
class AttestationReport:
    measurement: bytes
    enclave_public_key: bytes
    signature: bytes

    def to_bytes(self) -> bytes:
        out = self.measurement + self.enclave_public_key + self.signature
        assert len(out) == REPORT_SIZE
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "AttestationReport":
        if len(data) != REPORT_SIZE:
            raise AttestationFailure(
                f"report must be {REPORT_SIZE} bytes, got {len(data)}")
        return cls(measurement=data[:32], enclave_public_key=data[32:64],
                   signature=data[64:128])


class PlatformRoot:
    """Simulated hardware vendor key that endorses attestation reports."""

    def __init__(self, signing_key_bytes: bytes | None = None):
        if signing_key_bytes is None:
            self._sk = Ed25519PrivateKey.generate()
        else:
            self._sk = Ed25519PrivateKey.from_private_bytes(signing_key_bytes)
        self.verification_key_bytes = self._sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    @property
    def signing_key_bytes(self) -> bytes:
        return self._sk.private_bytes(
            serialization.Encoding.Raw, serialization.PrivateFormat.Raw,
            serialization.NoEncryption())

    def sign(self, data: bytes) -> bytes:
        return self._sk.sign(data)


_default_platform = None
_default_platform_lock = threading.Lock()


def default_platform() -> PlatformRoot:
    global _default_platform
    with _default_platform_lock:
        if _default_platform is None:
            _default_platform = PlatformRoot()
        return _default_platform


class EnclaveHandle:
    """One simulated enclave. Create via enclave_create()."""

    def __init__(self, code_identity: bytes, threshold: int,
                 platform: PlatformRoot):
        if threshold < 1:
            raise InvalidThreshold(f"threshold {threshold} must be >= 1")
        self.measurement = measure(code_identity)
        self.threshold = threshold
        self.__platform = platform
        self.__private_key = X25519PrivateKey.generate()
        self.public_key_bytes = self.__private_key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        self.__buffer: dict[int, int] = {}
        self.__lock = threading.Lock()

    def __repr__(self):
        return (f"EnclaveHandle(measurement={self.measurement.hex()[:16]}..., "
                f"threshold={self.threshold})")

    def attest(self) -> AttestationReport:
        body = self.measurement + self.public_key_bytes
        return AttestationReport(
            measurement=self.measurement,
            enclave_public_key=self.public_key_bytes,
            signature=self.__platform.sign(body))

    # -- in-enclave operations --

    def sk_decrypt(self, blob: bytes) -> bytes:
        """Decrypt a blob addressed to this enclave. The plaintext is
        in-enclave data; callers outside the simulated boundary must not
        forward it, and the audit tests check they do not."""
        if len(blob) < _ENC_OVERHEAD:
            raise DecryptionFailure("blob shorter than encryption overhead")
        eph_pk, nonce, ct = blob[:32], blob[32:44], blob[44:]
        try:
            shared = self.__private_key.exchange(
                X25519PublicKey.from_public_bytes(eph_pk))
            key = HKDF(algorithm=SHA256(), length=32, salt=None,
                       info=_ENC_INFO + eph_pk + self.public_key_bytes,
                       ).derive(shared)
            return ChaCha20Poly1305(key).decrypt(nonce, ct, None)
        except InvalidTag:
            raise DecryptionFailure("blob failed authentication") from None

    def submit_subresult(self, party_id: int, blob: bytes) -> str:
        """Buffer one party's encrypted subresult. First write wins."""
        plain = self.sk_decrypt(blob)
        sub = Subresult.from_bytes(plain)
        with self.__lock:
            if party_id in self.__buffer:
                return "duplicate"
            self.__buffer[party_id] = sub.value
            return "accepted"

    def aggregate(self) -> int:
        """Release the sum only at or above the threshold, then clear."""
        with self.__lock:
            if len(self.__buffer) < self.threshold:
                raise ThresholdNotReached(
                    f"Threshold not reached: {len(self.__buffer)} of "
                    f"{self.threshold} submissions")
            total = sum(self.__buffer.values())
            self.__buffer.clear()
            return total

    @property
    def buffered_count(self) -> int:
        with self.__lock:
            return len(self.__buffer)


def enclave_create(code_identity: bytes, threshold: int,
                   platform: PlatformRoot | None = None) -> EnclaveHandle:
    return EnclaveHandle(code_identity, threshold,
                         platform or default_platform())


def enclave_attest(handle: EnclaveHandle) -> AttestationReport:
    return handle.attest()


def verify_report(report: AttestationReport, root_verification_key: bytes,
                  expected_measurement: bytes | None = None) -> bool:
    if expected_measurement is not None and \
            report.measurement != expected_measurement:
        return False
    vk = Ed25519PublicKey.from_public_bytes(root_verification_key)
    try:
        vk.verify(report.signature,
                  report.measurement + report.enclave_public_key)
        return True
    except InvalidSignature:
        return False


def require_valid_report(report: AttestationReport,
                         root_verification_key: bytes,
                         expected_measurement: bytes | None = None) -> None:
    if not verify_report(report, root_verification_key, expected_measurement):
        raise AttestationFailure("attestation report failed verification")


def pk_enc(plaintext: bytes, recipient_public_key: bytes) -> bytes:
    """Hybrid encryption to an enclave (or any X25519 key): ephemeral
    exchange, HKDF, ChaCha20-Poly1305. Output overhead is 60 bytes."""
    eph_sk = X25519PrivateKey.generate()
    eph_pk = eph_sk.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    shared = eph_sk.exchange(X25519PublicKey.from_public_bytes(
        recipient_public_key))
    key = HKDF(algorithm=SHA256(), length=32, salt=None,
               info=_ENC_INFO + eph_pk + recipient_public_key).derive(shared)
    nonce = os.urandom(12)
    return eph_pk + nonce + ChaCha20Poly1305(key).encrypt(nonce, plaintext, None)


def tee_sk_dec(handle: EnclaveHandle, blob: bytes) -> bytes:
    return handle.sk_decrypt(blob)


def tee_eval(handle: EnclaveHandle, query: Query, dataset: Dataset) -> Subresult:
    """Query evaluation inside the enclave. Same semantics as the plain
    datastore evaluation; the point is where it runs, not what it does."""
    return eval_query(query, dataset)


def tee_submit_subresult(handle: EnclaveHandle, party_id: int,
                         blob: bytes) -> str:
    return handle.submit_subresult(party_id, blob)


def tee_aggregate(handle: EnclaveHandle) -> int:
    return handle.aggregate()
