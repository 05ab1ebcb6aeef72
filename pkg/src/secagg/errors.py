"""Exception taxonomy for the secure aggregation package.

Every error raised on purpose derives from SecaggError so callers can
catch protocol failures without swallowing programming errors.
"""


class SecaggError(Exception):
    """Base class for all deliberate failures in this package."""


# --- threshold encryption ---

class InvalidThreshold(SecaggError):
    """Threshold t outside [1, n]."""


class BoundTooLarge(SecaggError):
    """Requested plaintext bound does not fit the group order."""


class PlaintextOutOfRange(SecaggError):
    """Plaintext magnitude exceeds the configured bound."""


class EmptyInput(SecaggError):
    """An operation that needs at least one element got none."""


class ThresholdNotMet(SecaggError):
    """Fewer than t distinct key shares were presented."""


class DiscreteLogOutOfRange(SecaggError):
    """Decoded aggregate falls outside the searchable window."""


# --- oblivious transfer ---

class EmptyPayloadSet(SecaggError):
    """OT sender needs at least one payload."""


class ChoiceOutOfRange(SecaggError):
    """Receiver choice index not in [0, k)."""


class MalformedGroupElement(SecaggError):
    """Bytes did not decode to a valid subgroup element."""


class AuthenticationFailure(SecaggError):
    """AEAD tag check failed (wrong key or tampered ciphertext)."""


# --- trusted execution (simulated) ---

class DecryptionFailure(SecaggError):
    """Enclave could not decrypt a blob addressed to it."""


class QueryMalformed(SecaggError):
    """Query cannot be evaluated as given."""


class ThresholdNotReached(SecaggError):
    """Enclave refuses to release an aggregate below the threshold."""


class AttestationFailure(SecaggError):
    """Attestation report failed verification."""


# --- datastore ---

class ParseError(SecaggError):
    """Input file line did not parse; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class BoundViolation(SecaggError):
    """Dataset value outside the declared bound."""


class Overflow(SecaggError):
    """Query result exceeds what the datastore guarantees representable."""


# --- transport ---

class FrameTooLarge(SecaggError):
    """Frame exceeds the 16 MiB limit."""


class Truncated(SecaggError):
    """Stream ended before a complete frame was read."""


class UnknownMsgType(SecaggError):
    """Frame carried an unregistered message type byte."""


# --- protocol / configuration ---

class ConfigError(SecaggError):
    """Rejected or inconsistent protocol configuration."""


class IllegalMessage(SecaggError):
    """Message type not legal for the current variant and phase."""


# --- benchmarking ---

class InsufficientPoints(SecaggError):
    """Scalability fit needs at least three distinct axis values."""
