"""Threshold additively homomorphic encryption.

Exponential ElGamal over a prime-order group with the secret key Shamir-shared
among n parties (threshold t). Good enough for aggregation because the only
homomorphic operation anyone runs here is addition:

    Enc(m)  = (g^r, g^m * pk^r)          pk = g^s
    Eval    = componentwise product       (adds plaintexts in the exponent)
    PartialDec_i = c1^{s_i}               s_i = f(i), f(0) = s
    Combine = c2 / prod PartialDec_i^{lambda_i}, then a discrete-log search
              over the signed window [-n*bound, n*bound]

The discrete log is recovered by baby-step giant-step, so the plaintext
window has to stay polynomial. Aggregates of 64-bit-ish counters are fine;
this is not a general FHE replacement.

Dealer-based setup: whoever calls setup() sees the secret for an instant.
Distributed key generation is out of scope.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field

from .errors import (
    BoundTooLarge,
    DiscreteLogOutOfRange,
    EmptyInput,
    InvalidThreshold,
    PlaintextOutOfRange,
    ThresholdNotMet,
)
from .group import DEFAULT_GROUP, PrimeOrderGroup, get_group, mpz

DEFAULT_BOUND = 2 ** 32


@dataclass(frozen=True)
class ThfheParams:
    """Public parameters shared by all key holders."""

    group_id: str = DEFAULT_GROUP
    plaintext_bound: int = DEFAULT_BOUND
    n_parties: int = 1
    threshold: int = 1

    def __post_init__(self):
        group = get_group(self.group_id)
        if not 1 <= self.threshold <= self.n_parties:
            raise InvalidThreshold(
                f"threshold {self.threshold} not in [1, {self.n_parties}]")
        if self.plaintext_bound < 1:
            raise BoundTooLarge("plaintext bound must be positive")
        # The signed decode window must embed injectively into Z_q.
        if 2 * self.plaintext_bound * self.n_parties >= group.q:
            raise BoundTooLarge("decode window does not fit the group order")

    def group(self) -> PrimeOrderGroup:
        return get_group(self.group_id)

    @property
    def decode_radius(self) -> int:
        return self.n_parties * self.plaintext_bound


@dataclass(frozen=True)
class JointPublicKey:
    group_element: int
    params: ThfheParams


@dataclass(frozen=True)
class SecretKeyShare:
    party_index: int  # 1-based; x=0 is the joint secret
    scalar_share: int


@dataclass(frozen=True)
class Ciphertext:
    c1: int
    c2: int

    def to_bytes(self, group: PrimeOrderGroup) -> bytes:
        return group.encode_element(self.c1) + group.encode_element(self.c2)

    @classmethod
    def from_bytes(cls, data: bytes, group: PrimeOrderGroup) -> "Ciphertext":
        n = group.element_size
        return cls(
            c1=group.decode_element(data[:n]),
            c2=group.decode_element(data[n:]),
        )


@dataclass(frozen=True)
class PartialDecryption:
    party_index: int
    share_element: int


def _rand_scalar(group: PrimeOrderGroup, rng) -> int:
    if rng is None:
        return secrets.randbelow(group.q)
    return rng.randrange(group.q)


def setup(n: int, t: int, bound: int = DEFAULT_BOUND,
          group_id: str = DEFAULT_GROUP, rng=None,
          ) -> tuple[JointPublicKey, list[SecretKeyShare]]:
    """Deal a fresh key: joint public key plus one share per party.

    The sharing polynomial has degree t-1, so any t shares reconstruct
    and any t-1 reveal nothing about s.
    """
    params = ThfheParams(group_id=group_id, plaintext_bound=bound,
                         n_parties=n, threshold=t)
    group = params.group()
    coeffs = [_rand_scalar(group, rng) for _ in range(t)]
    secret = coeffs[0]
    shares = []
    for i in range(1, n + 1):
        acc = 0
        for c in reversed(coeffs):  # Horner
            acc = (acc * i + c) % group.q
        shares.append(SecretKeyShare(party_index=i, scalar_share=acc))
    pk = JointPublicKey(group_element=int(group.exp_g(secret)), params=params)
    return pk, shares


def encrypt(value: int, pk: JointPublicKey, rng=None) -> Ciphertext:
    group = pk.params.group()
    if abs(value) > pk.params.plaintext_bound:
        raise PlaintextOutOfRange(
            f"|{value}| > bound {pk.params.plaintext_bound}")
    r = _rand_scalar(group, rng)
    return encrypt_with_randomness(value, pk, r)


def encrypt_with_randomness(value: int, pk: JointPublicKey, r: int) -> Ciphertext:
    """Deterministic encryption for known-answer tests. r must be fresh
    and uniform when used for anything but tests."""
    group = pk.params.group()
    if abs(value) > pk.params.plaintext_bound:
        raise PlaintextOutOfRange(
            f"|{value}| > bound {pk.params.plaintext_bound}")
    c1 = group.exp_g(r)
    c2 = group.mul(group.exp_g(value % group.q),
                   group.pow(pk.group_element, r))
    return Ciphertext(c1=int(c1), c2=int(c2))


def eval_sum(pk: JointPublicKey, cts: list[Ciphertext]) -> Ciphertext:
    """Homomorphic addition of every ciphertext in the list."""
    if not cts:
        raise EmptyInput("nothing to aggregate")
    group = pk.params.group()
    c1 = mpz(1)
    c2 = mpz(1)
    p = mpz(group.p)
    for ct in cts:
        c1 = (c1 * ct.c1) % p
        c2 = (c2 * ct.c2) % p
    return Ciphertext(c1=int(c1), c2=int(c2))


def partial_decrypt(ct: Ciphertext, share: SecretKeyShare,
                    params: ThfheParams) -> PartialDecryption:
    group = params.group()
    return PartialDecryption(
        party_index=share.party_index,
        share_element=int(group.pow(ct.c1, share.scalar_share)),
    )


def _lagrange_at_zero(indices: list[int], q: int) -> list[int]:
    """Coefficients lambda_i with sum lambda_i * f(x_i) = f(0) mod q."""
    coeffs = []
    for i, xi in enumerate(indices):
        num, den = 1, 1
        for j, xj in enumerate(indices):
            if i == j:
                continue
            num = (num * xj) % q
            den = (den * (xj - xi)) % q
        coeffs.append((num * pow(den, -1, q)) % q)
    return coeffs


def combine(ct: Ciphertext, partials: list[PartialDecryption],
            params: ThfheParams) -> int:
    """Recover the plaintext sum from at least t partial decryptions."""
    indices = [pd.party_index for pd in partials]
    if len(set(indices)) != len(indices):
        raise ValueError("duplicate party index in partial decryptions")
    if len(indices) < params.threshold:
        raise ThresholdNotMet(
            f"{len(indices)} partial decryptions, need {params.threshold}")
    for idx in indices:
        if not 1 <= idx <= params.n_parties:
            raise ValueError(f"party index {idx} out of range")
    group = params.group()
    lam = _lagrange_at_zero(indices, group.q)
    mask = mpz(1)
    p = mpz(group.p)
    for pd, l in zip(partials, lam):
        mask = (mask * group.pow(pd.share_element, l)) % p
    m_elem = group.mul(ct.c2, group.inv(mask))
    return bsgs_decode(group, m_elem, params.decode_radius)


# Baby-step tables keyed by (group name, step size); step sizes are rounded
# up to powers of two so different radii share tables.
_BSGS_TABLES: dict[tuple[str, int], tuple[dict, object]] = {}
_BSGS_MAX_TABLES = 8


def _bsgs_table(group: PrimeOrderGroup, step: int):
    key = (group.name, step)
    cached = _BSGS_TABLES.get(key)
    if cached is not None:
        return cached
    table = {}
    acc = mpz(1)
    p = mpz(group.p)
    g = mpz(group.g)
    for j in range(step):
        table.setdefault(int(acc), j)
        acc = (acc * g) % p
    giant = group.inv(group.exp_g(step))  # g^{-step}
    if len(_BSGS_TABLES) >= _BSGS_MAX_TABLES:
        _BSGS_TABLES.pop(next(iter(_BSGS_TABLES)))
    _BSGS_TABLES[key] = (table, giant)
    return table, giant


def bsgs_decode(group: PrimeOrderGroup, element, radius: int) -> int:
    """Signed discrete log of element, searched over [-radius, radius].

    Raises DiscreteLogOutOfRange when no exponent in the window matches,
    which is also how corrupted partial decryptions usually surface.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    span = 2 * radius + 1
    step = 1 << ((span.bit_length() + 1) // 2)
    table, giant = _bsgs_table(group, step)
    # Shift the window to [0, 2*radius]: search m' with g^{m'} = element * g^radius.
    gamma = group.mul(element, group.exp_g(radius))
    p = mpz(group.p)
    giant = mpz(giant)
    for i in range(0, (span + step - 1) // step + 1):
        j = table.get(int(gamma))
        if j is not None:
            m = i * step + j - radius
            if -radius <= m <= radius:
                return m
        gamma = (gamma * giant) % p
    raise DiscreteLogOutOfRange(f"no exponent within +-{radius}")


# --- known-answer vector files ---
#
# Line-oriented text: comment/header lines start with '#', data lines are
#     m r -> c1_hex c2_hex
# The header pins the group and the joint public key so the file is
# self-contained. The dealer secret is derived from a fixed tag, making
# regeneration deterministic without trusting any RNG call order.

KAT_SECRET_TAG = b"secagg thfhe kat v1"


def kat_keypair(group_id: str) -> tuple[JointPublicKey, int]:
    """Fixed test-vector key for group_id: 1-of-1 sharing, derived secret."""
    group = get_group(group_id)
    secret = group.hash_to_scalar(KAT_SECRET_TAG)
    params = ThfheParams(group_id=group_id, plaintext_bound=DEFAULT_BOUND,
                         n_parties=1, threshold=1)
    pk = JointPublicKey(group_element=int(group.exp_g(secret)), params=params)
    return pk, secret


def dump_kat(path, group_id: str, pairs: list[tuple[int, int]]) -> None:
    """Write test vectors for (message, randomness) pairs."""
    pk, _ = kat_keypair(group_id)
    group = get_group(group_id)
    with open(path, "w") as fh:
        fh.write(f"# group: {group_id}\n")
        fh.write(f"# pk: {group.encode_element(pk.group_element).hex()}\n")
        for m, r in pairs:
            ct = encrypt_with_randomness(m, pk, r)
            fh.write(f"{m} {r} -> "
                     f"{group.encode_element(ct.c1).hex()} "
                     f"{group.encode_element(ct.c2).hex()}\n")


def load_kat(path) -> tuple[str, list[tuple[int, int, Ciphertext]]]:
    """Read a vector file; returns (group_id, [(m, r, expected ct)])."""
    group_id = None
    cases = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# group:"):
                    group_id = line.split(":", 1)[1].strip()
                continue
            if group_id is None:
                raise ValueError(f"{path}: data before group header")
            left, right = line.split("->")
            m_str, r_str = left.split()
            c1_hex, c2_hex = right.split()
            group = get_group(group_id)
            ct = Ciphertext(
                c1=group.decode_element(bytes.fromhex(c1_hex)),
                c2=group.decode_element(bytes.fromhex(c2_hex)),
            )
            cases.append((int(m_str), int(r_str), ct))
    if group_id is None:
        raise ValueError(f"{path}: missing group header")
    return group_id, cases
