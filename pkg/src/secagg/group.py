"""Named prime-order groups for the cryptographic paths.

Both groups are Schnorr groups: p is a safe prime, q = (p-1)/2 is prime,
and g = 2 generates the order-q subgroup of Z_p* (p % 8 == 7 makes 2 a
quadratic residue). All secret scalars live in Z_q, all public values in
the subgroup.

Group elements serialize as fixed-length little-endian unsigned integers
(element_size bytes), scalars likewise at scalar_size bytes. There is no
point compression in Z_p*; the fixed-length encoding is the canonical
form and the only one accepted on decode.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass, field

from .errors import MalformedGroupElement

try:
    from gmpy2 import mpz, powmod, invert as _invert
    _HAVE_GMPY2 = True
except ImportError:  # pragma: no cover - sandbox always has gmpy2
    _HAVE_GMPY2 = False

    def mpz(x):
        return int(x)

    def powmod(b, e, m):
        return pow(b, e, m)

    def _invert(a, m):
        return pow(a, -1, m)


# RFC 3526 group 14, 2048-bit MODP.
_P_2048 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)

# RFC 2409 Second Oakley Group, 1024-bit MODP. Kept for fast tests; the
# 2048-bit group is the default everywhere else.
_P_1024 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE65381FFFFFFFFFFFFFFFF",
    16,
)


@dataclass(frozen=True)
class PrimeOrderGroup:
    """A named Schnorr group with serialization helpers."""

    name: str
    p: int
    q: int
    g: int
    element_size: int
    scalar_size: int
    _p: object = field(init=False, repr=False, compare=False)
    _q: object = field(init=False, repr=False, compare=False)
    _g: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_p", mpz(self.p))
        object.__setattr__(self, "_q", mpz(self.q))
        object.__setattr__(self, "_g", mpz(self.g))

    # -- arithmetic (returns int-compatible mpz) --

    def pow(self, base, exp):
        return powmod(mpz(base), mpz(exp), self._p)

    def exp_g(self, exp):
        return powmod(self._g, mpz(exp), self._p)

    def mul(self, a, b):
        return (mpz(a) * mpz(b)) % self._p

    def inv(self, a):
        return _invert(mpz(a), self._p)

    @property
    def identity(self) -> int:
        return 1

    # -- scalars --

    def rand_scalar(self, rng=None) -> int:
        """Uniform scalar in [0, q). rng, if given, is a random.Random."""
        if rng is None:
            return secrets.randbelow(self.q)
        return rng.randrange(self.q)

    def hash_to_scalar(self, data: bytes) -> int:
        """Deterministic scalar from bytes (test vectors, derived keys)."""
        h = hashlib.sha512(data).digest()
        return int.from_bytes(h, "little") % self.q

    # -- membership --

    def is_element(self, x) -> bool:
        return 1 <= x < self.p

    def is_subgroup_element(self, x) -> bool:
        """Full order check: x in [1, p) and x^q == 1."""
        if not self.is_element(x):
            return False
        return powmod(mpz(x), self._q, self._p) == 1

    # -- serialization: fixed-length little-endian --

    def encode_element(self, x) -> bytes:
        return int(x).to_bytes(self.element_size, "little")

    def decode_element(self, data: bytes, check_subgroup: bool = True) -> int:
        if len(data) != self.element_size:
            raise MalformedGroupElement(
                f"expected {self.element_size} bytes, got {len(data)}")
        x = int.from_bytes(data, "little")
        if not self.is_element(x):
            raise MalformedGroupElement("value outside [1, p)")
        if check_subgroup and not self.is_subgroup_element(x):
            raise MalformedGroupElement("not in the prime-order subgroup")
        return x

    def encode_scalar(self, s: int) -> bytes:
        return int(s % self.q).to_bytes(self.scalar_size, "little")

    def decode_scalar(self, data: bytes) -> int:
        if len(data) != self.scalar_size:
            raise MalformedGroupElement(
                f"expected {self.scalar_size} bytes, got {len(data)}")
        s = int.from_bytes(data, "little")
        if s >= self.q:
            raise MalformedGroupElement("scalar not reduced mod q")
        return s


GROUPS = {
    "modp-2048": PrimeOrderGroup(
        name="modp-2048", p=_P_2048, q=(_P_2048 - 1) // 2, g=2,
        element_size=256, scalar_size=256),
    "modp-1024": PrimeOrderGroup(
        name="modp-1024", p=_P_1024, q=(_P_1024 - 1) // 2, g=2,
        element_size=128, scalar_size=128),
}

DEFAULT_GROUP = "modp-2048"


def get_group(name: str) -> PrimeOrderGroup:
    try:
        return GROUPS[name]
    except KeyError:
        raise KeyError(f"unknown group {name!r}; have {sorted(GROUPS)}") from None
