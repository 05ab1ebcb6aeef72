"""Deployment configuration: who runs what mechanism, and query visibility.

Each party and the aggregator independently run either the cryptographic
path or a TEE; the query is either public or confidential. Of the eight
corner cases, two are refused: putting parties in enclaves while the
query stays public buys nothing over the cheaper configurations, so the
config layer rejects it outright.

The six accepted homogeneous deployments get short names:

    v1  crypto parties, crypto aggregator, public query
    v2  crypto parties, TEE aggregator,    public query
    v3  crypto parties, crypto aggregator, confidential query
    v4  crypto parties, TEE aggregator,    confidential query
    v5  TEE parties,    crypto aggregator, confidential query
    v6  TEE parties,    TEE aggregator,    confidential query

Mixed per-party deployments are allowed for confidential queries only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..errors import ConfigError, InvalidThreshold


class Mechanism(str, Enum):
    CRYPTO = "crypto"
    TEE = "tee"


VARIANT_TABLE: dict[str, tuple[Mechanism, Mechanism, bool]] = {
    # (party mechanism, aggregator mechanism, query confidential)
    "v1": (Mechanism.CRYPTO, Mechanism.CRYPTO, False),
    "v2": (Mechanism.CRYPTO, Mechanism.TEE, False),
    "v3": (Mechanism.CRYPTO, Mechanism.CRYPTO, True),
    "v4": (Mechanism.CRYPTO, Mechanism.TEE, True),
    "v5": (Mechanism.TEE, Mechanism.CRYPTO, True),
    "v6": (Mechanism.TEE, Mechanism.TEE, True),
}

VARIANT_NAMES = tuple(VARIANT_TABLE)


@dataclass(frozen=True)
class VariantConfig:
    n_parties: int
    threshold: int
    party_mechs: tuple[Mechanism, ...]
    aggregator_mech: Mechanism
    query_confidential: bool
    k_candidates: int = 16
    baseline_plaintext: bool = False  # measurement control: no protection at all

    def __post_init__(self):
        if self.n_parties < 1:
            raise ConfigError("need at least one party")
        if len(self.party_mechs) != self.n_parties:
            raise ConfigError(
                f"{len(self.party_mechs)} mechanisms for {self.n_parties} parties")
        if not 1 <= self.threshold <= self.n_parties:
            raise InvalidThreshold(
                f"threshold {self.threshold} not in [1, {self.n_parties}]")
        if self.k_candidates < 1:
            raise ConfigError("candidate universe must have k >= 1")
        if self.baseline_plaintext:
            if (self.query_confidential
                    or self.aggregator_mech is not Mechanism.CRYPTO
                    or any(m is not Mechanism.CRYPTO for m in self.party_mechs)):
                raise ConfigError("baseline runs plain: no TEE, public query")
            return
        if not self.query_confidential and \
                any(m is Mechanism.TEE for m in self.party_mechs):
            raise ConfigError(
                "TEE at the parties with a public query brings no useful "
                "benefit; use crypto parties or make the query confidential")

    # -- derived views --

    @property
    def heterogeneous(self) -> bool:
        return len(set(self.party_mechs)) > 1

    @property
    def needs_thfhe(self) -> bool:
        return self.aggregator_mech is Mechanism.CRYPTO \
            and not self.baseline_plaintext

    @property
    def uses_ot(self) -> bool:
        """Confidential query to a non-TEE party forces the OT path."""
        return self.query_confidential and \
            any(m is Mechanism.CRYPTO for m in self.party_mechs)

    def crypto_parties(self) -> list[int]:
        return [i for i, m in enumerate(self.party_mechs, 1)
                if m is Mechanism.CRYPTO]

    def tee_parties(self) -> list[int]:
        return [i for i, m in enumerate(self.party_mechs, 1)
                if m is Mechanism.TEE]

    def variant_name(self) -> str:
        if self.baseline_plaintext:
            return "baseline"
        if self.heterogeneous:
            return "hetero"
        key = (self.party_mechs[0], self.aggregator_mech,
               self.query_confidential)
        for name, row in VARIANT_TABLE.items():
            if row == key:
                return name
        raise ConfigError(f"no variant name for {key}")  # unreachable

    # -- constructors --

    @classmethod
    def for_variant(cls, name: str, n: int, t: int | None = None,
                    k: int = 16) -> "VariantConfig":
        if name == "baseline":
            return cls(n_parties=n, threshold=t if t is not None else n,
                       party_mechs=(Mechanism.CRYPTO,) * n,
                       aggregator_mech=Mechanism.CRYPTO,
                       query_confidential=False, k_candidates=k,
                       baseline_plaintext=True)
        if name not in VARIANT_TABLE:
            raise ConfigError(f"unknown variant {name!r}; "
                              f"have {VARIANT_NAMES + ('baseline', 'hetero')}")
        party_mech, agg_mech, confidential = VARIANT_TABLE[name]
        return cls(n_parties=n, threshold=t if t is not None else n,
                   party_mechs=(party_mech,) * n, aggregator_mech=agg_mech,
                   query_confidential=confidential, k_candidates=k)

    @classmethod
    def heterogeneous_mix(cls, party_mechs, aggregator_mech: Mechanism,
                          t: int | None = None, k: int = 16) -> "VariantConfig":
        mechs = tuple(Mechanism(m) for m in party_mechs)
        return cls(n_parties=len(mechs),
                   threshold=t if t is not None else len(mechs),
                   party_mechs=mechs, aggregator_mech=Mechanism(aggregator_mech),
                   query_confidential=True, k_candidates=k)
