"""Body codecs for round messages plus the setup blob.

Round-message bodies are fixed binary layouts (documented in
docs/wire.md); the one-shot setup blob is JSON with hex-encoded binary
fields, since it is part of the offline phase and never benchmarked.
"""

from __future__ import annotations

import json

from ..datastore import Query
from ..errors import QueryMalformed
from ..group import PrimeOrderGroup
from ..thfhe import JointPublicKey, SecretKeyShare, ThfheParams

FINAL_OK = 0
FINAL_ERROR = 1


def encode_final(status: int, value: int) -> bytes:
    return bytes([status]) + value.to_bytes(8, "little", signed=True)


def decode_final(body: bytes) -> tuple[int, int]:
    if len(body) != 9:
        raise QueryMalformed(f"final result body must be 9 bytes, got {len(body)}")
    return body[0], int.from_bytes(body[1:9], "little", signed=True)


def encode_partial_dec(party_index: int, element: int,
                       group: PrimeOrderGroup) -> bytes:
    return party_index.to_bytes(4, "little") + group.encode_element(element)


def decode_partial_dec(body: bytes, group: PrimeOrderGroup) -> tuple[int, int]:
    if len(body) != 4 + group.element_size:
        raise QueryMalformed("partial decryption body has wrong length")
    return (int.from_bytes(body[:4], "little"),
            group.decode_element(body[4:], check_subgroup=False))


def encode_hello(party_index: int, node_public_key: bytes) -> bytes:
    return party_index.to_bytes(4, "little") + node_public_key


def decode_hello(body: bytes) -> tuple[int, bytes]:
    if len(body) != 36:
        raise QueryMalformed(f"hello body must be 36 bytes, got {len(body)}")
    return int.from_bytes(body[:4], "little"), body[4:36]


def encode_setup(fields: dict) -> bytes:
    return json.dumps(fields, separators=(",", ":")).encode()


def decode_setup(body: bytes) -> dict:
    return json.loads(body.decode())


def setup_blob(*, party_index: int, config, options, params: ThfheParams | None,
               pk: JointPublicKey | None, share: SecretKeyShare | None,
               agg_report_bytes: bytes | None, root_vk: bytes,
               platform_sk: bytes | None, agg_measurement: bytes,
               candidates: list[Query] | None, channel_key: bytes | None) -> dict:
    """Everything one party needs to participate, JSON-serializable."""
    blob = {
        "party_index": party_index,
        "n": config.n_parties,
        "t": config.threshold,
        "party_mech": config.party_mechs[party_index - 1].value,
        "aggregator_mech": config.aggregator_mech.value,
        "query_confidential": config.query_confidential,
        "baseline": config.baseline_plaintext,
        "group": options.group_id,
        "bound": options.plaintext_bound,
        "timeout": options.timeout,
        "root_vk": root_vk.hex(),
        "agg_measurement": agg_measurement.hex(),
        "agg_report": agg_report_bytes.hex() if agg_report_bytes else None,
        "platform_sk": platform_sk.hex() if platform_sk else None,
        "thfhe_pk": None,
        "share": None,
        "candidates": None,
        "channel_key": channel_key.hex() if channel_key else None,
    }
    if pk is not None:
        group = params.group()
        blob["thfhe_pk"] = group.encode_element(pk.group_element).hex()
    if share is not None:
        blob["share"] = {"index": share.party_index,
                         "scalar": hex(share.scalar_share)}
    if candidates is not None:
        blob["candidates"] = [q.to_bytes().hex() for q in candidates]
    return blob
