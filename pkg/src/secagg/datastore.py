"""Party-local datasets and the query language evaluated over them.

A dataset is a single column of bounded signed integers. Queries are
SUM or COUNT with an optional comparison predicate; AVG never reaches
evaluation directly, the protocol layer expands it into a (SUM, COUNT)
pair and divides after decryption.

Query evaluation is pure: same query, same dataset, same subresult.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import (
    BoundViolation,
    EmptyInput,
    Overflow,
    ParseError,
    QueryMalformed,
    SecaggError,
)

DEFAULT_DATA_BOUND = 2 ** 31

_INT64_MAX = 2 ** 63 - 1


class QueryKind(IntEnum):
    SUM = 1
    COUNT = 2
    AVG_PAIR = 3


_NUMPY_OPS = {
    "==": np.equal,
    "!=": np.not_equal,
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
}

_OP_CODES = {"==": 1, "!=": 2, "<": 3, "<=": 4, ">": 5, ">=": 6}
_CODE_OPS = {v: k for k, v in _OP_CODES.items()}


@dataclass(frozen=True)
class Predicate:
    op: str
    value: int

    def __post_init__(self):
        if self.op not in _NUMPY_OPS:
            raise QueryMalformed(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class Query:
    kind: QueryKind
    predicate: Predicate | None = None
    query_id: int = 0

    # Fixed 15-byte wire form: kind(1) flags(1) op(1) const(8, signed LE)
    # query_id(4, LE). Predicate fields are zero when flags bit 0 is clear.
    WIRE_SIZE = 15

    def to_bytes(self) -> bytes:
        has_pred = self.predicate is not None
        op = _OP_CODES[self.predicate.op] if has_pred else 0
        const = self.predicate.value if has_pred else 0
        return (bytes([int(self.kind), 1 if has_pred else 0, op])
                + const.to_bytes(8, "little", signed=True)
                + self.query_id.to_bytes(4, "little"))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Query":
        if len(data) != cls.WIRE_SIZE:
            raise QueryMalformed(f"query encoding must be {cls.WIRE_SIZE} bytes")
        try:
            kind = QueryKind(data[0])
        except ValueError:
            raise QueryMalformed(f"unknown query kind {data[0]}") from None
        pred = None
        if data[1] == 1:
            if data[2] not in _CODE_OPS:
                raise QueryMalformed(f"unknown operator code {data[2]}")
            pred = Predicate(op=_CODE_OPS[data[2]],
                             value=int.from_bytes(data[3:11], "little", signed=True))
        elif data[1] != 0:
            raise QueryMalformed("bad predicate flag")
        return cls(kind=kind, predicate=pred,
                   query_id=int.from_bytes(data[11:15], "little"))

    @classmethod
    def parse(cls, text: str, query_id: int = 0) -> "Query":
        """Parse 'SUM', 'COUNT where > 5', 'AVG where == 3', ..."""
        parts = text.strip().split()
        if not parts:
            raise QueryMalformed("empty query text")
        kind_name = parts[0].upper()
        kinds = {"SUM": QueryKind.SUM, "COUNT": QueryKind.COUNT,
                 "AVG": QueryKind.AVG_PAIR}
        if kind_name not in kinds:
            raise QueryMalformed(f"unknown query kind {parts[0]!r}")
        pred = None
        if len(parts) > 1:
            if len(parts) != 4 or parts[1].lower() != "where":
                raise QueryMalformed(f"cannot parse query {text!r}")
            try:
                pred = Predicate(op=parts[2], value=int(parts[3]))
            except ValueError:
                raise QueryMalformed(f"bad predicate constant {parts[3]!r}") from None
        return cls(kind=kinds[kind_name], predicate=pred, query_id=query_id)

    def text(self) -> str:
        name = {QueryKind.SUM: "SUM", QueryKind.COUNT: "COUNT",
                QueryKind.AVG_PAIR: "AVG"}[self.kind]
        if self.predicate is None:
            return name
        return f"{name} where {self.predicate.op} {self.predicate.value}"


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    party_id: int = 0
    bound: int = DEFAULT_DATA_BOUND

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class Subresult:
    value: int
    query_id: int = 0

    WIRE_SIZE = 12

    def to_bytes(self) -> bytes:
        if abs(self.value) > _INT64_MAX:
            raise Overflow(f"subresult {self.value} exceeds 64 bits")
        return (self.value.to_bytes(8, "little", signed=True)
                + self.query_id.to_bytes(4, "little"))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Subresult":
        if len(data) != cls.WIRE_SIZE:
            raise QueryMalformed(f"subresult encoding must be {cls.WIRE_SIZE} bytes")
        return cls(value=int.from_bytes(data[:8], "little", signed=True),
                   query_id=int.from_bytes(data[8:12], "little"))


def load_dataset(path, party_id: int = 0,
                 bound: int = DEFAULT_DATA_BOUND) -> Dataset:
    """Read one signed integer per line. Strict: any unparsable or
    out-of-bound line fails with its line number."""
    values = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                raise ParseError("blank line", line=lineno)
            try:
                v = int(line)
            except ValueError:
                raise ParseError(f"not an integer: {line!r}", line=lineno) from None
            if abs(v) >= bound:
                raise BoundViolation(f"line {lineno}: |{v}| >= bound {bound}")
            values.append(v)
    return Dataset(values=np.array(values, dtype=np.int64),
                   party_id=party_id, bound=bound)


def generate_dataset(seed: int, size: int, bound: int,
                     party_id: int = 0) -> Dataset:
    """Synthetic data, uniform over [0, bound). Same seed, same data."""
    if bound < 1:
        raise BoundViolation("generator bound must be positive")
    rng = np.random.default_rng(seed)
    values = rng.integers(0, bound, size=size, dtype=np.int64)
    return Dataset(values=values, party_id=party_id, bound=bound)


def _exact_sum(arr: np.ndarray, bound: int) -> int:
    # int64 accumulation is exact only while len * bound stays under 2^63.
    if arr.size * bound < _INT64_MAX:
        return int(arr.sum(dtype=np.int64))
    return int(sum(int(v) for v in arr))


def eval_query(query: Query, dataset: Dataset) -> Subresult:
    """Evaluate one query over one party's data."""
    if query.kind == QueryKind.AVG_PAIR:
        raise QueryMalformed("AVG must be expanded to SUM and COUNT first")
    values = dataset.values
    if query.predicate is not None:
        mask = _NUMPY_OPS[query.predicate.op](values, query.predicate.value)
        values = values[mask]
    if query.kind == QueryKind.SUM:
        result = _exact_sum(values, dataset.bound)
    elif query.kind == QueryKind.COUNT:
        result = int(values.size)
    else:
        raise QueryMalformed(f"unknown query kind {query.kind}")
    if abs(result) > _INT64_MAX:
        raise Overflow(f"query result {result} exceeds 64 bits")
    return Subresult(value=result, query_id=query.query_id)


def eval_candidate_set(queries: list[Query], dataset: Dataset) -> list[Subresult]:
    """Evaluate a whole candidate universe, preserving order."""
    if not queries:
        raise EmptyInput("candidate set is empty")
    out = []
    for i, q in enumerate(queries):
        try:
            out.append(eval_query(q, dataset))
        except SecaggError as exc:
            raise type(exc)(f"candidate {i}: {exc}") from None
    return out


def expand_avg(query: Query) -> tuple[Query, Query]:
    """Split an AVG query into the (SUM, COUNT) pair the protocol runs."""
    if query.kind != QueryKind.AVG_PAIR:
        raise QueryMalformed("only AVG queries expand")
    return (Query(QueryKind.SUM, query.predicate, query.query_id),
            Query(QueryKind.COUNT, query.predicate, query.query_id))


def make_candidates(k: int, base: Query | None = None) -> list[Query]:
    """Synthesize a k-query candidate universe.

    Defaults to SUM with k increasing threshold predicates, so every
    candidate is a plausible variation of the same analytic question.
    Candidate j gets query_id j.
    """
    if k < 1:
        raise EmptyInput("candidate universe needs k >= 1")
    kind = base.kind if base is not None else QueryKind.SUM
    out = []
    for j in range(k):
        out.append(Query(kind=kind, predicate=Predicate(op=">", value=j),
                         query_id=j))
    return out
