"""
Restricted counting-query space: operator strings bound to a target's values
"""
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.data.dataset import Dataset
from src.exceptions import NoCondition


class Operator(IntEnum):
    EQ = 0
    NEQ = 1
    NONE = 2


OPERATORS = (Operator.EQ, Operator.NEQ, Operator.NONE)

GLYPHS = {Operator.EQ: "=", Operator.NEQ: "!", Operator.NONE: "_"}
_FROM_GLYPH = {glyph: op for op, glyph in GLYPHS.items()}

OperatorVec = Tuple[Operator, ...]


@dataclass(frozen=True)
class Query:
    """
    Conjunction of per-attribute conditions

    values[i] is the target's known value for i < n-1; the sensitive attribute
    compares against 0, so EQ there means s = 0 and NEQ means s = 1.
    """
    ops: OperatorVec
    values: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(Operator(o) for o in self.ops))
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if len(self.ops) != len(self.values):
            raise ValueError(f"{len(self.ops)} operators for {len(self.values)} values")
        if self.values and self.values[-1] != 0:
            raise ValueError("Sensitive comparison value must be 0")

    @classmethod
    def bind(cls, ops: Sequence[int], known_values: Sequence[int]) -> "Query":
        return cls(tuple(ops), tuple(known_values) + (0,))

    @property
    def n(self) -> int:
        return len(self.ops)

    @property
    def known_values(self) -> Tuple[int, ...]:
        return self.values[:-1]

    def condition_indices(self) -> List[int]:
        return [i for i, op in enumerate(self.ops) if op is not Operator.NONE]

    @property
    def n_conditions(self) -> int:
        return len(self.condition_indices())

    def with_op(self, i: int, op: Operator) -> "Query":
        ops = list(self.ops)
        ops[i] = op
        return Query(tuple(ops), self.values)

    def flip_sensitive(self) -> "Query":
        """Swap EQ and NEQ on the sensitive attribute"""
        last = self.ops[-1]
        if last is Operator.NONE:
            return self
        return self.with_op(self.n - 1, Operator.NEQ if last is Operator.EQ else Operator.EQ)

    def to_text(self) -> str:
        return ops_to_text(self.ops)


def ops_to_text(ops: Sequence[int]) -> str:
    return ".".join(GLYPHS[Operator(o)] for o in ops)


def ops_from_text(text: str) -> OperatorVec:
    try:
        return tuple(_FROM_GLYPH[g] for g in text.strip().split("."))
    except KeyError as e:
        raise ValueError(f"Unknown operator glyph {e} in '{text}'") from e


def matches(row: Sequence[int], q: Query) -> int:
    for op, value, cell in zip(q.ops, q.values, row):
        if op is Operator.EQ and cell != value:
            return 0
        if op is Operator.NEQ and cell == value:
            return 0
    return 1


def match_mask(rows: np.ndarray, q: Query) -> np.ndarray:
    mask = np.ones(rows.shape[0], dtype=bool)
    for i, op in enumerate(q.ops):
        if op is Operator.EQ:
            mask &= rows[:, i] == q.values[i]
        elif op is Operator.NEQ:
            mask &= rows[:, i] != q.values[i]
    return mask


def true_count(d: Dataset, q: Query) -> int:
    return int(match_mask(d.rows, q).sum())


def query_set(d: Dataset, q: Query) -> List[int]:
    return np.flatnonzero(match_mask(d.rows, q)).tolist()


def canonical_key(q: Query) -> bytes:
    """Conditions as `<i>:<OP>:<v>` tokens joined by `;`; NONE contributes nothing"""
    return b";".join(condition_key(q, i) for i in q.condition_indices())


def condition_key(q: Query, i: int) -> bytes:
    op = q.ops[i]
    if op is Operator.NONE:
        raise NoCondition(f"Attribute {i} carries no condition")
    return f"{i}:{op.name}:{q.values[i]}".encode()


def search_space_size(n: int, m: int) -> int:
    """Number of multisets of m queries over 3^n operator strings"""
    return math.comb(3 ** n + m - 1, m)


class CountIndex:
    """
    Per-row bitmask of which attributes equal a query value vector

    All queries bound to the same target share one index: a row matches
    iff its code has every EQ bit set and no NEQ bit set.
    """

    def __init__(self, rows: np.ndarray, values: Sequence[int]):
        n = rows.shape[1]
        weights = np.left_shift(1, np.arange(n, dtype=np.int64))
        self.codes = (rows == np.asarray(values)).astype(np.int64) @ weights
        self.pattern_counts = np.bincount(self.codes, minlength=1 << n)
        self._patterns = np.arange(1 << n, dtype=np.int64)
        self._selection: Dict[OperatorVec, np.ndarray] = {}

    @staticmethod
    def _bits(ops: Sequence[int]) -> Tuple[int, int]:
        eq_bits = sum(1 << i for i, op in enumerate(ops) if op == Operator.EQ)
        neq_bits = sum(1 << i for i, op in enumerate(ops) if op == Operator.NEQ)
        return eq_bits, neq_bits

    def _patterns_for(self, ops: OperatorVec) -> np.ndarray:
        selected = self._selection.get(ops)
        if selected is None:
            eq_bits, neq_bits = self._bits(ops)
            selected = ((self._patterns & eq_bits) == eq_bits) & ((self._patterns & neq_bits) == 0)
            self._selection[ops] = selected
        return selected

    def count(self, ops: OperatorVec) -> int:
        return int(self.pattern_counts[self._patterns_for(ops)].sum())

    def member_mask(self, ops: OperatorVec) -> np.ndarray:
        eq_bits, neq_bits = self._bits(ops)
        return ((self.codes & eq_bits) == eq_bits) & ((self.codes & neq_bits) == 0)

    def query_set(self, ops: OperatorVec) -> np.ndarray:
        return np.flatnonzero(self.member_mask(ops))


@dataclass(frozen=True)
class Solution:
    """Multiset of m queries, stored sorted by canonical key"""
    queries: Tuple[Query, ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.queries, key=canonical_key))
        object.__setattr__(self, "queries", ordered)

    @classmethod
    def from_ops(cls, ops_list: Iterable[Sequence[int]], known_values: Sequence[int]) -> "Solution":
        return cls(tuple(Query.bind(ops, known_values) for ops in ops_list))

    @property
    def m(self) -> int:
        return len(self.queries)

    @property
    def ops(self) -> List[OperatorVec]:
        return [q.ops for q in self.queries]

    def key(self) -> Tuple[bytes, ...]:
        return tuple(canonical_key(q) for q in self.queries)

    def multiplicities(self) -> List[Tuple[Query, int]]:
        """Distinct queries in canonical order with their counts"""
        grouped: List[Tuple[Query, int]] = []
        last: Optional[bytes] = None
        for q in self.queries:
            k = canonical_key(q)
            if grouped and k == last:
                grouped[-1] = (grouped[-1][0], grouped[-1][1] + 1)
            else:
                grouped.append((q, 1))
            last = k
        return grouped

    def to_text(self) -> str:
        return "\n".join(q.to_text() for q in self.queries)
