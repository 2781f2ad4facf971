"""
Query-based systems answering counting queries with noise and suppression
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.data.dataset import Dataset
from src.exceptions import BudgetExhausted, InvalidKind
from src.qbs.query import CountIndex, Query, condition_key
from src.qbs.seeding import (
    derive_seed,
    query_set_bytes,
    seeded_gaussian,
    seeded_uniform_int,
)

logger = logging.getLogger(__name__)

BUDGET_TOLERANCE = 1e-9
TABLEBUILDER_THRESHOLD = 4
DIFFIX_THRESHOLD_MEAN = 4.0
DIFFIX_THRESHOLD_SD = 0.5
DIFFIX_FLOOR = 2


class QbsName(Enum):
    DIFFIX = "diffix"
    TABLEBUILDER = "tablebuilder"
    SIMPLE = "simpleqbs"
    DPLAPLACE = "dplaplace"


class ThresholdMode(Enum):
    NOISY_FLOOR = "noisy-floor"
    AS_PRINTED = "as-printed"


@dataclass(frozen=True)
class QbsKind:
    name: QbsName
    tau: int = 0
    sigma: float = 0.0
    epsilon: float = 1.0
    threshold_mode: ThresholdMode = ThresholdMode.NOISY_FLOOR

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    @classmethod
    def diffix(cls, mode: ThresholdMode = ThresholdMode.NOISY_FLOOR) -> "QbsKind":
        return cls(QbsName.DIFFIX, threshold_mode=mode)

    @classmethod
    def tablebuilder(cls) -> "QbsKind":
        return cls(QbsName.TABLEBUILDER)

    @classmethod
    def simple(cls, tau: int, sigma: float) -> "QbsKind":
        return cls(QbsName.SIMPLE, tau=tau, sigma=sigma)

    @classmethod
    def dplaplace(cls, epsilon: float) -> "QbsKind":
        return cls(QbsName.DPLAPLACE, epsilon=epsilon)

    @property
    def deterministic(self) -> bool:
        return self.name in (QbsName.DIFFIX, QbsName.TABLEBUILDER)

    @property
    def budgeted(self) -> bool:
        return self.name is QbsName.DPLAPLACE

    @property
    def suppression_threshold(self) -> float:
        """Count at or below which answers are (typically) suppressed; -1 if never"""
        if self.name is QbsName.DIFFIX:
            if self.threshold_mode is ThresholdMode.AS_PRINTED:
                return DIFFIX_FLOOR
            return DIFFIX_THRESHOLD_MEAN
        if self.name is QbsName.TABLEBUILDER:
            return TABLEBUILDER_THRESHOLD
        if self.name is QbsName.SIMPLE:
            return self.tau
        return -1

    def label(self) -> str:
        if self.name is QbsName.DIFFIX:
            return f"Diffix({self.threshold_mode.value})"
        if self.name is QbsName.TABLEBUILDER:
            return "TableBuilder"
        if self.name is QbsName.SIMPLE:
            return f"SimpleQBS(tau={self.tau},sigma={self.sigma:g})"
        return f"DPLaplace(epsilon={self.epsilon:g})"


def round_answer(raw: Optional[float]) -> int:
    """Clamp at 0 and round half away from zero; None means suppressed"""
    if raw is None:
        return 0
    return int(math.floor(max(raw, 0.0) + 0.5))


def round_answers(raw: np.ndarray) -> np.ndarray:
    return np.floor(np.maximum(raw, 0.0) + 0.5).astype(np.int64)


class QbsInstance(ABC):
    """One mechanism protecting one dataset under one seed"""

    def __init__(self, kind: QbsKind, dataset: Dataset, instance_seed: int):
        self.kind = kind
        self.dataset = dataset
        self.instance_seed = int(instance_seed)
        self._indexes: Dict[Tuple[int, ...], CountIndex] = {}

    def _index(self, q: Query) -> CountIndex:
        index = self._indexes.get(q.values)
        if index is None:
            index = CountIndex(self.dataset.rows, q.values)
            self._indexes[q.values] = index
        return index

    def true_count(self, q: Query) -> int:
        return self._index(q).count(q.ops)

    def _query_set_payload(self, q: Query) -> Tuple[int, bytes]:
        ids = self._index(q).query_set(q.ops)
        return len(ids), query_set_bytes(ids)

    @abstractmethod
    def raw_answer(self, q: Query) -> Optional[float]:
        """Pre-rounding answer, or None when the query is suppressed"""

    def answer(self, q: Query) -> int:
        if self.kind.budgeted:
            raise InvalidKind(f"{self.kind.label()} answers only with a budget fraction")
        return round_answer(self.raw_answer(q))

    def answer_many(self, queries: Sequence[Query], counts: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Answer a batch in order

        Args:
            queries: Queries to answer
            counts: Optional precomputed true counts, one per query
        """
        return np.array([self.answer(q) for q in queries], dtype=np.int64)

    def answer_budgeted(self, q: Query, fraction: float) -> int:
        raise InvalidKind(f"{self.kind.label()} has no privacy budget")

    def reset_budget(self) -> None:
        raise InvalidKind(f"{self.kind.label()} has no privacy budget")

    @property
    def spent_budget(self) -> float:
        raise InvalidKind(f"{self.kind.label()} has no privacy budget")


class DiffixQbs(QbsInstance):
    """Static and dynamic per-condition noise with a noisy suppression threshold"""

    def threshold(self, qs_bytes: bytes) -> float:
        tau = seeded_gaussian(
            derive_seed(self.instance_seed, b"diffix-thresh", qs_bytes),
            DIFFIX_THRESHOLD_MEAN,
            DIFFIX_THRESHOLD_SD,
        )
        if self.kind.threshold_mode is ThresholdMode.NOISY_FLOOR:
            return max(DIFFIX_FLOOR, tau)
        return min(DIFFIX_FLOOR, tau)

    def noise(self, q: Query, qs_bytes: bytes) -> float:
        total = 0.0
        for i in q.condition_indices():
            key = condition_key(q, i)
            total += seeded_gaussian(derive_seed(self.instance_seed, b"diffix-static", key), 0.0, 1.0)
            total += seeded_gaussian(derive_seed(self.instance_seed, b"diffix-dyn", key + qs_bytes), 0.0, 1.0)
        return total

    def raw_answer(self, q: Query) -> Optional[float]:
        t, qs_bytes = self._query_set_payload(q)
        if t <= self.threshold(qs_bytes):
            return None
        return t + self.noise(q, qs_bytes)


class TableBuilderQbs(QbsInstance):
    """Suppression at 4 and uniform integer noise keyed by the query set"""

    def raw_answer(self, q: Query) -> Optional[float]:
        t, qs_bytes = self._query_set_payload(q)
        if t <= TABLEBUILDER_THRESHOLD:
            return None
        return float(t + seeded_uniform_int(derive_seed(self.instance_seed, b"tb", qs_bytes), -2, 2))


class SimpleQbs(QbsInstance):
    """Threshold tau and fresh Gaussian noise from a sequential generator"""

    def __init__(self, kind: QbsKind, dataset: Dataset, instance_seed: int):
        super().__init__(kind, dataset, instance_seed)
        self._rng = np.random.default_rng(self.instance_seed)

    def raw_answer(self, q: Query) -> Optional[float]:
        t = self.true_count(q)
        if t <= self.kind.tau:
            return None
        if self.kind.sigma == 0:
            return float(t)
        return t + float(self._rng.normal(0.0, self.kind.sigma))

    def answer_many(self, queries: Sequence[Query], counts: Optional[np.ndarray] = None) -> np.ndarray:
        if counts is None:
            counts = np.array([self.true_count(q) for q in queries], dtype=np.int64)
        counts = np.asarray(counts, dtype=np.float64)
        kept = counts > self.kind.tau
        raw = np.zeros(len(counts))
        raw[kept] = counts[kept]
        if self.kind.sigma > 0 and kept.any():
            raw[kept] += self._rng.normal(0.0, self.kind.sigma, size=int(kept.sum()))
        return round_answers(raw)


class DPLaplaceQbs(QbsInstance):
    """Laplace mechanism with a total budget split across queries"""

    def __init__(self, kind: QbsKind, dataset: Dataset, instance_seed: int):
        super().__init__(kind, dataset, instance_seed)
        self._rng = np.random.default_rng(self.instance_seed)
        self._spent = 0.0

    @property
    def spent_budget(self) -> float:
        return self._spent

    def reset_budget(self) -> None:
        self._spent = 0.0

    def _spend(self, fractions: np.ndarray) -> None:
        if (fractions <= 0).any() or (fractions > 1).any():
            raise ValueError("Budget fractions must lie in (0, 1]")
        total = self._spent + float(fractions.sum())
        if total > 1.0 + BUDGET_TOLERANCE:
            raise BudgetExhausted(
                f"Spent {self._spent:.6f}, requested {float(fractions.sum()):.6f}"
            )
        self._spent = min(total, 1.0)

    def raw_answer(self, q: Query) -> Optional[float]:
        raise InvalidKind("DPLaplace answers only with a budget fraction")

    def raw_budgeted(self, q: Query, fraction: float) -> float:
        self._spend(np.array([fraction], dtype=np.float64))
        return self.true_count(q) + float(self._rng.laplace(0.0, 1.0 / (fraction * self.kind.epsilon)))

    def answer_budgeted(self, q: Query, fraction: float) -> int:
        return round_answer(self.raw_budgeted(q, fraction))

    def answer_plan(
        self,
        queries: Sequence[Query],
        fractions: Sequence[float],
        counts: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """Answer each query once with its fraction of the budget"""
        fractions = np.asarray(fractions, dtype=np.float64)
        self._spend(fractions)
        if counts is None:
            counts = np.array([self.true_count(q) for q in queries], dtype=np.int64)
        noise = self._rng.laplace(0.0, 1.0 / (fractions * self.kind.epsilon))
        return round_answers(np.asarray(counts, dtype=np.float64) + noise)


_IMPLEMENTATIONS = {
    QbsName.DIFFIX: DiffixQbs,
    QbsName.TABLEBUILDER: TableBuilderQbs,
    QbsName.SIMPLE: SimpleQbs,
    QbsName.DPLAPLACE: DPLaplaceQbs,
}


def create_qbs(kind: QbsKind, dataset: Dataset, instance_seed: int) -> QbsInstance:
    return _IMPLEMENTATIONS[kind.name](kind, dataset, instance_seed)


def answer(qbs: QbsInstance, q: Query) -> int:
    return qbs.answer(q)


def answer_budgeted(qbs: QbsInstance, q: Query, fraction: float) -> int:
    return qbs.answer_budgeted(q, fraction)


def reset_budget(qbs: QbsInstance) -> None:
    qbs.reset_budget()
