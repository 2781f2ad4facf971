"""
Answer matrices, the logistic-regression rule and solution fitness
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.preprocessing import StandardScaler

from src.data.dataset import TargetRecord
from src.qbs.budget import allocate_budget
from src.qbs.mechanisms import QbsInstance, QbsKind
from src.qbs.query import Query, Solution, canonical_key

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RuleHyper:
    l2: float = 1.0
    max_iters: int = 500
    tol: float = 1e-6


@dataclass
class AnswerMatrix:
    X: np.ndarray
    y: np.ndarray

    @property
    def d(self) -> int:
        return int(self.X.shape[0])

    @property
    def m(self) -> int:
        return int(self.X.shape[1])


@dataclass(frozen=True)
class TrainedRule:
    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_sds: np.ndarray
    threshold: float = 0.5

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return ((X - self.feature_means) / self.feature_sds) @ self.weights + self.bias

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        # probability ties predict 0
        return (expit(self.decision(X)) > self.threshold).astype(np.int64)

    def to_dict(self) -> Dict[str, object]:
        return {
            "weights": self.weights.tolist(),
            "bias": float(self.bias),
            "feature_means": self.feature_means.tolist(),
            "feature_sds": self.feature_sds.tolist(),
            "threshold": self.threshold,
        }


class FleetPart:
    """
    QBS instances with the target's sensitive bit in each protected dataset

    Columns of answers for deterministic mechanisms and of true counts are
    memoized per query, so repeated evaluations only touch new queries.
    """

    def __init__(self, members: Sequence[Tuple[QbsInstance, int]]):
        self.members: List[Tuple[QbsInstance, int]] = list(members)
        self._answers: Dict[bytes, np.ndarray] = {}
        self._counts: Dict[bytes, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.members)

    @property
    def instances(self) -> List[QbsInstance]:
        return [inst for inst, _ in self.members]

    @property
    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.members], dtype=np.int64)

    @property
    def seeds(self) -> List[int]:
        return [inst.instance_seed for inst, _ in self.members]

    @property
    def kind(self) -> Optional[QbsKind]:
        return self.members[0][0].kind if self.members else None

    def answer_column(self, q: Query) -> np.ndarray:
        key = canonical_key(q)
        column = self._answers.get(key)
        if column is None:
            column = np.array([inst.answer(q) for inst in self.instances], dtype=np.int64)
            self._answers[key] = column
        return column

    def count_column(self, q: Query) -> np.ndarray:
        key = canonical_key(q)
        column = self._counts.get(key)
        if column is None:
            column = np.array([inst.true_count(q) for inst in self.instances], dtype=np.int64)
            self._counts[key] = column
        return column

    def count_matrix(self, queries: Sequence[Query]) -> np.ndarray:
        if not queries:
            return np.zeros((len(self), 0), dtype=np.int64)
        return np.column_stack([self.count_column(q) for q in queries])


@dataclass
class AuxFleet:
    target: TargetRecord
    train: FleetPart
    val: FleetPart
    test_seeds: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not isinstance(self.train, FleetPart):
            self.train = FleetPart(self.train)
        if not isinstance(self.val, FleetPart):
            self.val = FleetPart(self.val)
        seeds = self.train.seeds + self.val.seeds + list(self.test_seeds)
        if len(set(seeds)) != len(seeds):
            raise ValueError("Auxiliary and test QBS instance seeds must be pairwise distinct")

    @property
    def kind(self) -> Optional[QbsKind]:
        return self.train.kind


def matrix_queries(sol: Solution, kind: Optional[QbsKind]) -> List[Query]:
    """Queries behind each answer-matrix column"""
    if kind is not None and kind.budgeted:
        return allocate_budget(sol).queries if sol.m else []
    return list(sol.queries)


def build_matrix(sol: Solution, fleet_part: Union[FleetPart, Sequence[Tuple[QbsInstance, int]]]) -> AnswerMatrix:
    """
    Answers of every instance to the solution, one row per instance

    Deterministic mechanisms reuse memoized columns; fresh-noise mechanisms
    answer every occurrence; budgeted ones answer each distinct query once
    with its proportional fraction after a budget reset.
    """
    part = fleet_part if isinstance(fleet_part, FleetPart) else FleetPart(fleet_part)
    y = part.labels
    kind = part.kind
    if kind is None or sol.m == 0:
        return AnswerMatrix(np.zeros((len(part), 0)), y)

    if kind.deterministic:
        X = np.column_stack([part.answer_column(q) for q in sol.queries])
    elif kind.budgeted:
        plan = allocate_budget(sol)
        counts = part.count_matrix(plan.queries)
        rows = []
        for k, inst in enumerate(part.instances):
            inst.reset_budget()
            rows.append(inst.answer_plan(plan.queries, plan.fractions, counts[k]))
        X = np.vstack(rows)
    else:
        counts = part.count_matrix(sol.queries)
        X = np.vstack([inst.answer_many(sol.queries, counts[k]) for k, inst in enumerate(part.instances)])
    return AnswerMatrix(X.astype(np.float64), y)


def train_rule(mat: AnswerMatrix, hyper: RuleHyper = RuleHyper()) -> TrainedRule:
    """
    Fit a standardized L2 logistic regression

    A single-class label vector or an empty matrix yields a constant rule
    for the majority class.
    """
    if mat.d == 0:
        raise ValueError("Cannot train a rule on zero samples")

    classes = np.unique(mat.y)
    if len(classes) < 2 or mat.m == 0:
        majority = int(np.mean(mat.y) > 0.5)
        logger.debug(f"Constant rule for class {majority} (classes={classes.tolist()}, m={mat.m})")
        return TrainedRule(
            weights=np.zeros(mat.m),
            bias=1.0 if majority else -1.0,
            feature_means=np.zeros(mat.m),
            feature_sds=np.ones(mat.m),
        )

    scaler = StandardScaler().fit(mat.X)
    model = LogisticRegression(C=1.0 / hyper.l2, max_iter=hyper.max_iters, tol=hyper.tol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model.fit(scaler.transform(mat.X), mat.y)

    return TrainedRule(
        weights=model.coef_[0].astype(np.float64),
        bias=float(model.intercept_[0]),
        feature_means=scaler.mean_.astype(np.float64),
        feature_sds=scaler.scale_.astype(np.float64),
    )


def predict(rule: TrainedRule, x: Sequence[float]) -> int:
    return int(rule.predict_batch(np.asarray(x, dtype=np.float64)[None, :])[0])


def accuracy(rule: TrainedRule, mat: AnswerMatrix) -> float:
    if mat.d == 0:
        return 0.0
    return float(np.mean(rule.predict_batch(mat.X) == mat.y))


@dataclass(frozen=True)
class FitnessReport:
    fitness: float
    train_accuracy: float
    val_accuracy: float
    rule: TrainedRule


def evaluate_fitness_detailed(sol: Solution, fleet: AuxFleet, hyper: RuleHyper = RuleHyper()) -> FitnessReport:
    train = build_matrix(sol, fleet.train)
    rule = train_rule(train, hyper)
    train_acc = accuracy(rule, train)
    val_acc = accuracy(rule, build_matrix(sol, fleet.val))
    return FitnessReport(min(train_acc, val_acc), train_acc, val_acc, rule)


def evaluate_fitness(sol: Solution, fleet: AuxFleet, hyper: RuleHyper = RuleHyper()) -> float:
    """min(training accuracy, validation accuracy) of the rule trained on this solution"""
    return evaluate_fitness_detailed(sol, fleet, hyper).fitness
