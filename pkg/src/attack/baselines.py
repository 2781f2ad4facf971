"""
Manual attacks used as comparison points

Each attack returns a BaselineOutcome; attacks that find nothing usable
predict 0 and flag the outcome as an abstention.
"""
import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from src.data.dataset import Dataset, Scenario, TargetRecord
from src.exceptions import InvalidKind, InvalidPivot
from src.qbs.mechanisms import DPLaplaceQbs, QbsInstance, QbsName
from src.qbs.query import CountIndex, Operator, Query

logger = logging.getLogger(__name__)

CHIPPERFIELD_BOUND = 5


class OracleMode(Enum):
    EXACT = "exact"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class DifferencePair:
    subset: FrozenSet[int]
    pivot: int
    s: int
    q1: Query
    q2: Query


class BaselineOutcome(NamedTuple):
    prediction: int
    abstained: bool
    queries_used: int


def build_difference_pair(target: TargetRecord, subset: Iterable[int], pivot: int, s: int) -> DifferencePair:
    """
    q1 selects the target's values on the subset and sensitive value s;
    q2 additionally excludes the target's pivot value
    """
    subset = frozenset(int(i) for i in subset)
    n_known = len(target.known_values)
    if pivot in subset or not 0 <= pivot < n_known:
        raise InvalidPivot(f"Pivot {pivot} must be a known attribute outside {sorted(subset)}")
    if any(not 0 <= i < n_known for i in subset):
        raise InvalidPivot(f"Subset {sorted(subset)} references non-known attributes")
    if s not in (0, 1):
        raise ValueError(f"s must be 0 or 1, got {s}")

    ops = [Operator.EQ if i in subset else Operator.NONE for i in range(n_known)]
    ops.append(Operator.EQ if s == 0 else Operator.NEQ)
    q1 = Query.bind(ops, target.known_values)
    q2 = q1.with_op(pivot, Operator.NEQ)
    return DifferencePair(subset, pivot, s, q1, q2)


def candidate_pairs(target: TargetRecord, s_values: Sequence[int] = (0, 1)) -> List[DifferencePair]:
    """Every pivot with every subset of the remaining known attributes"""
    n_known = len(target.known_values)
    pairs = []
    for s in s_values:
        for pivot in range(n_known):
            others = [i for i in range(n_known) if i != pivot]
            for size in range(len(others) + 1):
                for subset in itertools.combinations(others, size):
                    pairs.append(build_difference_pair(target, subset, pivot, s))
    return pairs


def all_but_one_pairs(target: TargetRecord, s_values: Sequence[int] = (0, 1)) -> List[DifferencePair]:
    n_known = len(target.known_values)
    return [
        build_difference_pair(target, [i for i in range(n_known) if i != j], j, s)
        for s in s_values
        for j in range(n_known)
    ]


class UniquenessOracle:
    """
    Scores how often a pair's premises hold: the target is unique on the pair's
    attributes and neither query falls at or below the suppression threshold

    EXACT checks the one known dataset; EMPIRICAL averages over auxiliary draws.
    """

    def __init__(self, mode: OracleMode, datasets: Sequence[Dataset], target: TargetRecord, threshold: float):
        if not datasets:
            raise ValueError("Uniqueness oracle needs at least one dataset")
        self.mode = mode
        self.threshold = threshold
        values = target.known_values + (0,)
        self._indexes = [CountIndex(d.rows, values) for d in datasets]

    def holds(self, index: CountIndex, pair: DifferencePair) -> bool:
        n_known = len(pair.q1.ops) - 1
        unique_ops = tuple(
            Operator.EQ if (i in pair.subset or i == pair.pivot) else Operator.NONE for i in range(n_known)
        ) + (Operator.NONE,)
        if index.count(unique_ops) != 1:
            return False
        return index.count(pair.q1.ops) > self.threshold and index.count(pair.q2.ops) > self.threshold

    def score(self, pair: DifferencePair) -> float:
        return float(np.mean([self.holds(index, pair) for index in self._indexes]))


def rank_pairs(oracle: UniquenessOracle, pairs: Sequence[DifferencePair]) -> List[Tuple[DifferencePair, float]]:
    """Pairs by descending score, stable; EXACT keeps only pairs whose premises hold"""
    scored = [(pair, oracle.score(pair)) for pair in pairs]
    if oracle.mode is OracleMode.EXACT:
        scored = [(pair, score) for pair, score in scored if score > 0]
    order = np.argsort([-score for _, score in scored], kind="stable")
    return [scored[i] for i in order]


@dataclass
class AttackerKnowledge:
    target: TargetRecord
    scenario: Scenario
    oracle: UniquenessOracle
    min_pair_score: float = 0.8

    @property
    def exact(self) -> bool:
        return self.oracle.mode is OracleMode.EXACT


def build_knowledge(
    target: TargetRecord,
    scenario: Scenario,
    datasets: Sequence[Dataset],
    threshold: float,
    min_pair_score: float = 0.8,
) -> AttackerKnowledge:
    mode = OracleMode.EXACT if scenario is Scenario.EXACT_BUT_ONE else OracleMode.EMPIRICAL
    return AttackerKnowledge(target, scenario, UniquenessOracle(mode, datasets, target, threshold), min_pair_score)


def direct_query(target: TargetRecord) -> Query:
    """All known attributes equal to the target's and sensitive value 0"""
    return Query.bind([Operator.EQ] * (len(target.known_values) + 1), target.known_values)


def _require(qbs: QbsInstance, *names: QbsName) -> None:
    if qbs.kind.name not in names:
        raise InvalidKind(f"Attack does not apply to {qbs.kind.label()}")


def gadotti_decision(observations: Sequence[Tuple[int, float]]) -> int:
    """
    Likelihood-ratio test over (|A'|, delta) observations from s = 0 pairs

    Predicts 1 iff N(0, 2) explains the deltas better than N(1, 2|A'| + 2).
    """
    llr = 0.0
    for subset_size, delta in observations:
        llr += norm.logpdf(delta, 0.0, np.sqrt(2.0))
        llr -= norm.logpdf(delta, 1.0, np.sqrt(2.0 * subset_size + 2.0))
    return int(llr > 0)


def attack_diffix_gadotti(target_qbs: QbsInstance, knowledge: AttackerKnowledge) -> BaselineOutcome:
    _require(target_qbs, QbsName.DIFFIX)
    ranked = rank_pairs(knowledge.oracle, candidate_pairs(knowledge.target, s_values=(0,)))
    cutoff = 1.0 if knowledge.exact else knowledge.min_pair_score
    accepted = [pair for pair, score in ranked if score >= cutoff]
    if not accepted:
        logger.info("diffix-gadotti: no usable pairs, abstaining")
        return BaselineOutcome(0, True, 0)

    observations = [
        (len(pair.subset), target_qbs.answer(pair.q1) - target_qbs.answer(pair.q2))
        for pair in accepted
    ]
    return BaselineOutcome(gadotti_decision(observations), False, 2 * len(accepted))


def _mean_difference_decision(differences: Sequence[Tuple[int, int, int]]) -> Optional[int]:
    """Predict 0 iff the mean difference over s = 0 pairs beats s = 1; None when nothing is usable"""
    usable = [(s, r1 - r2) for s, r1, r2 in differences if r1 > 0 and r2 > 0]
    if not usable:
        return None
    means = {s: float(np.mean([r for t, r in usable if t == s] or [0.0])) for s in (0, 1)}
    return int(not means[0] > means[1])


def chipperfield_decision(differences: Sequence[Tuple[int, int, int]]) -> Optional[int]:
    """
    Decide from (s, R(q1), R(q2)) triples

    A difference of at least 5 exceeds the noise bound, so the target holds s;
    otherwise compare per-s mean differences of unsuppressed pairs.
    """
    for s, r1, r2 in differences:
        if r1 > 0 and r2 > 0 and r1 - r2 >= CHIPPERFIELD_BOUND:
            return s
    return _mean_difference_decision(differences)


def rinott_decision(differences: Sequence[Tuple[int, int, int]]) -> Optional[int]:
    """Equal unsuppressed answers mean equal query sets, so the target lacks s"""
    for s, r1, r2 in differences:
        if r1 > 0 and r2 > 0 and r1 == r2:
            return 1 - s
    return _mean_difference_decision(differences)


def _tablebuilder_pairs(knowledge: AttackerKnowledge) -> List[DifferencePair]:
    if knowledge.exact:
        ranked = rank_pairs(knowledge.oracle, candidate_pairs(knowledge.target))
        if ranked:
            return [pair for pair, _ in ranked]
    return all_but_one_pairs(knowledge.target)


def _tablebuilder_attack(
    name: str,
    decide: Callable[[Sequence[Tuple[int, int, int]]], Optional[int]],
    target_qbs: QbsInstance,
    knowledge: AttackerKnowledge,
) -> BaselineOutcome:
    _require(target_qbs, QbsName.TABLEBUILDER)
    pairs = _tablebuilder_pairs(knowledge)
    differences = [(pair.s, target_qbs.answer(pair.q1), target_qbs.answer(pair.q2)) for pair in pairs]
    prediction = decide(differences)
    if prediction is None:
        logger.info(f"{name}: every pair suppressed, abstaining")
        return BaselineOutcome(0, True, 2 * len(pairs))
    return BaselineOutcome(prediction, False, 2 * len(pairs))


def attack_tablebuilder_chipperfield(target_qbs: QbsInstance, knowledge: AttackerKnowledge) -> BaselineOutcome:
    return _tablebuilder_attack("tablebuilder-chipperfield", chipperfield_decision, target_qbs, knowledge)


def attack_tablebuilder_rinott(target_qbs: QbsInstance, knowledge: AttackerKnowledge) -> BaselineOutcome:
    return _tablebuilder_attack("tablebuilder-rinott", rinott_decision, target_qbs, knowledge)


def attack_simpleqbs(target_qbs: QbsInstance, knowledge: AttackerKnowledge, m_budget: int) -> BaselineOutcome:
    """
    Averaging attack when nothing is suppressed, otherwise difference attacks

    With tau = 0 the direct query is repeated m times and the target holds 0
    iff the mean answer is at least 1/2.
    """
    _require(target_qbs, QbsName.SIMPLE)
    if m_budget < 1:
        raise ValueError("m_budget must be positive")
    tau, sigma = target_qbs.kind.tau, target_qbs.kind.sigma

    if tau == 0:
        answers = target_qbs.answer_many([direct_query(knowledge.target)] * m_budget)
        return BaselineOutcome(int(not np.mean(answers) >= 0.5), False, m_budget)

    ranked = [(pair, score) for pair, score in rank_pairs(knowledge.oracle, candidate_pairs(knowledge.target)) if score > 0]
    repeats = max(1, m_budget // 2)
    if not ranked:
        logger.info("simpleqbs: no usable pairs, abstaining")
        return BaselineOutcome(0, True, 0)

    if sigma > 0:
        pair = ranked[0][0]
        answers = target_qbs.answer_many([pair.q1] * repeats + [pair.q2] * repeats)
        gap = float(np.mean(answers[:repeats]) - np.mean(answers[repeats:]))
        return BaselineOutcome(pair.s if gap > 0.5 else 1 - pair.s, False, 2 * repeats)

    used = 0
    for pair, _ in ranked[:repeats]:
        r1, r2 = target_qbs.answer(pair.q1), target_qbs.answer(pair.q2)
        used += 2
        if r1 > 0 and r2 > 0 and r1 - r2 in (0, 1):
            return BaselineOutcome(pair.s if r1 == r2 + 1 else 1 - pair.s, False, used)
    logger.info("simpleqbs: no pair satisfied the premises, abstaining")
    return BaselineOutcome(0, True, used)


def attack_dplaplace_uniqueness(target_qbs: DPLaplaceQbs, knowledge: AttackerKnowledge) -> BaselineOutcome:
    """Spend the whole budget on the direct query; the target holds 0 iff the answer is at least 1"""
    _require(target_qbs, QbsName.DPLAPLACE)
    value = target_qbs.answer_budgeted(direct_query(knowledge.target), 1.0)
    return BaselineOutcome(int(not value >= 1), False, 1)


BaselineFn = Callable[[QbsInstance, AttackerKnowledge, int], BaselineOutcome]

BASELINES: Dict[str, Tuple[QbsName, BaselineFn]] = {
    "diffix-gadotti": (QbsName.DIFFIX, lambda qbs, k, m: attack_diffix_gadotti(qbs, k)),
    "tablebuilder-chipperfield": (QbsName.TABLEBUILDER, lambda qbs, k, m: attack_tablebuilder_chipperfield(qbs, k)),
    "tablebuilder-rinott": (QbsName.TABLEBUILDER, lambda qbs, k, m: attack_tablebuilder_rinott(qbs, k)),
    "simpleqbs": (QbsName.SIMPLE, attack_simpleqbs),
    "dplaplace-uniqueness": (QbsName.DPLAPLACE, lambda qbs, k, m: attack_dplaplace_uniqueness(qbs, k)),
}


def run_baseline(name: str, target_qbs: QbsInstance, knowledge: AttackerKnowledge, m_budget: int) -> BaselineOutcome:
    if name not in BASELINES:
        raise ValueError(f"Unknown baseline '{name}'; choose from {sorted(BASELINES)}")
    return BASELINES[name][1](target_qbs, knowledge, m_budget)
