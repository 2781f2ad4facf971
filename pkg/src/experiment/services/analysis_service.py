"""
Analysis service: difference-query extraction and mechanism noise diagnostics
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from src.attack.rule import (
    AnswerMatrix,
    AuxFleet,
    FleetPart,
    RuleHyper,
    accuracy,
    build_matrix,
    matrix_queries,
    train_rule,
)
from src.attack.baselines import build_difference_pair
from src.config.experiment_config import ExperimentConfig
from src.data.dataset import TargetRecord
from src.experiment.services.fleet_service import FleetService
from src.qbs.mechanisms import DiffixQbs, QbsName, create_qbs
from src.qbs.query import Operator, Query, Solution, ops_from_text
from src.utils.stats_calculator import OracleCalculator

logger = logging.getLogger(__name__)


def find_difference_pairs(queries: Sequence[Query]) -> List[Tuple[int, int]]:
    """
    Position pairs (a, b) where b equals a except one known attribute moves
    from no condition to an exclusion
    """
    pairs = []
    for a, qa in enumerate(queries):
        for b, qb in enumerate(queries):
            if a == b:
                continue
            diff = [i for i, (x, y) in enumerate(zip(qa.ops, qb.ops)) if x != y]
            if len(diff) != 1:
                continue
            i = diff[0]
            if i < qa.n - 1 and qa.ops[i] is Operator.NONE and qb.ops[i] is Operator.NEQ:
                pairs.append((a, b))
    return pairs


def _subset_accuracy(train: AnswerMatrix, test: AnswerMatrix, columns: Sequence[int], hyper: RuleHyper) -> float:
    columns = list(columns)
    rule = train_rule(AnswerMatrix(train.X[:, columns], train.y), hyper)
    return accuracy(rule, AnswerMatrix(test.X[:, columns], test.y))


def analyze_difference_queries(
    sol: Solution,
    fleet: AuxFleet,
    test: FleetPart,
    hyper: RuleHyper = RuleHyper(),
    seed: int = 0,
) -> Dict[str, Any]:
    """
    Retrain the rule on the difference-query columns only, and on a random
    column subset of the same size

    Returns:
        {n_diff, acc_diff_only, acc_random_subset, acc_full}
    """
    queries = matrix_queries(sol, fleet.kind)
    pairs = find_difference_pairs(queries)
    diff_columns = sorted({i for pair in pairs for i in pair})

    train = build_matrix(sol, fleet.train)
    test_matrix = build_matrix(sol, test)
    rng = np.random.default_rng(seed)
    random_columns = sorted(rng.choice(len(queries), size=len(diff_columns), replace=False).tolist())

    return {
        "n_diff": len(diff_columns),
        "pairs": len(pairs),
        "acc_full": _subset_accuracy(train, test_matrix, range(len(queries)), hyper),
        "acc_diff_only": _subset_accuracy(train, test_matrix, diff_columns, hyper),
        "acc_random_subset": _subset_accuracy(train, test_matrix, random_columns, hyper),
    }


class AnalysisService:
    """Service re-running a finished experiment's solutions through the analysis"""

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)

    def load_config(self) -> ExperimentConfig:
        return ExperimentConfig.model_validate(json.loads((self.run_dir / "resolved_config.json").read_text()))

    def analyze(self) -> Dict[str, Any]:
        config = self.load_config()
        report = json.loads((self.run_dir / "report.json").read_text())
        fleets = FleetService(config)
        hyper = config.rule.to_hyper()

        rows = []
        for result in report["results"]:
            if not result.get("solution"):
                continue
            target_fleets = fleets.build_fleets(result["repetition"], result["target_index"])
            sol = Solution.from_ops(
                [ops_from_text(line) for line in result["solution"]], target_fleets.target.known_values
            )
            row = analyze_difference_queries(sol, target_fleets.aux, target_fleets.test, hyper)
            row.update(repetition=result["repetition"], target_index=result["target_index"])
            rows.append(row)
            logger.info(
                f"target={result['target_index']} n_diff={row['n_diff']} "
                f"diff_only={row['acc_diff_only']:.3f} random={row['acc_random_subset']:.3f}"
            )

        summary = {
            "targets": rows,
            "mean_acc_full": _mean(rows, "acc_full"),
            "mean_acc_diff_only": _mean(rows, "acc_diff_only"),
            "mean_acc_random_subset": _mean(rows, "acc_random_subset"),
        }
        (self.run_dir / "analysis.json").write_text(json.dumps(summary, indent=2))
        return summary


def _mean(rows: List[Dict[str, Any]], key: str) -> float:
    return float(np.mean([r[key] for r in rows])) if rows else 0.0


def qbs_diagnostics(config: ExperimentConfig, trials: int = 2000) -> Dict[str, Any]:
    """
    Monte-Carlo view of the configured mechanism on one repetition's first target

    Reports pre-round noise variance by number of conditions, suppression rate
    by true count, and for Diffix the variance of difference-pair answers
    """
    fleets = FleetService(config)
    context = fleets.prepare_repetition(0)
    target = context.targets[0]
    kind = fleets.kind
    dataset = context.test_pool
    n_known = len(target.known_values)
    rng = np.random.default_rng(config.master_seed)

    noise: Dict[int, List[float]] = {}
    suppressed: Dict[int, List[int]] = {}
    for trial in range(trials):
        ops = tuple(Operator(int(o)) for o in rng.integers(0, 3, size=n_known + 1))
        q = Query.bind(ops, target.known_values)
        instance = create_qbs(kind, dataset, trial)
        count = instance.true_count(q)
        if kind.budgeted:
            raw = instance.raw_budgeted(q, 1.0)
        else:
            raw = instance.raw_answer(q)
        suppressed.setdefault(min(count, 10), []).append(int(raw is None))
        if raw is not None:
            noise.setdefault(q.n_conditions, []).append(raw - count)

    stats: Dict[str, Any] = {
        "qbs": kind.label(),
        "trials": trials,
        "noise_variance_by_conditions": OracleCalculator.noise_variance_by_conditions(noise),
        "suppression_rate_by_count": {k: float(np.mean(v)) for k, v in sorted(suppressed.items())},
    }
    if kind.name is QbsName.DIFFIX:
        stats["difference_pairs"] = _diffix_difference_variance(kind, dataset, target, trials)
    return stats


def _diffix_difference_variance(kind, dataset, target: TargetRecord, trials: int) -> Dict[str, Any]:
    n_known = len(target.known_values)
    rows = []
    for size in range(n_known):
        pair = build_difference_pair(target, range(size), n_known - 1, 0)
        deltas = []
        for seed in range(trials):
            instance: DiffixQbs = create_qbs(kind, dataset, seed)
            r1, r2 = instance.raw_answer(pair.q1), instance.raw_answer(pair.q2)
            if r1 is None or r2 is None:
                continue
            deltas.append((r1 - instance.true_count(pair.q1)) - (r2 - instance.true_count(pair.q2)))
        rows.append({
            "subset_size": size,
            "samples": len(deltas),
            "empirical_variance": float(np.var(deltas, ddof=1)) if len(deltas) > 1 else None,
            "model_variance_excluded": 2.0,
            "model_variance_included": 2.0 * size + 2.0,
        })
    return {"pairs": rows}
