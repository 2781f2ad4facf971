"""
Runner service: strategies per target, test evaluation and aggregation
"""
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.attack.baselines import build_knowledge, run_baseline
from src.attack.rule import FleetPart, TrainedRule, accuracy, build_matrix, evaluate_fitness_detailed
from src.attack.search import (
    SearchResult,
    evolutionary_search,
    random_search,
    random_solution_baseline,
)
from src.config.experiment_config import ExperimentConfig
from src.exceptions import EmptyTestSet
from src.experiment.services.fleet_service import FleetService, TargetFleets
from src.qbs.query import Solution
from src.utils.stats_calculator import StatsCalculator

logger = logging.getLogger(__name__)


@dataclass
class TargetResult:
    repetition: int
    target_index: int
    known_values: List[int]
    strategy: str
    test_accuracy: float
    fitness: Optional[float] = None
    train_accuracy: Optional[float] = None
    val_accuracy: Optional[float] = None
    solution: List[str] = field(default_factory=list)
    history: List[Dict[str, float]] = field(default_factory=list)
    rule: Optional[Dict[str, Any]] = None
    abstentions: int = 0
    runtime_seconds: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class AttackReport:
    config: Dict[str, Any]
    qbs: str
    results: List[TargetResult]
    aggregate: Dict[str, Any]
    runtime_seconds: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "qbs": self.qbs,
            "aggregate": self.aggregate,
            "runtime_seconds": self.runtime_seconds,
            "results": [r.to_dict() for r in self.results],
        }


def evaluate_on_test(sol: Solution, rule: TrainedRule, test: FleetPart) -> float:
    """Fraction of test datasets whose target bit the rule recovers"""
    if len(test) == 0:
        raise EmptyTestSet("Test fleet holds no datasets")
    return accuracy(rule, build_matrix(sol, test))


class RunnerService:
    """Service running one strategy over every (repetition, target) pair"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.fleets = FleetService(config)
        self.kind = self.fleets.kind

    def run_target(self, repetition: int, target_index: int) -> TargetResult:
        started = time.perf_counter()
        fleets = self.fleets.build_fleets(repetition, target_index)
        if self.config.baseline_name is not None:
            result = self._run_baseline(fleets, repetition, target_index)
        else:
            result = self._run_search(fleets, repetition, target_index)
        result.runtime_seconds = time.perf_counter() - started
        logger.info(
            f"repetition={repetition} target={target_index} strategy={result.strategy} "
            f"test_accuracy={result.test_accuracy:.4f} runtime={result.runtime_seconds:.1f}s"
        )
        return result

    def _run_search(self, fleets: TargetFleets, repetition: int, target_index: int) -> TargetResult:
        n = len(fleets.target.known_values) + 1
        search_config = self.config.search.to_search_config(n, self.kind, fleets.seeds.search)
        hyper = self.config.rule.to_hyper()

        strategy = self.config.strategy
        if strategy == "random-search":
            outcome: SearchResult = random_search(fleets.aux, search_config, hyper)
        elif strategy == "random-solution":
            outcome = random_solution_baseline(fleets.aux, search_config, hyper)
        else:
            outcome = evolutionary_search(fleets.aux, search_config, hyper)

        detail = evaluate_fitness_detailed(outcome.best, fleets.aux, hyper)
        test_accuracy = evaluate_on_test(outcome.best, detail.rule, fleets.test)
        return TargetResult(
            repetition=repetition,
            target_index=target_index,
            known_values=list(fleets.target.known_values),
            strategy=strategy,
            test_accuracy=test_accuracy,
            fitness=outcome.best_fitness,
            train_accuracy=detail.train_accuracy,
            val_accuracy=detail.val_accuracy,
            solution=outcome.best.to_text().splitlines(),
            history=[asdict(h) for h in outcome.history],
            rule=detail.rule.to_dict(),
        )

    def _run_baseline(self, fleets: TargetFleets, repetition: int, target_index: int) -> TargetResult:
        name = self.config.baseline_name
        if len(fleets.test) == 0:
            raise EmptyTestSet("Test fleet holds no datasets")
        settings = self.config.baselines
        if fleets.private_dataset is not None:
            known_datasets = [fleets.private_dataset]
        else:
            sampler = fleets.samplers["train"]
            known_datasets = [sampler.draw(i)[0] for i in range(settings.oracle_samples)]
        knowledge = build_knowledge(
            fleets.target,
            self.config.scenario_enum,
            known_datasets,
            self.kind.suppression_threshold,
            settings.min_pair_score,
        )

        predictions, abstentions = [], 0
        for instance, _ in fleets.test.members:
            outcome = run_baseline(name, instance, knowledge, self.config.search.m)
            predictions.append(outcome.prediction)
            abstentions += int(outcome.abstained)
        if abstentions:
            logger.info(f"{name}: abstained on {abstentions}/{len(fleets.test)} test datasets")

        return TargetResult(
            repetition=repetition,
            target_index=target_index,
            known_values=list(fleets.target.known_values),
            strategy=self.config.strategy,
            test_accuracy=StatsCalculator.accuracy(predictions, fleets.test.labels),
            abstentions=abstentions,
        )

    def run_experiment(self, workers: int = 1) -> AttackReport:
        """
        Run every (repetition, target) pair and aggregate

        Args:
            workers: Worker processes; 1 runs inline

        Returns:
            AttackReport with per-target rows, sorted by repetition then target
        """
        started = time.perf_counter()
        counts = self.config.counts
        tasks = [(r, t) for r in range(counts.repetitions) for t in range(counts.num_targets)]
        logger.info(
            f"Running {self.config.strategy} against {self.kind.label()} "
            f"({self.config.scenario}) on {len(tasks)} targets with {workers} worker(s)"
        )

        if workers <= 1:
            results = [self.run_target(r, t) for r, t in tasks]
        else:
            payload = self.config.model_dump_json()
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_task, [(payload, r, t) for r, t in tasks]))

        results.sort(key=lambda r: (r.repetition, r.target_index))
        return AttackReport(
            config=self.config.resolved(),
            qbs=self.kind.label(),
            results=results,
            aggregate=aggregate_results(results),
            runtime_seconds=time.perf_counter() - started,
        )


def aggregate_results(results: List[TargetResult]) -> Dict[str, Any]:
    """Mean accuracy over targets, and its spread over repetitions"""
    accuracies = [r.test_accuracy for r in results]
    per_repetition: Dict[int, List[float]] = {}
    for r in results:
        per_repetition.setdefault(r.repetition, []).append(r.test_accuracy)
    repetition_means = [float(np.mean(v)) for _, v in sorted(per_repetition.items())]
    _, std = StatsCalculator.mean_and_std(repetition_means)
    return {
        "mean_accuracy": float(np.mean(accuracies)) if accuracies else 0.0,
        "std_over_repetitions": std,
        "repetition_means": repetition_means,
        "percentiles": StatsCalculator.calculate_percentiles(accuracies),
        "targets": len(results),
        "abstentions": int(sum(r.abstentions for r in results)),
    }


_RUNNERS: Dict[str, RunnerService] = {}


def _run_task(task: Tuple[str, int, int]) -> TargetResult:
    payload, repetition, target_index = task
    runner = _RUNNERS.get(payload)
    if runner is None:
        runner = RunnerService(ExperimentConfig.model_validate_json(payload))
        _RUNNERS[payload] = runner
    return runner.run_target(repetition, target_index)


def default_workers() -> int:
    return os.cpu_count() or 1
