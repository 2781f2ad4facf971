"""
Evolutionary search over query multisets, plus the random baselines
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.attack.rule import AuxFleet, RuleHyper, evaluate_fitness
from src.qbs.query import OPERATORS, Operator, OperatorVec, Solution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchConfig:
    population: int = 100
    elites: int = 10
    generations: int = 200
    m: int = 100
    p_copy: float = 0.025
    p_modify: float = 0.025
    p_change: float = 0.2
    p_swap: float = 0.2
    qbs_deterministic: bool = True
    stop_fitness: float = 0.9999
    stop_patience: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if self.population < 1 or self.generations < 1:
            raise ValueError("population and generations must be positive")
        if not 0 <= self.elites < self.population:
            raise ValueError(f"elites must be in [0, {self.population}), got {self.elites}")
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        for name in ("p_copy", "p_modify", "p_change", "p_swap"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.p_copy + self.p_modify > 1.0:
            raise ValueError("p_copy + p_modify must not exceed 1")
        if self.p_change + self.p_swap > 1.0:
            raise ValueError("p_change + p_swap must not exceed 1")


def default_rates(n: int, m: int, budgeted: bool = False) -> Dict[str, float]:
    """Mutation rates used when none are given explicitly"""
    p_solution = 1.0 / m if budgeted and m else 0.025
    return {
        "p_copy": p_solution,
        "p_modify": p_solution,
        "p_change": 1.0 / n,
        "p_swap": 1.0 / n,
    }


@dataclass
class Population:
    solutions: List[Solution]
    fitnesses: List[float]

    def sort(self) -> None:
        order = np.argsort(-np.asarray(self.fitnesses), kind="stable")
        self.solutions = [self.solutions[i] for i in order]
        self.fitnesses = [self.fitnesses[i] for i in order]

    def __len__(self) -> int:
        return len(self.solutions)


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float


class SearchResult(NamedTuple):
    best: Solution
    best_fitness: float
    history: List[GenerationStats]


def random_ops(n: int, rng: np.random.Generator) -> OperatorVec:
    return tuple(Operator(int(o)) for o in rng.integers(0, len(OPERATORS), size=n))


def random_solution(m: int, n: int, rng: np.random.Generator, known_values: Optional[Sequence[int]] = None) -> Solution:
    """m operator strings drawn uniformly; values default to zeros until bound"""
    values = tuple(known_values) if known_values is not None else (0,) * (n - 1)
    return Solution.from_ops([random_ops(n, rng) for _ in range(m)], values)


def modify_query(ops: OperatorVec, p_change: float, p_swap: float, rng: np.random.Generator) -> OperatorVec:
    """
    Visit positions in random order, changing an operator or swapping it with
    the next visited position; the last visited position is never swapped
    """
    n = len(ops)
    modified = list(ops)
    sigma = rng.permutation(n)
    skip = set()
    for i in range(n):
        if i in skip:
            continue
        u = rng.random()
        if u < p_change:
            current = ops[sigma[i]]
            choices = [op for op in OPERATORS if op != current]
            modified[sigma[i]] = choices[int(rng.integers(len(choices)))]
        elif u < p_change + p_swap and i + 1 < n:
            a, b = sigma[i], sigma[i + 1]
            modified[a], modified[b] = ops[b], ops[a]
            skip.add(i + 1)
    return tuple(Operator(o) for o in modified)


def copy_query(ops: OperatorVec, cfg: SearchConfig, rng: np.random.Generator) -> OperatorVec:
    """
    Modified copy of a query; on deterministic systems the copy always differs
    from the original, by one forced swap or operator change if needed
    """
    copy = modify_query(ops, cfg.p_change, cfg.p_swap, rng)
    if copy != ops or not cfg.qbs_deterministic or not ops:
        return copy
    modified = list(ops)
    if cfg.p_change == 0 and cfg.p_swap > 0 and len(set(ops)) > 1:
        a = int(rng.integers(len(ops)))
        others = [j for j in range(len(ops)) if ops[j] != ops[a]]
        b = others[int(rng.integers(len(others)))]
        modified[a], modified[b] = ops[b], ops[a]
    else:
        i = int(rng.integers(len(ops)))
        choices = [op for op in OPERATORS if op != ops[i]]
        modified[i] = choices[int(rng.integers(len(choices)))]
    return tuple(modified)


def apply_mutation(parent: Solution, cfg: SearchConfig, rng: np.random.Generator) -> Solution:
    """
    Copy or modify each query with small probability, then keep a random m of
    the grown multiset
    """
    if not parent.queries:
        return parent
    known = parent.queries[0].known_values
    grown: List[OperatorVec] = []
    for ops in parent.ops:
        u = rng.random()
        if u < cfg.p_copy:
            grown.append(ops)
            if cfg.qbs_deterministic or rng.random() > 0.5:
                grown.append(copy_query(ops, cfg, rng))
            else:
                grown.append(ops)
        elif u < cfg.p_copy + cfg.p_modify:
            grown.append(modify_query(ops, cfg.p_change, cfg.p_swap, rng))
        else:
            grown.append(ops)
    if grown == list(parent.ops):
        return parent
    keep = rng.permutation(len(grown))[:parent.m]
    return Solution.from_ops([grown[i] for i in keep], known)


def select_parent(pop: Population, rng: np.random.Generator) -> Solution:
    """Fitness-proportional choice; uniform when every fitness is zero"""
    fitnesses = np.asarray(pop.fitnesses, dtype=np.float64)
    total = fitnesses.sum()
    if total <= 0:
        return pop.solutions[int(rng.integers(len(pop)))]
    return pop.solutions[int(rng.choice(len(pop), p=fitnesses / total))]


class FitnessEvaluator:
    """Fitness of solutions against one fleet, memoized for deterministic mechanisms"""

    def __init__(self, fleet: AuxFleet, hyper: RuleHyper, deterministic: bool):
        self.fleet = fleet
        self.hyper = hyper
        self.deterministic = deterministic
        self.evaluations = 0
        self._memo: Dict[Tuple[bytes, ...], float] = {}

    def __call__(self, sol: Solution) -> float:
        if self.deterministic:
            key = sol.key()
            cached = self._memo.get(key)
            if cached is not None:
                return cached
        self.evaluations += 1
        fitness = evaluate_fitness(sol, self.fleet, self.hyper)
        if self.deterministic:
            self._memo[sol.key()] = fitness
        return fitness


def evolutionary_search(
    fleet: AuxFleet,
    cfg: SearchConfig,
    hyper: RuleHyper = RuleHyper(),
    on_generation: Optional[Callable[[GenerationStats], None]] = None,
) -> SearchResult:
    """
    Elitist evolutionary search for the solution maximizing fitness

    Args:
        fleet: Auxiliary train/val fleets for one target
        cfg: Search parameters
        hyper: Rule hyperparameters
        on_generation: Optional callback receiving each generation's statistics

    Returns:
        SearchResult(best solution ever evaluated, its fitness, per-generation history)
    """
    rng = np.random.default_rng(cfg.rng_seed)
    n = len(fleet.target.known_values) + 1
    evaluate = FitnessEvaluator(fleet, hyper, cfg.qbs_deterministic)

    solutions = [random_solution(cfg.m, n, rng, fleet.target.known_values) for _ in range(cfg.population)]
    pop = Population(solutions, [evaluate(s) for s in solutions])

    best, best_fitness = pop.solutions[0], -1.0
    history: List[GenerationStats] = []
    streak = 0
    for generation in range(cfg.generations):
        pop.sort()
        if pop.fitnesses[0] > best_fitness:
            best, best_fitness = pop.solutions[0], pop.fitnesses[0]
        stats = GenerationStats(generation, pop.fitnesses[0], float(np.mean(pop.fitnesses)))
        history.append(stats)
        logger.debug(
            f"generation={generation} best={stats.best_fitness:.4f} mean={stats.mean_fitness:.4f}"
        )
        if on_generation is not None:
            on_generation(stats)

        streak = streak + 1 if pop.fitnesses[0] > cfg.stop_fitness else 0
        if streak >= cfg.stop_patience or generation == cfg.generations - 1:
            break

        offspring = [apply_mutation(select_parent(pop, rng), cfg, rng) for _ in range(cfg.population - cfg.elites)]
        pop = Population(
            pop.solutions[:cfg.elites] + offspring,
            pop.fitnesses[:cfg.elites] + [evaluate(s) for s in offspring],
        )

    logger.info(
        f"Search finished after {len(history)} generations, best fitness {best_fitness:.4f}, "
        f"{evaluate.evaluations} evaluations"
    )
    return SearchResult(best, best_fitness, history)


def random_search(fleet: AuxFleet, cfg: SearchConfig, hyper: RuleHyper = RuleHyper()) -> SearchResult:
    """N * P independent random solutions; the first with maximal fitness wins"""
    rng = np.random.default_rng(cfg.rng_seed)
    n = len(fleet.target.known_values) + 1
    evaluate = FitnessEvaluator(fleet, hyper, cfg.qbs_deterministic)

    best: Optional[Solution] = None
    best_fitness = -1.0
    history: List[GenerationStats] = []
    for generation in range(cfg.generations):
        fitnesses = []
        for _ in range(cfg.population):
            sol = random_solution(cfg.m, n, rng, fleet.target.known_values)
            fitness = evaluate(sol)
            fitnesses.append(fitness)
            if fitness > best_fitness:
                best, best_fitness = sol, fitness
        history.append(GenerationStats(generation, best_fitness, float(np.mean(fitnesses))))
    return SearchResult(best, best_fitness, history)


def random_solution_baseline(fleet: AuxFleet, cfg: SearchConfig, hyper: RuleHyper = RuleHyper()) -> SearchResult:
    """One uniformly drawn solution, evaluated once"""
    rng = np.random.default_rng(cfg.rng_seed)
    n = len(fleet.target.known_values) + 1
    sol = random_solution(cfg.m, n, rng, fleet.target.known_values)
    fitness = evaluate_fitness(sol, fleet, hyper)
    return SearchResult(sol, fitness, [GenerationStats(0, fitness, fitness)])
