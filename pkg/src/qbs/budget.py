"""
Proportional budget allocation for budget-based systems
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Tuple

import numpy as np

from src.qbs.mechanisms import DPLaplaceQbs
from src.qbs.query import Query, Solution


@dataclass(frozen=True)
class BudgetedPlan:
    items: Tuple[Tuple[Query, float], ...]

    @property
    def total(self) -> float:
        return float(sum(fraction for _, fraction in self.items))

    @property
    def queries(self) -> List[Query]:
        return [q for q, _ in self.items]

    @property
    def fractions(self) -> List[float]:
        return [fraction for _, fraction in self.items]


def allocate_budget(sol: Solution) -> BudgetedPlan:
    """One item per distinct query with fraction multiplicity / m"""
    if sol.m < 1:
        raise ValueError("Cannot allocate budget to an empty solution")
    return BudgetedPlan(tuple(
        (q, float(Fraction(count, sol.m))) for q, count in sol.multiplicities()
    ))


def execute_plan(plan: BudgetedPlan, qbs: DPLaplaceQbs) -> np.ndarray:
    return qbs.answer_plan(plan.queries, plan.fractions)
