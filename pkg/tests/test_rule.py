"""
Unit tests for answer matrices, rule training and fitness
"""
import unittest

import numpy as np

from src.attack.baselines import direct_query
from src.attack.rule import (
    AnswerMatrix,
    AuxFleet,
    FleetPart,
    RuleHyper,
    TrainedRule,
    accuracy,
    build_matrix,
    evaluate_fitness,
    evaluate_fitness_detailed,
    matrix_queries,
    predict,
    train_rule,
)
from src.data.dataset import AuxSampler, Scenario, TargetRecord, synthesize_dataset
from src.qbs.mechanisms import QbsKind, create_qbs
from src.qbs.query import Operator, Solution

EQ, NEQ, NONE = Operator.EQ, Operator.NEQ, Operator.NONE


def make_members(kind, sampler, draws, seed_offset):
    members = []
    for i in draws:
        dataset, label = sampler.draw(i)
        members.append((create_qbs(kind, dataset, seed_offset + i), label))
    return members


def make_fleet(kind, n_train=100, n_val=50, size=60, seed=1):
    pool = synthesize_dataset([5, 5, 5], 400, seed=seed)
    target = TargetRecord(known_values=(1, 2, 3), true_sensitive=0)
    sampler = AuxSampler(Scenario.AUXILIARY, pool, target, size, seed=seed)
    train = make_members(kind, sampler, range(n_train), 1000)
    val = make_members(kind, sampler, range(n_train, n_train + n_val), 1000)
    return AuxFleet(target, train, val)


class TestBuildMatrix(unittest.TestCase):
    """Test cases for answer matrices"""

    def test_all_none_counts_dataset(self):
        """The all-NONE query on a noiseless system answers the dataset size"""
        fleet = make_fleet(QbsKind.simple(0, 0.0), n_train=10, n_val=5)
        sol = Solution.from_ops([(NONE,) * 4] * 3, fleet.target.known_values)
        mat = build_matrix(sol, fleet.train)
        sizes = [len(inst.dataset) for inst in fleet.train.instances]
        self.assertEqual(mat.X.shape, (10, 3))
        for k, size in enumerate(sizes):
            self.assertTrue((mat.X[k] == size).all())
        np.testing.assert_array_equal(mat.y, fleet.train.labels)

    def test_matches_direct_answers(self):
        """Matrix cells equal per-instance answers"""
        fleet = make_fleet(QbsKind.tablebuilder(), n_train=8, n_val=2)
        ops = [(EQ, NONE, NONE, EQ), (NONE, EQ, NEQ, NONE), (EQ, EQ, NONE, NONE)]
        sol = Solution.from_ops(ops, fleet.target.known_values)
        mat = build_matrix(sol, fleet.train)
        for k, inst in enumerate(fleet.train.instances):
            self.assertEqual(mat.X[k].tolist(), [inst.answer(q) for q in sol.queries])

    def test_empty_solution(self):
        """m = 0 gives a zero-column matrix"""
        fleet = make_fleet(QbsKind.simple(0, 0.0), n_train=4, n_val=2)
        mat = build_matrix(Solution(()), fleet.train)
        self.assertEqual(mat.X.shape, (4, 0))

    def test_budgeted_columns_are_distinct_queries(self):
        """DPLaplace matrices have one column per distinct query"""
        fleet = make_fleet(QbsKind.dplaplace(1.0), n_train=6, n_val=2)
        ops = [(EQ, EQ, EQ, EQ)] * 3 + [(NONE, NONE, NONE, EQ)]
        sol = Solution.from_ops(ops, fleet.target.known_values)
        self.assertEqual(len(matrix_queries(sol, fleet.kind)), 2)
        self.assertEqual(build_matrix(sol, fleet.train).m, 2)
        self.assertEqual(build_matrix(sol, fleet.train).m, 2)


class TestTrainRule(unittest.TestCase):
    """Test cases for logistic-regression rules"""

    def test_separable(self):
        """Separable data is fit perfectly"""
        X = np.array([[0.0], [1.0]] * 50)
        y = np.array([0, 1] * 50)
        mat = AnswerMatrix(X, y)
        rule = train_rule(mat)
        self.assertEqual(accuracy(rule, mat), 1.0)
        self.assertEqual(predict(rule, [1.0]), 1)
        self.assertEqual(predict(rule, [0.0]), 0)

    def test_single_class(self):
        """A single label class gives a constant rule"""
        X = np.random.default_rng(0).normal(size=(20, 3))
        for label in (0, 1):
            rule = train_rule(AnswerMatrix(X, np.full(20, label)))
            self.assertTrue((rule.predict_batch(X) == label).all())

    def test_zero_weight_rule_predicts_zero(self):
        """A probability of exactly 1/2 predicts 0"""
        rule = TrainedRule(np.zeros(2), 0.0, np.zeros(2), np.ones(2))
        self.assertEqual(predict(rule, [5.0, -3.0]), 0)

    def test_stored_scaling(self):
        """The rule keeps the training means and deviations"""
        rng = np.random.default_rng(1)
        X = rng.normal(10.0, 2.0, size=(200, 2))
        y = (X[:, 0] > 10.0).astype(int)
        rule = train_rule(AnswerMatrix(X, y), RuleHyper(l2=0.5))
        np.testing.assert_allclose(rule.feature_means, X.mean(axis=0))
        np.testing.assert_allclose(rule.feature_sds, X.std(axis=0))
        self.assertGreater(accuracy(rule, AnswerMatrix(X, y)), 0.95)
        self.assertEqual(len(rule.to_dict()["weights"]), 2)

    def test_no_samples(self):
        """Training on zero rows is an error"""
        with self.assertRaises(ValueError):
            train_rule(AnswerMatrix(np.zeros((0, 1)), np.zeros(0, dtype=int)))


class TestFitness(unittest.TestCase):
    """Test cases for solution fitness"""

    def test_direct_query_is_perfect(self):
        """On a noiseless system the direct query reveals the bit"""
        fleet = make_fleet(QbsKind.simple(0, 0.0))
        sol = Solution((direct_query(fleet.target),))
        report = evaluate_fitness_detailed(sol, fleet)
        self.assertEqual(report.fitness, 1.0)
        self.assertEqual(report.train_accuracy, 1.0)
        self.assertEqual(report.val_accuracy, 1.0)

    def test_uninformative_query(self):
        """A query blind to the sensitive value scores near chance"""
        fleet = make_fleet(QbsKind.simple(0, 3.0), n_train=400, n_val=400)
        sol = Solution.from_ops([(EQ, NONE, NONE, NONE)], fleet.target.known_values)
        self.assertAlmostEqual(evaluate_fitness(sol, fleet), 0.5, delta=0.1)

    def test_duplicate_seeds_rejected(self):
        """Train and validation instances need distinct seeds"""
        dataset = synthesize_dataset([3, 3], 50, seed=1)
        kind = QbsKind.simple(0, 0.0)
        target = TargetRecord(known_values=(1, 1), true_sensitive=0)
        with self.assertRaises(ValueError):
            AuxFleet(target, [(create_qbs(kind, dataset, 7), 0)], [(create_qbs(kind, dataset, 7), 1)])

    def test_fleet_part_caches_columns(self):
        """Deterministic answer columns are computed once"""
        fleet = make_fleet(QbsKind.diffix(), n_train=5, n_val=2)
        part = fleet.train
        q = direct_query(fleet.target)
        self.assertIs(part.answer_column(q), part.answer_column(q))
        self.assertIsInstance(part, FleetPart)
        self.assertEqual(len(part.seeds), 5)


if __name__ == '__main__':
    unittest.main()
