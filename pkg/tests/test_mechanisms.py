"""
Unit tests for seeded noise and the query-based systems
"""
import unittest

import numpy as np
from scipy import stats

from src.data.dataset import Dataset, Schema, synthesize_dataset
from src.exceptions import BudgetExhausted, InvalidKind
from src.qbs.mechanisms import (
    QbsKind,
    ThresholdMode,
    answer,
    answer_budgeted,
    create_qbs,
    reset_budget,
    round_answer,
)
from src.qbs.query import Operator, Query
from src.qbs.seeding import derive_seed, fnv1a_64, seeded_gaussian, seeded_uniform_int

EQ, NEQ, NONE = Operator.EQ, Operator.NEQ, Operator.NONE


def _uniform_dataset(rows: int, known=(1, 2, 3, 1)) -> Dataset:
    """Every record equals the target with sensitive value 0"""
    schema = Schema(("a", "b", "c", "d", "s"), (4, 4, 4, 4, 2))
    return Dataset(schema, np.tile(np.array(known + (0,)), (rows, 1)))


class TestSeeding(unittest.TestCase):
    """Test cases for seed derivation and seeded draws"""

    def test_derive_seed_is_stable(self):
        """Equal inputs give equal seeds"""
        self.assertEqual(derive_seed(7, b"tag", b"payload"), derive_seed(7, b"tag", b"payload"))
        self.assertNotEqual(derive_seed(7, b"tag", b"payload"), derive_seed(8, b"tag", b"payload"))
        self.assertIsInstance(derive_seed(7, b"tag", b""), int)

    def test_fnv1a_known_answers(self):
        """FNV-1a matches the published 64-bit test vectors"""
        self.assertEqual(fnv1a_64(b""), 0xCBF29CE484222325)
        self.assertEqual(fnv1a_64(b"a"), 0xAF63DC4C8601EC8C)
        self.assertEqual(fnv1a_64(b"foobar"), 0x85944171F73967E8)
        self.assertEqual(fnv1a_64(b"bar", fnv1a_64(b"foo")), fnv1a_64(b"foobar"))

    def test_derive_seed_known_answer(self):
        """Seeds hash tag, separator, payload and the little-endian seed"""
        self.assertEqual(derive_seed(42, b"diffix-static", b"2:EQ:7"), 13903721314032810539)
        expected = fnv1a_64(b"tb\x00" + b"\x01\x00\x00\x00" + (7).to_bytes(8, "little"))
        self.assertEqual(derive_seed(7, b"tb", b"\x01\x00\x00\x00"), expected)

    def test_one_byte_differences(self):
        """Payloads differing in one byte never collide"""
        rng = np.random.default_rng(0)
        for _ in range(100000 // 1000):
            payloads = rng.integers(0, 256, size=(1000, 16), dtype=np.uint8)
            flipped = payloads.copy()
            flipped[:, 3] ^= 1
            for a, b in zip(payloads, flipped):
                self.assertNotEqual(derive_seed(1, b"x", a.tobytes()), derive_seed(1, b"x", b.tobytes()))

    def test_seeded_gaussian(self):
        """Zero sd returns the mean; draws are standard normal across seeds"""
        self.assertEqual(seeded_gaussian(123, 4.5, 0.0), 4.5)
        self.assertEqual(seeded_gaussian(123, 0.0, 1.0), seeded_gaussian(123, 0.0, 1.0))
        draws = np.array([seeded_gaussian(derive_seed(s, b"g", b""), 0.0, 1.0) for s in range(10000)])
        self.assertAlmostEqual(float(draws.mean()), 0.0, delta=0.05)
        self.assertAlmostEqual(float(draws.var()), 1.0, delta=0.06)

    def test_seeded_uniform_int(self):
        """Values spread uniformly over the inclusive range"""
        self.assertEqual(seeded_uniform_int(5, 3, 3), 3)
        self.assertEqual(seeded_uniform_int(99, -2, 2), seeded_uniform_int(99, -2, 2))
        draws = np.array([seeded_uniform_int(s, -2, 2) for s in range(100000)])
        for value in range(-2, 3):
            self.assertAlmostEqual(float(np.mean(draws == value)), 0.2, delta=0.01)


class TestDeterministicMechanisms(unittest.TestCase):
    """Test cases for Diffix and TableBuilder"""

    def setUp(self):
        self.dataset = synthesize_dataset([4, 4, 4, 4], 400, seed=3)
        self.values = (1, 2, 3, 1)

    def test_rounding(self):
        """Answers clamp at zero and round half away from zero"""
        self.assertEqual(round_answer(None), 0)
        self.assertEqual(round_answer(-3.2), 0)
        self.assertEqual(round_answer(2.5), 3)
        self.assertEqual(round_answer(2.49), 2)

    def test_diffix_no_conditions(self):
        """Without conditions the noise sum is empty"""
        qbs = create_qbs(QbsKind.diffix(), _uniform_dataset(50), 11)
        self.assertEqual(answer(qbs, Query.bind((NONE,) * 5, self.values)), 50)

    def test_repeated_answers_are_identical(self):
        """Diffix and TableBuilder always give the same answer"""
        q = Query.bind((EQ, NONE, NEQ, NONE, EQ), self.values)
        for kind in (QbsKind.diffix(), QbsKind.tablebuilder()):
            qbs = create_qbs(kind, self.dataset, 5)
            first = answer(qbs, q)
            self.assertTrue(all(answer(qbs, q) == first for _ in range(100)))

    def test_order_invariance(self):
        """Permuting a batch permutes the answers"""
        rng = np.random.default_rng(4)
        queries = [Query.bind([Operator(int(o)) for o in rng.integers(0, 3, 5)], self.values) for _ in range(30)]
        perm = rng.permutation(30)
        for kind in (QbsKind.diffix(), QbsKind.tablebuilder()):
            forward = create_qbs(kind, self.dataset, 9).answer_many(queries)
            shuffled = create_qbs(kind, self.dataset, 9).answer_many([queries[i] for i in perm])
            np.testing.assert_array_equal(forward[perm], shuffled)
            self.assertTrue((forward >= 0).all())
            self.assertEqual(forward.dtype.kind, "i")

    def test_diffix_noise_variance(self):
        """Pre-round noise variance is 2 per condition"""
        dataset = _uniform_dataset(100)
        q = Query.bind((EQ,) * 5, (1, 2, 3, 1))
        noise = []
        for seed in range(10000):
            raw = create_qbs(QbsKind.diffix(), dataset, seed).raw_answer(q)
            noise.append(raw - 100)
        self.assertAlmostEqual(float(np.var(noise)), 10.0, delta=0.5)

    def test_diffix_dynamic_noise_follows_query_set(self):
        """Same condition text with different query sets gets different noise"""
        schema = Schema(("a", "b", "s"), (3, 3, 2))
        rows_a = np.array([[1, 1, 0]] * 30 + [[2, 2, 1]] * 10)
        rows_b = np.array([[1, 1, 0]] * 20 + [[2, 2, 1]] * 20)
        q = Query.bind((EQ, NONE, NONE), (1, 1))
        a = create_qbs(QbsKind.diffix(), Dataset(schema, rows_a), 3)
        b = create_qbs(QbsKind.diffix(), Dataset(schema, rows_b), 3)
        self.assertNotAlmostEqual(a.raw_answer(q) - 30, b.raw_answer(q) - 20)

        rows_c = np.array([[1, 1, 0]] * 30 + [[0, 2, 1]] * 10)
        c = create_qbs(QbsKind.diffix(), Dataset(schema, rows_c), 3)
        self.assertEqual(a.raw_answer(q), c.raw_answer(q))

    def test_diffix_threshold_modes(self):
        """The noisy floor suppresses a count of 2; the as-printed threshold never exceeds 2"""
        q = Query.bind((NONE,) * 5, self.values)
        floor = [answer(create_qbs(QbsKind.diffix(), _uniform_dataset(2), s), q) for s in range(50)]
        printed = [
            answer(create_qbs(QbsKind.diffix(ThresholdMode.AS_PRINTED), _uniform_dataset(3), s), q)
            for s in range(50)
        ]
        self.assertEqual(set(floor), {0})
        self.assertEqual(set(printed), {3})

    def test_suppression_threshold_follows_mode(self):
        """The nominal threshold agrees with the instance thresholds in each mode"""
        printed = QbsKind.diffix(ThresholdMode.AS_PRINTED)
        floor = QbsKind.diffix()
        self.assertEqual(printed.suppression_threshold, 2)
        self.assertEqual(floor.suppression_threshold, 4.0)
        self.assertEqual(QbsKind.tablebuilder().suppression_threshold, 4)
        dataset = _uniform_dataset(10)
        for seed in range(200):
            payload = seed.to_bytes(4, "little")
            self.assertLessEqual(create_qbs(printed, dataset, seed).threshold(payload), printed.suppression_threshold)
            self.assertGreaterEqual(create_qbs(floor, dataset, seed).threshold(payload), 2)

    def test_tablebuilder_suppression(self):
        """Counts of 4 or less are suppressed"""
        q = Query.bind((NONE,) * 5, self.values)
        self.assertEqual(answer(create_qbs(QbsKind.tablebuilder(), _uniform_dataset(4), 1), q), 0)
        self.assertGreater(answer(create_qbs(QbsKind.tablebuilder(), _uniform_dataset(40), 1), q), 0)

    def test_tablebuilder_noise_is_uniform(self):
        """Noise is uniform on -2..2"""
        dataset = _uniform_dataset(50)
        q = Query.bind((EQ, NONE, NONE, NONE, EQ), self.values)
        noise = np.array([answer(create_qbs(QbsKind.tablebuilder(), dataset, s), q) - 50 for s in range(5000)])
        self.assertTrue(set(noise.tolist()) <= {-2, -1, 0, 1, 2})
        counts = [int(np.sum(noise == v)) for v in range(-2, 3)]
        self.assertGreater(stats.chisquare(counts).pvalue, 0.001)

    def test_budget_operations_need_dplaplace(self):
        """Budget operations are invalid on unbudgeted systems"""
        qbs = create_qbs(QbsKind.diffix(), self.dataset, 1)
        with self.assertRaises(InvalidKind):
            reset_budget(qbs)
        with self.assertRaises(InvalidKind):
            answer_budgeted(qbs, Query.bind((NONE,) * 5, self.values), 0.5)


class TestSimpleQbs(unittest.TestCase):
    """Test cases for SimpleQBS"""

    def test_noiseless_answers_are_exact(self):
        """tau = sigma = 0 returns the true count"""
        dataset = synthesize_dataset([3, 3], 200, seed=2)
        qbs = create_qbs(QbsKind.simple(0, 0.0), dataset, 1)
        rng = np.random.default_rng(0)
        for _ in range(50):
            q = Query.bind([Operator(int(o)) for o in rng.integers(0, 3, 3)], (1, 2))
            self.assertEqual(answer(qbs, q), qbs.true_count(q))

    def test_fresh_noise(self):
        """Repeated queries draw fresh noise and suppress at tau"""
        q = Query.bind((EQ,) * 5, (1, 2, 3, 1))
        qbs = create_qbs(QbsKind.simple(2, 3.0), _uniform_dataset(30), 4)
        answers = qbs.answer_many([q] * 200)
        self.assertGreater(len(set(answers.tolist())), 1)
        self.assertAlmostEqual(float(answers.mean()), 30.0, delta=1.0)
        suppressed = create_qbs(QbsKind.simple(2, 3.0), _uniform_dataset(2), 4)
        self.assertEqual(answer(suppressed, q), 0)


class TestDPLaplace(unittest.TestCase):
    """Test cases for the budgeted Laplace mechanism"""

    def setUp(self):
        self.dataset = _uniform_dataset(20)
        self.q = Query.bind((EQ, NONE, NONE, NONE, EQ), (1, 2, 3, 1))

    def test_unbudgeted_answer_is_invalid(self):
        """DPLaplace only answers with a fraction"""
        with self.assertRaises(InvalidKind):
            answer(create_qbs(QbsKind.dplaplace(1.0), self.dataset, 1), self.q)

    def test_budget_exhaustion(self):
        """Spending past the budget raises"""
        qbs = create_qbs(QbsKind.dplaplace(1.0), self.dataset, 1)
        answer_budgeted(qbs, self.q, 0.6)
        with self.assertRaises(BudgetExhausted):
            answer_budgeted(qbs, self.q, 0.6)

    def test_reset_cycle(self):
        """Resetting restores the whole budget"""
        qbs = create_qbs(QbsKind.dplaplace(1.0), self.dataset, 1)
        answer_budgeted(qbs, self.q, 1.0)
        reset_budget(qbs)
        self.assertEqual(qbs.spent_budget, 0.0)
        answer_budgeted(qbs, self.q, 0.3)
        self.assertAlmostEqual(qbs.spent_budget, 0.3)
        reset_budget(qbs)
        self.assertEqual(qbs.spent_budget, 0.0)

    def test_large_epsilon_is_exact(self):
        """Negligible noise returns the true count"""
        qbs = create_qbs(QbsKind.dplaplace(1e6), self.dataset, 1)
        self.assertEqual(answer_budgeted(qbs, self.q, 1.0), 20)

    def test_full_budget_variance(self):
        """Pre-round variance is 2 / epsilon^2"""
        qbs = create_qbs(QbsKind.dplaplace(1.0), self.dataset, 3)
        raw = []
        for _ in range(100000):
            qbs.reset_budget()
            raw.append(qbs.raw_budgeted(self.q, 1.0))
        self.assertAlmostEqual(float(np.var(raw)), 2.0, delta=0.1)

    def test_monotonicity_of_accuracy(self):
        """Averaging four quarter-budget answers has four times the squared error"""
        qbs = create_qbs(QbsKind.dplaplace(1.0), self.dataset, 8)
        full, split = [], []
        for _ in range(50000):
            qbs.reset_budget()
            full.append(qbs.raw_budgeted(self.q, 1.0) - 20)
            qbs.reset_budget()
            split.append(np.mean([qbs.raw_budgeted(self.q, 0.25) for _ in range(4)]) - 20)
        ratio = np.mean(np.square(split)) / np.mean(np.square(full))
        self.assertAlmostEqual(float(ratio), 4.0, delta=0.4)

    def test_answers_are_nonnegative_integers(self):
        """Rounded answers never go below zero"""
        qbs = create_qbs(QbsKind.dplaplace(0.5), _uniform_dataset(1), 2)
        for _ in range(500):
            qbs.reset_budget()
            value = answer_budgeted(qbs, self.q, 1.0)
            self.assertIsInstance(value, int)
            self.assertGreaterEqual(value, 0)


if __name__ == '__main__':
    unittest.main()
