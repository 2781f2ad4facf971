"""
Utility functions for accuracy statistics and analytic attack oracles
"""
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats


class StatsCalculator:
    """Utility class for summarizing attack accuracies"""

    @staticmethod
    def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
        predictions = np.asarray(predictions)
        labels = np.asarray(labels)
        if len(labels) == 0:
            return 0.0
        return float(np.mean(predictions == labels))

    @staticmethod
    def mean_and_std(values: Sequence[float]) -> Tuple[float, float]:
        """
        Mean and sample standard deviation

        Args:
            values: Observations, e.g. per-repetition accuracies

        Returns:
            (mean, std); std is 0.0 for fewer than two values
        """
        if len(values) == 0:
            return 0.0, 0.0
        values = np.asarray(values, dtype=np.float64)
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return float(np.mean(values)), std

    @staticmethod
    def calculate_percentiles(values: Sequence[float]) -> Dict[str, float]:
        """Median, 10th and 90th percentile of per-target accuracies"""
        if len(values) == 0:
            return {}
        p10, p50, p90 = np.percentile(np.asarray(values, dtype=np.float64), [10, 50, 90])
        return {"p10": float(p10), "p50": float(p50), "p90": float(p90)}

    @staticmethod
    def binomial_half_width(p: float, n: int, z: float = 3.0) -> float:
        """z standard errors of an accuracy estimated from n trials"""
        if n <= 0:
            return 1.0
        return z * float(np.sqrt(p * (1.0 - p) / n))

    @staticmethod
    def chi_square_uniform_pvalue(counts: Sequence[int]) -> float:
        return float(stats.chisquare(np.asarray(counts, dtype=np.float64)).pvalue)


class OracleCalculator:
    """Closed-form and simulated reference accuracies for the manual attacks"""

    @staticmethod
    def laplace_bin_probabilities(epsilon: float, mean: float, max_bin: int) -> np.ndarray:
        """
        Probability that a clamped, rounded Laplace(mean, 1/epsilon) answer equals k

        Args:
            epsilon: Privacy parameter; the scale is 1/epsilon
            mean: True count
            max_bin: Largest k returned

        Returns:
            Array of P(answer = k) for k = 0..max_bin
        """
        dist = stats.laplace(loc=mean, scale=1.0 / epsilon)
        # tail differences keep far-right bins from cancelling to zero
        upper = dist.sf(np.arange(max_bin + 1) + 0.5)
        lower = np.concatenate([[1.0], upper[:-1]])
        return lower - upper

    @staticmethod
    def uniqueness_attack_accuracy(epsilon: float) -> float:
        """Balanced-prior accuracy of predicting 0 iff the direct query answers at least 1"""
        zero_if_absent = OracleCalculator.laplace_bin_probabilities(epsilon, 0.0, 0)[0]
        zero_if_present = OracleCalculator.laplace_bin_probabilities(epsilon, 1.0, 0)[0]
        return 0.5 * zero_if_absent + 0.5 * (1.0 - zero_if_present)

    @staticmethod
    def likelihood_ratio_accuracy(
        n_samples: int,
        mean_0: float,
        mean_1: float,
        variance: float,
        trials: int,
        seed: int = 0,
    ) -> float:
        """
        Simulated accuracy of a likelihood-ratio test between two Gaussians
        sharing a variance, with equal priors
        """
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, size=trials)
        means = np.where(labels == 1, mean_1, mean_0)
        samples = rng.normal(means[:, None], np.sqrt(variance), size=(trials, n_samples))
        sd = np.sqrt(variance)
        llr = (stats.norm.logpdf(samples, mean_1, sd) - stats.norm.logpdf(samples, mean_0, sd)).sum(axis=1)
        return float(np.mean((llr > 0).astype(int) == labels))

    @staticmethod
    def noise_variance_by_conditions(samples: Dict[int, List[float]]) -> Dict[int, float]:
        return {k: float(np.var(v, ddof=1)) for k, v in sorted(samples.items()) if len(v) > 1}
