"""
Statistics utilities for hydrolimit
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Sequence

import numpy as np
from scipy import stats

from ..core import DomainError


@dataclass
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    alpha: float
    pooled_bins: int

    @property
    def passed(self) -> bool:
        return self.p_value >= self.alpha

    def to_dict(self) -> Dict[str, Any]:
        return {"statistic": self.statistic, "dof": self.dof, "p_value": self.p_value,
                "alpha": self.alpha, "pooled_bins": self.pooled_bins, "passed": self.passed}


@dataclass
class LinearFit:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float


class StatsUtils:
    """Goodness-of-fit and regression helpers"""

    MIN_EXPECTED = 5.0

    @staticmethod
    def chi_square_agreement(counts: Sequence[int], probabilities: Sequence[float],
                             alpha: float = 0.01) -> ChiSquareResult:
        """Pearson test of observed counts against a law; cells with expected < 5 are pooled"""
        counts = np.asarray(counts, dtype=float)
        probs = np.asarray(probabilities, dtype=float)
        if counts.shape != probs.shape:
            raise DomainError("counts and probabilities differ in length")
        total = counts.sum()
        if total <= 0:
            raise DomainError("no observations")
        probs = np.clip(probs, 0.0, None)
        probs = probs / probs.sum()
        expected = total * probs
        big = expected >= StatsUtils.MIN_EXPECTED
        obs = list(counts[big])
        exp = list(expected[big])
        pooled = int((~big).sum())
        if pooled:
            obs.append(counts[~big].sum())
            exp.append(expected[~big].sum())
            if exp[-1] == 0.0:
                if obs[-1] > 0:
                    return ChiSquareResult(math.inf, len(obs) - 1, 0.0, alpha, pooled)
                obs.pop()
                exp.pop()
        if len(obs) < 2:
            return ChiSquareResult(0.0, 0, 1.0, alpha, pooled)
        statistic, p_value = stats.chisquare(obs, exp)
        return ChiSquareResult(float(statistic), len(obs) - 1, float(p_value), alpha, pooled)

    @staticmethod
    def linear_fit(x: Sequence[float], y: Sequence[float], confidence: float = 0.95) -> LinearFit:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.size < 3:
            raise DomainError("linear fit with a confidence interval needs at least 3 points")
        fit = stats.linregress(x, y)
        half = float(stats.t.ppf(0.5 + confidence / 2.0, x.size - 2)) * fit.stderr
        return LinearFit(float(fit.slope), float(fit.intercept), float(fit.stderr),
                         float(fit.slope - half), float(fit.slope + half))

    @staticmethod
    def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
        """Exponent p in y ~ x^p"""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return float(np.polyfit(np.log(x), np.log(y), 1)[0])

    @staticmethod
    def mean_ci(samples: Sequence[float], confidence: float = 0.95) -> Dict[str, float]:
        samples = np.asarray(samples, dtype=float)
        mean = float(samples.mean())
        if samples.size < 2:
            return {"mean": mean, "ci_low": mean, "ci_high": mean, "stderr": 0.0}
        stderr = float(stats.sem(samples))
        half = float(stats.t.ppf(0.5 + confidence / 2.0, samples.size - 1)) * stderr
        return {"mean": mean, "ci_low": mean - half, "ci_high": mean + half, "stderr": stderr}

    @staticmethod
    def is_non_increasing(values: Sequence[float], rtol: float = 0.0) -> bool:
        return all(b <= a * (1.0 + rtol) for a, b in zip(values, values[1:]))
