"""Empirical VaR / ES, mean-centring, MApE and the risk report row."""

from __future__ import annotations

from dataclasses import asdict, dataclass
import math

import numpy as np

METRICS = ("left_es", "left_var", "mean", "right_var", "right_es")


def _tail_count(n: int, alpha: float) -> int:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if n < 1 or n * alpha < 1 - 1e-9:
        raise ValueError(f"{n} samples are not enough for alpha={alpha}; need at least 1/alpha")
    return math.ceil(alpha * n - 1e-9)


def _check_tail(tail):
    if tail not in ("left", "right"):
        raise ValueError("tail must be 'left' or 'right'")


def empirical_var(samples, alpha=0.01, tail="left") -> float:
    """Order-statistic VaR: the ceil(alpha * n)-th worst sample.

    Left tail is reported as a loss, ``-x_(k)``; the right tail as ``x_(n-k+1)``.
    """
    _check_tail(tail)
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    k = _tail_count(x.size, alpha)
    return float(-x[k - 1]) if tail == "left" else float(x[-k])


def empirical_es(samples, alpha=0.01, tail="left") -> float:
    """Mean of the ceil(alpha * n) worst samples, same sign convention as VaR."""
    _check_tail(tail)
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    k = _tail_count(x.size, alpha)
    return float(-x[:k].mean()) if tail == "left" else float(x[-k:].mean())


def mean_center(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("cannot centre an empty sample")
    # anchoring on the minimum first makes the result exactly translation
    # invariant whenever the shift itself is exact
    out = x - x.min()
    out = out - out.mean()
    # a second pass removes the rounding residue of the first
    return out - out.mean()


def mape(estimates, benchmark: float) -> float:
    if benchmark == 0:
        raise ValueError("benchmark value is zero; percentage error undefined")
    est = np.asarray(estimates, dtype=float)
    return float(np.mean(np.abs(est / benchmark - 1.0)))


@dataclass(frozen=True)
class RiskReport:
    """Tail metrics as signed deviations from the mean (tail value minus mean)."""

    left_es: float
    left_var: float
    mean: float
    right_var: float
    right_es: float
    alpha: float
    n: int

    @classmethod
    def from_samples(cls, samples, alpha=0.01) -> "RiskReport":
        x = np.asarray(samples, dtype=float)
        c = mean_center(x)
        return cls(-empirical_es(c, alpha, "left"), -empirical_var(c, alpha, "left"),
                   float(x.mean()), empirical_var(c, alpha, "right"),
                   empirical_es(c, alpha, "right"), alpha, int(x.size))

    def as_dict(self) -> dict:
        return asdict(self)

    def metric(self, name: str) -> float:
        return getattr(self, name)
