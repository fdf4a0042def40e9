"""Lee-Carter stochastic mortality."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .esg import MORTALITY, DriverTensor


@dataclass(frozen=True)
class LeeCarterParams:
    """log m(x, t) = a_x + b_x * kappa_t,  kappa_t = kappa_{t-1} + drift + vol * xi_t."""

    ages: tuple
    a: tuple
    b: tuple
    kappa0: float = 0.0
    drift: float = -0.365
    vol: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "ages", tuple(int(x) for x in self.ages))
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        if not (len(self.ages) == len(self.a) == len(self.b)) or not self.ages:
            raise ValueError("ages, a and b must be equally long and non-empty")
        if any(y - x != 1 for x, y in zip(self.ages, self.ages[1:])):
            raise ValueError("ages must be consecutive integers")
        if self.vol < 0:
            raise ValueError("vol must be non-negative")

    @classmethod
    def gompertz(cls, min_age=30, max_age=110, level=-9.5, slope=0.085, **kw):
        """Illustrative table: a_x on a Gompertz line, flat b_x summing to one."""
        ages = tuple(range(min_age, max_age + 1))
        a = tuple(level + slope * x for x in ages)
        b = (1.0 / len(ages),) * len(ages)
        return cls(ages, a, b, **kw)

    @classmethod
    def from_csv(cls, path, **kw):
        frame = pd.read_csv(Path(path), float_precision="round_trip").sort_values("x")
        return cls(tuple(int(x) for x in frame["x"]), tuple(frame["a_x"].astype(float)),
                   tuple(frame["b_x"].astype(float)), **kw)

    def to_csv(self, path):
        pd.DataFrame({"x": self.ages, "a_x": self.a, "b_x": self.b}).to_csv(
            Path(path), index=False, float_format="%.17g", lineterminator="\n")

    def index(self, ages) -> np.ndarray:
        ages = np.asarray(ages)
        lo, hi = self.ages[0], self.ages[-1]
        if np.any(ages < lo) or np.any(ages > hi):
            raise ValueError(f"age outside mortality table [{lo}, {hi}]")
        return (ages - lo).astype(int)


@dataclass
class MortalityPath:
    """Simulated period index; q is derived on demand."""

    params: LeeCarterParams
    kappa: np.ndarray  # (scenario, t = 0..T)

    def q_for(self, ages: np.ndarray) -> np.ndarray:
        """Death probabilities for ``ages[c, t-1]`` in year t, shape (scenario, c, t)."""
        idx = self.params.index(ages)
        a = np.asarray(self.params.a)[idx]
        b = np.asarray(self.params.b)[idx]
        log_m = a[None] + b[None] * self.kappa[:, None, 1:]
        return np.clip(-np.expm1(-np.exp(log_m)), 0.0, 1.0)

    @property
    def q(self) -> np.ndarray:
        """Full table q[i, x, t] for every tabulated age and year t = 1..T."""
        n_ages = len(self.params.ages)
        horizon = self.kappa.shape[1] - 1
        ages = np.repeat(np.asarray(self.params.ages)[:, None], horizon, axis=1)
        return self.q_for(ages)


def simulate_mortality(params: LeeCarterParams, drivers: DriverTensor,
                       dim: int = MORTALITY) -> MortalityPath:
    if dim >= drivers.dims:
        raise ValueError(f"driver tensor has no dimension {dim} reserved for mortality")
    steps = params.drift + params.vol * drivers.values[:, :, dim]
    kappa = np.empty((drivers.n_scenarios, drivers.horizon + 1))
    kappa[:, 0] = params.kappa0
    np.cumsum(steps, axis=1, out=kappa[:, 1:])
    kappa[:, 1:] += params.kappa0
    return MortalityPath(params, kappa)
