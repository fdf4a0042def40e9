"""Guarantee-return-on-death variable annuity projected over a policyholder portfolio.

Timing within year t (1..T): the premium is paid at the start of the year and
added to both fund and guarantee, the fund is rebalanced to its target mix
and earns that mix's return over the year, then deaths occur at year end.
A death pays the fund plus any shortfall ``max(G - F, 0)``; survivors at the
common maturity receive ``max(F, G)``.  Only the shortfall leg is recorded,
as a negative (outgoing) cash flow deflated to t = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .esg import ScenarioSet
from .mortality import MortalityPath


@dataclass(frozen=True)
class Portfolio:
    """Policy groups; each row is ``count`` identical policyholders."""

    age: np.ndarray
    fund0: np.ndarray
    guarantee0: np.ndarray
    premium: np.ndarray
    count: np.ndarray

    def __post_init__(self):
        cols = [np.asarray(c, dtype=float) for c in
                (self.age, self.fund0, self.guarantee0, self.premium, self.count)]
        if len({c.shape for c in cols}) != 1 or cols[0].ndim != 1:
            raise ValueError("portfolio columns must be 1-d and equally long")
        if any((c < 0).any() for c in cols[1:]):
            raise ValueError("funds, guarantees, premiums and counts must be non-negative")
        for name, c in zip(("age", "fund0", "guarantee0", "premium", "count"), cols):
            object.__setattr__(self, name, c)

    @classmethod
    def uniform(cls, n_policies=1000, min_age=30, max_age=70, fund0=100.0, premium=10.0,
                guarantee0=None):
        ages = np.arange(min_age, max_age + 1)
        counts = np.bincount(np.arange(n_policies) % len(ages), minlength=len(ages))
        g0 = fund0 if guarantee0 is None else guarantee0
        k = len(ages)
        return cls(ages, np.full(k, fund0), np.full(k, g0), np.full(k, premium), counts)

    @classmethod
    def from_csv(cls, path):
        f = pd.read_csv(Path(path), float_precision="round_trip")
        return cls(f["age"].to_numpy(), f["fund0"].to_numpy(), f["guarantee0"].to_numpy(),
                   f["premium"].to_numpy(), f["count"].to_numpy())

    def to_csv(self, path):
        pd.DataFrame({"age": self.age.astype(int), "fund0": self.fund0,
                      "guarantee0": self.guarantee0, "premium": self.premium,
                      "count": self.count}).to_csv(Path(path), index=False,
                                                   float_format="%.17g", lineterminator="\n")

    @property
    def size(self) -> float:
        return float(self.count.sum())


@dataclass(frozen=True)
class Product:
    portfolio: Portfolio
    equity_weight: float = 0.6

    def __post_init__(self):
        if not 0.0 <= self.equity_weight <= 1.0:
            raise ValueError("equity_weight must lie in [0, 1]")


@dataclass
class CashflowMatrix:
    """Deflated shortfall cash flows ``cf[i, tau-1]`` for tau = 1..T (payments < 0)."""

    cf: np.ndarray

    @property
    def horizon(self) -> int:
        return self.cf.shape[1]

    def to_frame(self) -> pd.DataFrame:
        n, T = self.cf.shape
        return pd.DataFrame({"scenario_id": np.repeat(np.arange(n), T),
                             "tau": np.tile(np.arange(1, T + 1), n),
                             "cf": self.cf.ravel()})

    def to_csv(self, path):
        self.to_frame().to_csv(Path(path), index=False, float_format="%.17g",
                               lineterminator="\n")

    @classmethod
    def from_csv(cls, path):
        f = pd.read_csv(Path(path), float_precision="round_trip")
        f = f.sort_values(["scenario_id", "tau"])
        n = f["scenario_id"].nunique()
        return cls(f["cf"].to_numpy(dtype=float).reshape(n, -1))


def project_cashflows(product: Product, scen: ScenarioSet, mort: MortalityPath,
                      ledger: bool = False):
    """Project the portfolio along every scenario; vectorised over scenarios.

    With ``ledger=True`` also returns the per-group exits (deaths, plus
    maturity survivors in the final year) and the per-class fund and
    guarantee paths.
    """
    if scen.start != 0:
        raise ValueError("cash-flow projection needs scenarios starting at t = 0")
    horizon = scen.steps
    if mort.kappa.shape[1] - 1 < horizon:
        raise ValueError("mortality path shorter than scenario horizon")
    pf = product.portfolio
    w = product.equity_weight
    growth = (w * scen.equity[:, 1:] / scen.equity[:, :-1]
              + (1.0 - w) * scen.cash_account[:, 1:] / scen.cash_account[:, :-1])

    terms = np.stack([pf.fund0, pf.guarantee0, pf.premium], axis=1)
    classes, cls_of = np.unique(terms, axis=0, return_inverse=True)
    cls_of = np.asarray(cls_of).ravel()
    n = scen.n_scenarios
    shortfall = np.empty((n, len(classes), horizon))
    funds = np.empty_like(shortfall)
    guarantees = np.empty((len(classes), horizon))
    for c, (f0, g0, prem) in enumerate(classes):
        fund = np.full(n, f0)
        g = g0
        for k in range(horizon):
            fund = (fund + prem) * growth[:, k]
            g += prem
            funds[:, c, k] = fund
            guarantees[c, k] = g
        assert (funds[:, c] >= 0).all(), "fund value went negative"
        shortfall[:, c] = np.maximum(guarantees[c][None, :] - funds[:, c], 0.0)

    lc = mort.params
    a_tab, b_tab = np.asarray(lc.a), np.asarray(lc.b)
    kappa = mort.kappa[:, 1:horizon + 1]
    paid = np.zeros((n, horizon))
    exits_all = np.empty((n, len(pf.age), horizon)) if ledger else None
    for g in range(len(pf.age)):
        idx = lc.index(pf.age[g] + np.arange(horizon))
        q = np.clip(-np.expm1(-np.exp(a_tab[idx] + b_tab[idx] * kappa)), 0.0, 1.0)
        alive_before = np.ones_like(q)
        np.cumprod(1.0 - q[:, :-1], axis=1, out=alive_before[:, 1:])
        exits = alive_before * q
        exits[:, -1] = alive_before[:, -1]
        exits *= pf.count[g]
        paid += exits * shortfall[:, cls_of[g]]
        if ledger:
            exits_all[:, g] = exits

    cf = CashflowMatrix(-paid / scen.cash_account[:, 1:horizon + 1])
    if ledger:
        return cf, {"exits": exits_all, "fund": funds, "guarantee": guarantees,
                    "class_of": cls_of}
    return cf
