"""Replicating portfolio: LARS-Lasso over an instrument universe, BIC stopping.

The regression stacks every (scenario, year) pair: one weight per instrument
has to match the liability's deflated cash flow in every year at once.
Valuation at t = 1 replaces each instrument by its closed-form price.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from pathlib import Path
import warnings

import numpy as np
import pandas as pd
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lars_path_gram

from . import esg
from .esg import EsgParams, ScenarioSet

KINDS = ("zcb", "cash", "equity", "call", "put", "payer", "receiver")


@dataclass(frozen=True)
class Instrument:
    kind: str
    maturity: int
    strike: float = 0.0
    tenor: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown instrument kind {self.kind!r}")
        if self.kind in ("call", "put", "payer", "receiver") and not self.strike > 0:
            raise ValueError("options need a strictly positive strike")
        if self.kind in ("payer", "receiver") and self.tenor < 1:
            raise ValueError("swaptions need a tenor of at least one year")

    @property
    def last_flow(self) -> int:
        return self.maturity + self.tenor

    def describe(self) -> str:
        if self.kind in ("cash", "equity"):
            return f"{self.kind}:{self.maturity}"
        if self.kind == "zcb":
            return f"zcb:{self.maturity}"
        if self.kind in ("call", "put"):
            return f"{self.kind}:{self.maturity}:K={self.strike:.6g}"
        return f"{self.kind}:{self.maturity}x{self.tenor}:K={self.strike:.6g}"


@dataclass(frozen=True)
class UniverseSpec:
    zcb_maturities: tuple = tuple(range(1, 41))
    option_expiries: tuple = (5, 10, 15, 20, 25, 30, 35, 40)
    option_moneyness: tuple = (0.5, 0.75, 1.0, 1.25, 1.5)
    swaption_expiries: tuple = (5, 10, 20)
    swaption_tenors: tuple = (5, 10)
    cash: bool = True
    equity: bool = True

    def __post_init__(self):
        # proxies are valued at t = 1, where a swaption must still be alive
        if any(e < 2 for e in self.swaption_expiries):
            raise ValueError("swaption expiries must be at least 2")


def build_universe(params: EsgParams, spec: UniverseSpec = UniverseSpec()) -> list[Instrument]:
    T = params.horizon
    out = []
    if spec.cash:
        out.append(Instrument("cash", T))
    if spec.equity:
        out.append(Instrument("equity", T))
    out += [Instrument("zcb", m) for m in spec.zcb_maturities if m <= T]
    r0 = params.initial_rate
    for e in spec.option_expiries:
        if e > T:
            continue
        fwd = params.equity0 / float(esg.zcb_price(params, r0, 0, e))
        for kind in ("call", "put"):
            out += [Instrument(kind, e, m * fwd) for m in spec.option_moneyness]
    for e in spec.swaption_expiries:
        for n in spec.swaption_tenors:
            if e + n > T:
                continue
            ann = sum(float(esg.zcb_price(params, r0, 0, e + j)) for j in range(1, n + 1))
            par = (float(esg.zcb_price(params, r0, 0, e))
                   - float(esg.zcb_price(params, r0, 0, e + n))) / ann
            out += [Instrument("payer", e, par, n), Instrument("receiver", e, par, n)]
    return out


def instrument_flows(inst: Instrument, params: EsgParams, scen: ScenarioSet) -> np.ndarray:
    """Deflated cash flows of one unit, shape (scenario, tau = 1..T)."""
    if scen.start != 0:
        raise ValueError("design matrix needs scenarios starting at t = 0")
    T = scen.steps
    if inst.last_flow > T:
        raise ValueError(f"{inst.describe()} pays beyond the scenario horizon {T}")
    defl = scen.deflator
    out = np.zeros((scen.n_scenarios, T))
    m = inst.maturity
    if inst.kind == "zcb":
        out[:, m - 1] = defl[:, m]
    elif inst.kind == "cash":
        out[:] = defl[:, :-1] - defl[:, 1:]
        out[:, m - 1] += defl[:, m]
    elif inst.kind == "equity":
        out[:, m - 1] = scen.equity[:, m] * defl[:, m]
    elif inst.kind in ("call", "put"):
        omega = 1.0 if inst.kind == "call" else -1.0
        out[:, m - 1] = np.maximum(omega * (scen.equity[:, m] - inst.strike), 0.0) * defl[:, m]
    else:
        omega = 1.0 if inst.kind == "payer" else -1.0
        value = esg.swap_value(params, scen.short_rate[:, m], m, m, inst.tenor, inst.strike)
        exercised = omega * value > 0
        for j in range(1, inst.tenor + 1):
            u = m + j
            floating = defl[:, u - 1] - defl[:, u]
            out[:, u - 1] = np.where(exercised, omega * (floating - inst.strike * defl[:, u]), 0.0)
    return out


def instrument_cashflow_matrix(universe, params: EsgParams, scen: ScenarioSet) -> np.ndarray:
    """Design tensor A[i, tau-1, k]; reshape to ((i, tau), k) for the stacked regression."""
    return np.stack([instrument_flows(inst, params, scen) for inst in universe], axis=-1)


@dataclass
class Moments:
    """Sufficient statistics of the stacked regression, accumulated chunk by chunk."""

    n: int = 0
    sx: np.ndarray | None = None
    sy: float = 0.0
    xtx: np.ndarray | None = None
    xty: np.ndarray | None = None
    yty: float = 0.0

    def add(self, A: np.ndarray, y: np.ndarray) -> "Moments":
        A = A.reshape(-1, A.shape[-1])
        y = y.ravel()
        if self.sx is None:
            k = A.shape[1]
            self.sx, self.xtx, self.xty = np.zeros(k), np.zeros((k, k)), np.zeros(k)
        self.n += len(y)
        self.sx += A.sum(axis=0)
        self.sy += float(y.sum())
        self.xtx += A.T @ A
        self.xty += A.T @ y
        self.yty += float(y @ y)
        return self


@dataclass
class RpModel:
    universe: list
    weights: np.ndarray
    intercept: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_selected(self) -> int:
        return int(np.count_nonzero(self.weights))

    def to_frame(self) -> pd.DataFrame:
        rows = [{"instrument": "intercept", "kind": "intercept", "maturity": 0, "strike": 0.0,
                 "tenor": 0, "weight": self.intercept}]
        rows += [{"instrument": inst.describe(), "kind": inst.kind, "maturity": inst.maturity,
                  "strike": inst.strike, "tenor": inst.tenor, "weight": w}
                 for inst, w in zip(self.universe, self.weights)]
        return pd.DataFrame(rows)

    def to_csv(self, path):
        self.to_frame().to_csv(Path(path), index=False, float_format="%.17g",
                               lineterminator="\n")

    @classmethod
    def from_csv(cls, path) -> "RpModel":
        f = pd.read_csv(Path(path), float_precision="round_trip")
        head = f[f["kind"] == "intercept"]
        body = f[f["kind"] != "intercept"]
        universe = [Instrument(r.kind, int(r.maturity), float(r.strike), int(r.tenor))
                    for r in body.itertuples()]
        return cls(universe, body["weight"].to_numpy(dtype=float),
                   float(head["weight"].iloc[0]) if len(head) else 0.0)


def fit_lars_bic(A, y=None, moments: Moments | None = None) -> tuple[np.ndarray, float, dict]:
    """LARS-Lasso path on standardised columns, stopped at the minimum BIC.

    BIC = n log(RSS / n) + df log(n), df = number of non-zero coefficients,
    evaluated at every knot of the path.  Returns de-standardised
    ``(weights, intercept, diagnostics)``.
    """
    if moments is None:
        A = np.asarray(A, dtype=float)
        moments = Moments().add(A, np.asarray(y, dtype=float))
    n = moments.n
    k = moments.sx.size
    mu = moments.sx / n
    ybar = moments.sy / n
    cov = moments.xtx / n - np.outer(mu, mu)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    live = sd > 1e-12 * max(1.0, float(sd.max(initial=0.0)))
    diag = {"constant_columns": np.flatnonzero(~live).tolist(), "dropped": []}
    weights = np.zeros(k)
    syy = moments.yty / n - ybar * ybar
    if syy <= 1e-300 * max(1.0, ybar * ybar) or not live.any():
        diag.update(bic=[], alphas=[], df=[], selected=0, alpha=0.0)
        return weights, ybar, diag

    s = sd[live]
    gram = cov[np.ix_(live, live)] / np.outer(s, s) * n
    xy = (moments.xty[live] / n - mu[live] * ybar) / s * n
    yy = syy * n
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        alphas, _, coefs = lars_path_gram(Xy=xy, Gram=gram, n_samples=n, method="lasso")
    diag["dropped"] = [str(w.message) for w in caught if issubclass(w.category, ConvergenceWarning)]

    rss = yy - 2.0 * coefs.T @ xy + np.einsum("ik,ij,jk->k", coefs, gram, coefs)
    rss = np.maximum(rss, 1e-300)
    df = np.count_nonzero(coefs, axis=0)
    bic = n * np.log(rss / n) + df * math.log(n)
    best = int(np.argmin(bic))
    weights[live] = coefs[:, best] / s
    intercept = ybar - float(weights @ mu)
    diag.update(bic=bic.tolist(), alphas=alphas.tolist(), df=df.tolist(), selected=best,
                alpha=float(alphas[best]))
    return weights, intercept, diag


def fit_rp(universe, params: EsgParams, scenario_chunks, cashflow_chunks) -> RpModel:
    """Fit from aligned chunks of scenarios and liability cash flows."""
    mom = Moments()
    for scen, cf in zip(scenario_chunks, cashflow_chunks):
        mom.add(instrument_cashflow_matrix(universe, params, scen), np.asarray(cf))
    w, b, diag = fit_lars_bic(None, moments=mom)
    return RpModel(list(universe), w, b, diag)


def instrument_price_t(inst: Instrument, params: EsgParams, r_t, b_t, s_t, t: int = 1):
    """Time-t price (time-t money) of the instrument's flows strictly after t."""
    r_t = np.asarray(r_t, dtype=float)
    zero = np.zeros_like(r_t)
    if inst.kind == "zcb":
        return esg.zcb_price(params, r_t, t, inst.maturity) if inst.maturity > t else zero
    if inst.kind == "cash":
        return zero + 1.0 if inst.maturity > t else zero
    if inst.kind == "equity":
        return np.asarray(s_t, dtype=float) + zero if inst.maturity > t else zero
    if inst.kind in ("call", "put"):
        if inst.maturity <= t:
            return zero
        return esg.equity_option_price(params, s_t, r_t, t, inst.maturity, inst.strike,
                                       call=inst.kind == "call")
    if inst.maturity < t:
        raise ValueError(f"no pricer for a swap already running at t={t}: {inst.describe()}")
    if inst.maturity == t:
        raise ValueError(f"no pricer for a swaption expiring at t={t}: {inst.describe()}")
    return esg.swaption_price(params, r_t, t, inst.maturity, inst.tenor, inst.strike,
                              payer=inst.kind == "payer")


def rp_value_t1(model: RpModel, params: EsgParams, r1, b1, s1) -> np.ndarray:
    """Closed-form time-1 value (time-1 money) of the fitted portfolio's remaining flows."""
    r1 = np.atleast_1d(np.asarray(r1, dtype=float))
    b1 = np.broadcast_to(np.asarray(b1, dtype=float), r1.shape)
    value = model.intercept * (params.horizon - 1) * b1
    for inst, w in zip(model.universe, model.weights):
        if w != 0.0:
            value = value + w * instrument_price_t(inst, params, r1, b1, s1, 1)
    return value
