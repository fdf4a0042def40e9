"""Economic scenario generator: Hull-White short rate, cash account, GBM equity.

The model lives on an annual grid.  The cash account rolls the one-year
zero-coupon bond, ``B[t+1] = B[t] / P(t, t+1)``, and the short rate is
stepped with its exact Gaussian transition under the one-year forward
measure.  Deflating by ``1 / B`` is then exact at the grid dates: every
deflated traded price is a martingale and ``E[1 / B[T]] = P(0, T)``
without discretisation bias, using one rate driver per year.

Driver dimension order is fixed: 0 = rate, 1 = equity, 2 = mortality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import ndtr

from . import rng

RATE, EQUITY, MORTALITY = 0, 1, 2


@dataclass(frozen=True)
class EsgParams:
    mean_reversion: float = 0.1
    rate_vol: float = 0.01
    initial_rate: float = 0.02
    equity_vol: float = 0.2
    equity0: float = 100.0
    horizon: int = 40

    def __post_init__(self):
        if not self.mean_reversion > 0:
            raise ValueError("mean_reversion must be positive")
        if self.rate_vol < 0 or self.equity_vol < 0:
            raise ValueError("volatilities must be non-negative")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        if not self.equity0 > 0:
            raise ValueError("equity0 must be positive")

    # --- Hull-White building blocks (flat initial curve at initial_rate) ---

    def b(self, tau):
        a = self.mean_reversion
        return -np.expm1(-a * np.asarray(tau, dtype=float)) / a

    def log_a(self, t, T):
        """Log of the affine bond coefficient A(t, T) fitted to the flat curve."""
        a, s, r0 = self.mean_reversion, self.rate_vol, self.initial_rate
        t = np.asarray(t, dtype=float)
        bb = self.b(np.asarray(T, dtype=float) - t)
        return -r0 * (T - t) + bb * r0 - s * s / (4 * a) * (-np.expm1(-2 * a * t)) * bb * bb

    def alpha(self, t):
        """Deterministic shift: r(t) = x(t) + alpha(t) with x an OU process from 0."""
        a, s = self.mean_reversion, self.rate_vol
        return self.initial_rate + s * s / (2 * a * a) * np.expm1(-a * np.asarray(t, dtype=float)) ** 2

    def step_sd(self, dt=1.0):
        a, s = self.mean_reversion, self.rate_vol
        return s * math.sqrt(-math.expm1(-2 * a * dt) / (2 * a))

    def forward_drift(self):
        """Drift of x over one year under the one-year forward measure."""
        a, s = self.mean_reversion, self.rate_vol
        integral = (-math.expm1(-a) / a + math.expm1(-2 * a) / (2 * a)) / a
        return -s * s * integral


@dataclass
class DriverTensor:
    """Standard-normal drivers, ``values[i, t-1, d]`` for t = 1..T.

    The constant bias component at t = 0 is implicit.
    """

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("driver tensor must be 3-dimensional (scenario, time, dim)")

    @property
    def n_scenarios(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @property
    def dims(self) -> int:
        return self.values.shape[2]

    def flat(self) -> np.ndarray:
        """Network input rows ``[1, xi_1, ..., xi_T]`` with per-step blocks of width D."""
        n = self.n_scenarios
        return np.hstack([np.ones((n, 1)), self.values.reshape(n, -1)])


def generate_drivers(n_scenarios: int, horizon: int, dims: int, seed: int,
                     stream: int = 0, start: int = 0) -> DriverTensor:
    """I.i.d. N(0, 1) drivers; row i depends only on (seed, stream, start + i)."""
    if horizon < 1 or dims < 1:
        raise ValueError("horizon and dims must be at least 1")
    if n_scenarios < 1:
        raise ValueError("n_scenarios must be at least 1")
    z = rng.normals(seed, stream, start, n_scenarios, horizon * dims)
    return DriverTensor(z.reshape(n_scenarios, horizon, dims))


@dataclass
class ScenarioSet:
    """Economic paths on the grid ``start, start+1, ..., start + steps``."""

    short_rate: np.ndarray
    cash_account: np.ndarray
    equity: np.ndarray
    start: int = 0
    drivers: DriverTensor | None = field(default=None, repr=False)

    @property
    def deflator(self) -> np.ndarray:
        return 1.0 / self.cash_account

    @property
    def n_scenarios(self) -> int:
        return self.short_rate.shape[0]

    @property
    def steps(self) -> int:
        return self.short_rate.shape[1] - 1


def _economy_from(params: EsgParams, xi: np.ndarray, r_start, b_start, s_start, t0: int):
    """Step the economy from state at t0 through ``xi.shape[1]`` annual steps."""
    n, steps = xi.shape[0], xi.shape[1]
    r = np.empty((n, steps + 1))
    bank = np.empty((n, steps + 1))
    eq = np.empty((n, steps + 1))
    r[:, 0], bank[:, 0], eq[:, 0] = r_start, b_start, s_start
    decay = math.exp(-params.mean_reversion)
    drift, sd = params.forward_drift(), params.step_sd()
    b1 = float(params.b(1.0))
    sig = params.equity_vol
    x = r[:, 0] - params.alpha(t0)
    for k in range(steps):
        u = t0 + k
        growth = np.exp(b1 * r[:, k] - params.log_a(u, u + 1))
        bank[:, k + 1] = bank[:, k] * growth
        eq[:, k + 1] = eq[:, k] * growth * np.exp(-0.5 * sig * sig + sig * xi[:, k, EQUITY])
        x = decay * x + drift + sd * xi[:, k, RATE]
        r[:, k + 1] = x + params.alpha(u + 1)
    return r, bank, eq


def simulate_economy(params: EsgParams, drivers: DriverTensor) -> ScenarioSet:
    if drivers.dims < 2:
        raise ValueError("economy needs at least two driver dimensions (rate, equity)")
    if drivers.horizon != params.horizon:
        raise ValueError(f"drivers cover {drivers.horizon} years, params expect {params.horizon}")
    r, bank, eq = _economy_from(params, drivers.values, params.initial_rate, 1.0, params.equity0, 0)
    return ScenarioSet(r, bank, eq, 0, drivers)


# --- closed-form pricers -------------------------------------------------

def zcb_price(params: EsgParams, r_t, t, T_mat):
    """Hull-White P(t, T_mat) given the short rate at t."""
    if np.any(np.asarray(t) > np.asarray(T_mat)):
        raise ValueError("bond already matured: t > T_mat")
    tau = np.asarray(T_mat, dtype=float) - t
    return np.exp(params.log_a(t, T_mat) - params.b(tau) * np.asarray(r_t, dtype=float))


def _grid_int(x, name):
    if float(x) != int(x):
        raise ValueError(f"{name} must lie on the annual grid")
    return int(x)


def _rolled_rate_variance(params: EsgParams, t: int, T: int) -> float:
    """Var of log(B[T] / B[t]) given time-t information."""
    a, s = params.mean_reversion, params.rate_vol
    us = np.arange(t + 1, T, dtype=float)
    if us.size == 0 or s == 0:
        return 0.0
    lo = np.minimum.outer(us, us) - t
    gap = np.abs(np.subtract.outer(us, us))
    cov = s * s / (2 * a) * np.exp(-a * gap) * (-np.expm1(-2 * a * lo))
    return float(params.b(1.0)) ** 2 * float(cov.sum())


def equity_option_price(params: EsgParams, S_t, r_t, t, T_mat, strike, call=True):
    """European equity option, Black formula on the T-forward.

    Log-variance of the forward adds the equity variance and the variance of
    the rolled cash account over (t, T]; the drivers are independent.
    """
    t, T = _grid_int(t, "t"), _grid_int(T_mat, "T_mat")
    if t > T:
        raise ValueError("option already expired: t > T_mat")
    if np.any(np.asarray(strike) <= 0):
        raise ValueError("strike must be positive")
    disc = zcb_price(params, r_t, t, T)
    fwd = np.asarray(S_t, dtype=float) / disc
    var = params.equity_vol**2 * (T - t) + _rolled_rate_variance(params, t, T)
    omega = 1.0 if call else -1.0
    if var == 0.0:
        return disc * np.maximum(omega * (fwd - strike), 0.0)
    sd = math.sqrt(var)
    d1 = (np.log(fwd / strike) + 0.5 * var) / sd
    d2 = d1 - sd
    return disc * omega * (fwd * ndtr(omega * d1) - strike * ndtr(omega * d2))


def swap_value(params: EsgParams, r_t, t, start, tenor, strike):
    """Payer swap (pay fixed annually, receive floating) starting at ``start``."""
    ann = sum(zcb_price(params, r_t, t, start + j) for j in range(1, tenor + 1))
    return zcb_price(params, r_t, t, start) - zcb_price(params, r_t, t, start + tenor) - strike * ann


def _critical_rate(params: EsgParams, expiry, tenor, coupons):
    def f(r):
        return sum(c * math.exp(float(params.log_a(expiry, expiry + j)) - float(params.b(j)) * r)
                   for j, c in enumerate(coupons, start=1)) - 1.0

    lo, hi = -0.5, 0.5
    try:
        for _ in range(60):
            if f(lo) > 0 > f(hi):
                break
            lo, hi = lo * 2, hi * 2
        else:
            raise OverflowError
    except OverflowError:
        raise RuntimeError("could not bracket Jamshidian critical rate") from None
    root, info = brentq(f, lo, hi, xtol=1e-14, rtol=1e-10, full_output=True, disp=False)
    if not info.converged:
        raise RuntimeError(f"critical rate solve did not converge: {info.flag}")
    return root


def swaption_price(params: EsgParams, r_t, t, expiry, tenor, strike_rate, payer=True):
    """European swaption on an annual-fixed swap, via Jamshidian's decomposition."""
    if t > expiry:
        raise ValueError("swaption already expired: t > expiry")
    tenor = _grid_int(tenor, "tenor")
    if tenor < 1:
        raise ValueError("tenor must be at least one year")
    coupons = [strike_rate] * (tenor - 1) + [1.0 + strike_rate]
    r_star = _critical_rate(params, expiry, tenor, coupons)
    a, s = params.mean_reversion, params.rate_vol
    p_exp = zcb_price(params, r_t, t, expiry)
    vol_exp = s * math.sqrt(-math.expm1(-2 * a * (expiry - t)) / (2 * a))
    total = 0.0
    for j, c in enumerate(coupons, start=1):
        strike_bond = math.exp(float(params.log_a(expiry, expiry + j)) - float(params.b(j)) * r_star)
        p_end = zcb_price(params, r_t, t, expiry + j)
        sigma_p = vol_exp * float(params.b(j))
        if sigma_p == 0.0:
            put = np.maximum(strike_bond * p_exp - p_end, 0.0)
            call = np.maximum(p_end - strike_bond * p_exp, 0.0)
        else:
            h = np.log(p_end / (p_exp * strike_bond)) / sigma_p + 0.5 * sigma_p
            put = strike_bond * p_exp * ndtr(-h + sigma_p) - p_end * ndtr(-h)
            call = p_end * ndtr(h) - strike_bond * p_exp * ndtr(h - sigma_p)
        total = total + c * (put if payer else call)
    return total


# --- conditional (inner) generation --------------------------------------

@dataclass(frozen=True)
class OuterState:
    """Time-1 information of an outer scenario: the year-1 drivers."""

    xi: np.ndarray

    def economy(self, params: EsgParams):
        """(r1, B1, S1) implied by the drivers."""
        r, bank, eq = _economy_from(params, self.xi.reshape(1, 1, -1), params.initial_rate,
                                    1.0, params.equity0, 0)
        return float(r[0, 1]), float(bank[0, 1]), float(eq[0, 1])


def inner_drivers(state: OuterState, horizon: int, n_inner: int, seed: int,
                  stream: int = 0) -> DriverTensor:
    """Full-horizon drivers whose year-1 row is pinned to the outer state."""
    if n_inner < 1:
        raise ValueError("n_inner must be at least 1")
    xi1 = np.asarray(state.xi, dtype=float)
    dims = xi1.shape[0]
    vals = np.empty((n_inner, horizon, dims))
    vals[:, 0, :] = xi1
    if horizon > 1:
        vals[:, 1:, :] = rng.normals(seed, stream, 0, n_inner, (horizon - 1) * dims).reshape(
            n_inner, horizon - 1, dims)
    return DriverTensor(vals)


def condition_scenarios(state: OuterState, params: EsgParams, n_inner: int, seed: int,
                        stream: int = 0) -> ScenarioSet:
    """Risk-neutral paths over t = 1..T given the time-1 state; deflators rebased to t = 1."""
    if state is None or getattr(state, "xi", None) is None or np.asarray(state.xi).size < 2:
        raise ValueError("outer state must carry the year-1 rate and equity drivers")
    drivers = inner_drivers(state, params.horizon, n_inner, seed, stream)
    full = simulate_economy(params, drivers)
    bank = full.cash_account[:, 1:] / full.cash_account[:, 1:2]
    return ScenarioSet(full.short_rate[:, 1:].copy(), bank, full.equity[:, 1:].copy(), 1, drivers)


# --- CSV interchange -----------------------------------------------------

def scenarios_to_frame(scen: ScenarioSet) -> pd.DataFrame:
    n, m = scen.short_rate.shape
    frame = pd.DataFrame({
        "scenario_id": np.repeat(np.arange(n), m),
        "t": np.tile(np.arange(scen.start, scen.start + m), n),
        "r": scen.short_rate.ravel(),
        "B": scen.cash_account.ravel(),
        "S": scen.equity.ravel(),
    })
    if scen.drivers is not None:
        d = scen.drivers
        lag = d.horizon - (m - 1)
        full = np.full((n, m, d.dims), np.nan)
        full[:, 1:, :] = d.values[:, lag:, :]
        for k in range(d.dims):
            frame[f"xi_{k + 1}"] = full[:, :, k].ravel()
    return frame


def write_scenarios_csv(scen: ScenarioSet, path) -> None:
    scenarios_to_frame(scen).to_csv(Path(path), index=False, float_format="%.17g",
                                    encoding="utf-8", lineterminator="\n")


def read_scenarios_csv(path) -> ScenarioSet:
    frame = pd.read_csv(Path(path), encoding="utf-8", float_precision="round_trip")
    missing = {"scenario_id", "t", "r", "B", "S"} - set(frame.columns)
    if missing:
        raise ValueError(f"scenario file lacks columns {sorted(missing)}")
    frame = frame.sort_values(["scenario_id", "t"])
    n = frame["scenario_id"].nunique()
    m = len(frame) // n
    start = int(frame["t"].min())
    grab = lambda col: frame[col].to_numpy(dtype=float).reshape(n, m)
    xi_cols = sorted((c for c in frame.columns if c.startswith("xi_")), key=lambda c: int(c[3:]))
    drivers = None
    if xi_cols:
        vals = np.stack([grab(c)[:, 1:] for c in xi_cols], axis=-1)
        drivers = DriverTensor(vals)
    return ScenarioSet(grab("r"), grab("B"), grab("S"), start, drivers)
