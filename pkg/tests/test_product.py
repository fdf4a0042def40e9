import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vaproxy import esg
from vaproxy.esg import EsgParams, ScenarioSet
from vaproxy.mortality import LeeCarterParams, MortalityPath, simulate_mortality
from vaproxy.product import CashflowMatrix, Portfolio, Product, project_cashflows

import oracles


def flat_q_table(q_by_age, ages=range(30, 111)):
    """Lee-Carter table with b = 0, so q(age) is fixed: a = log(-log(1 - q))."""
    ages = np.array(list(ages))
    # q = 1 is reached in floating point once exp(a) > ~750
    a = np.array([10.0 if q_by_age.get(int(x), 0.01) >= 1 else
                  math.log(-math.log1p(-q_by_age.get(int(x), 0.01))) for x in ages])
    return LeeCarterParams(ages, a, np.zeros(len(ages)), vol=0.0, drift=0.0)


def single_scenario(equity, bank, rates=None):
    equity = np.asarray(equity, dtype=float)[None]
    bank = np.asarray(bank, dtype=float)[None]
    r = np.zeros_like(bank) if rates is None else np.asarray(rates, dtype=float)[None]
    return ScenarioSet(r, bank, equity, 0)


def kappa_path(T, n=1):
    return np.zeros((n, T + 1))


# --- hand ledger --------------------------------------------------------------

def _toy():
    equity = [100.0, 90.0, 72.0, 80.0]
    bank = [1.0, 1.02, 1.05, 1.09]
    ages = {40: 0.25, 41: 0.3, 42: 0.35, 60: 0.5, 61: 0.45, 62: 0.4}
    lc = flat_q_table(ages)
    pf = Portfolio(np.array([40, 60]), np.array([100.0, 50.0]), np.array([110.0, 50.0]),
                   np.array([10.0, 20.0]), np.array([1.0, 3.0]))
    return equity, bank, lc, pf


def _q_lookup(lc):
    return {int(x): {t: float(-math.expm1(-math.exp(a))) for t in range(1, 4)}
            for x, a in zip(lc.ages, lc.a)}


def test_hand_ledger_three_years_two_policies():
    equity, bank, lc, pf = _toy()
    scen = single_scenario(equity, bank)
    cf = project_cashflows(Product(pf, 0.6), scen, MortalityPath(lc, kappa_path(3))).cf[0]
    policies = [dict(age=int(a), fund=f, guarantee=g, premium=p, count=c)
                for a, f, g, p, c in zip(pf.age, pf.fund0, pf.guarantee0, pf.premium, pf.count)]
    ref = oracles.hand_ledger(policies, equity, bank, _q_lookup(lc), 0.6)
    assert np.all(np.round(cf, 9) == np.round(ref, 9))
    np.testing.assert_allclose(cf, ref, rtol=1e-13, atol=0)
    assert np.all(cf < 0)


def test_full_death_first_year():
    lc = flat_q_table({50: 1.0})
    pf = Portfolio(np.array([50]), np.array([100.0]), np.array([110.0]), np.array([10.0]),
                   np.array([1.0]))
    # fund: (100 + 10) * 100/110 = 100, guarantee 120: shortfall 20 paid at tau = 1
    scen = single_scenario([100.0, 100.0 * 100 / 110, 100.0], [1.0, 1.25, 1.5])
    cf = project_cashflows(Product(pf, 1.0), scen, MortalityPath(lc, kappa_path(2))).cf[0]
    assert cf[0] == pytest.approx(-20.0 / 1.25, rel=1e-12)
    assert cf[1] == pytest.approx(0.0, abs=1e-200)


def test_guarantee_never_binds_in_growing_economy():
    p = EsgParams(rate_vol=0.0, equity_vol=0.0, initial_rate=0.05)
    scen = esg.simulate_economy(p, esg.generate_drivers(3, 40, 3, seed=1))
    lc = LeeCarterParams.gompertz()
    mort = simulate_mortality(lc, esg.generate_drivers(3, 40, 3, seed=1))
    cf = project_cashflows(Product(Portfolio.uniform(), 0.6), scen, mort).cf
    assert np.all(cf == 0)


def test_cohort_mass_conservation():
    scen_d = esg.generate_drivers(20, 40, 3, seed=4)
    scen = esg.simulate_economy(EsgParams(), scen_d)
    mort = simulate_mortality(LeeCarterParams.gompertz(), scen_d)
    pf = Portfolio.uniform()
    _, led = project_cashflows(Product(pf), scen, mort, ledger=True)
    total = led["exits"].sum(axis=2)
    np.testing.assert_allclose(total, np.broadcast_to(pf.count, total.shape), rtol=1e-12)
    assert pf.size == 1000


def test_guarantee_increments_by_premium():
    scen_d = esg.generate_drivers(2, 40, 3, seed=4)
    scen = esg.simulate_economy(EsgParams(), scen_d)
    mort = simulate_mortality(LeeCarterParams.gompertz(), scen_d)
    _, led = project_cashflows(Product(Portfolio.uniform()), scen, mort, ledger=True)
    np.testing.assert_allclose(led["guarantee"][0], 100 + 10 * np.arange(1, 41))


@given(shock=st.lists(st.floats(0.5, 1.0), min_size=3, max_size=3), seed=st.integers(0, 50))
@settings(max_examples=40)
def test_lower_equity_never_lowers_payouts(shock, seed):
    d = esg.generate_drivers(1, 3, 3, seed=seed)
    scen = esg.simulate_economy(EsgParams(horizon=3), d)
    lower = scen.equity.copy()
    lower[:, 1:] *= np.cumprod(shock)[None]
    worse = ScenarioSet(scen.short_rate, scen.cash_account, lower, 0)
    lc = flat_q_table({a: 0.1 for a in range(30, 111)})
    mort = MortalityPath(lc, kappa_path(3))
    pf = Portfolio(np.array([40, 55]), np.array([100.0, 80.0]), np.array([100.0, 120.0]),
                   np.array([10.0, 5.0]), np.array([2.0, 1.0]))
    base = project_cashflows(Product(pf), scen, mort).cf.sum()
    bad = project_cashflows(Product(pf), worse, mort).cf.sum()
    assert bad <= base + 1e-12


def test_rejects_short_mortality_path():
    d = esg.generate_drivers(1, 5, 3, seed=0)
    scen = esg.simulate_economy(EsgParams(horizon=5), d)
    mort = MortalityPath(LeeCarterParams.gompertz(), kappa_path(3))
    with pytest.raises(ValueError):
        project_cashflows(Product(Portfolio.uniform()), scen, mort)


def test_portfolio_validation_and_defaults():
    with pytest.raises(ValueError):
        Portfolio(np.array([40]), np.array([-1.0]), np.array([1.0]), np.array([1.0]),
                  np.array([1.0]))
    pf = Portfolio.uniform()
    assert pf.age.min() == 30 and pf.age.max() == 70
    assert np.all(pf.fund0 == 100) and np.all(pf.guarantee0 == 100) and np.all(pf.premium == 10)


def test_portfolio_and_cashflow_csv(tmp_path):
    pf = Portfolio.uniform(n_policies=7)
    pf.to_csv(tmp_path / "pf.csv")
    assert (tmp_path / "pf.csv").read_text().splitlines()[0] == "age,fund0,guarantee0,premium,count"
    back = Portfolio.from_csv(tmp_path / "pf.csv")
    assert np.array_equal(back.count, pf.count) and np.array_equal(back.age, pf.age)
    cf = CashflowMatrix(np.random.default_rng(0).normal(size=(3, 4)))
    cf.to_csv(tmp_path / "cf.csv")
    assert (tmp_path / "cf.csv").read_text().splitlines()[0] == "scenario_id,tau,cf"
    assert np.array_equal(CashflowMatrix.from_csv(tmp_path / "cf.csv").cf, cf.cf)
