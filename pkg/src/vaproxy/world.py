"""The simulated insurer: economy, mortality and product wired together."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .esg import DriverTensor, EsgParams, ScenarioSet, generate_drivers, simulate_economy
from .mortality import LeeCarterParams, MortalityPath, simulate_mortality
from .product import CashflowMatrix, Portfolio, Product, project_cashflows


@dataclass
class Paths:
    drivers: DriverTensor
    scenarios: ScenarioSet
    mortality: MortalityPath
    cashflows: CashflowMatrix


@dataclass(frozen=True)
class World:
    esg: EsgParams = field(default_factory=EsgParams)
    mortality: LeeCarterParams = field(default_factory=LeeCarterParams.gompertz)
    product: Product = field(default_factory=lambda: Product(Portfolio.uniform()))
    dims: int = 3

    @property
    def horizon(self) -> int:
        return self.esg.horizon

    def simulate(self, drivers: DriverTensor) -> Paths:
        scen = simulate_economy(self.esg, drivers)
        mort = simulate_mortality(self.mortality, drivers)
        return Paths(drivers, scen, mort, project_cashflows(self.product, scen, mort))

    def training_paths(self, n: int, seed: int, run: int = 0, start: int = 0) -> Paths:
        """Fresh full-horizon paths for regress-later fitting (macro-run ``run``)."""
        stream = rng.stream_id(rng.TRAIN, run)
        return self.simulate(generate_drivers(n, self.horizon, self.dims, seed, stream, start))

    def value_t1(self, cashflows: np.ndarray, cash_account_1) -> np.ndarray:
        """Per-path sum of cash flows after year 1, expressed in time-1 money."""
        return cashflows[:, 1:].sum(axis=1) * cash_account_1
