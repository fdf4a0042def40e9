"""Nested Monte Carlo estimate of the time-1 value distribution.

Outer scenarios are year-1 driver draws; each is valued by averaging the
shortfall cash flows after year 1 over ``n_inner`` risk-neutral continuations.
Inner paths are generated in chunks so the full M x N set never sits in memory.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np

from . import rng
from .esg import DriverTensor, OuterState, inner_drivers
from .world import World

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NestedConfig:
    n_outer: int
    n_inner: int
    seed: int = 0
    run: int = 0
    max_paths: int = 20_000
    alpha: float | None = 0.01

    def __post_init__(self):
        if self.n_outer < 1 or self.n_inner < 1:
            raise ValueError("n_outer and n_inner must be positive")
        if self.alpha is not None and self.n_outer * self.alpha < 1 - 1e-9:
            raise ValueError(f"{self.n_outer} outer scenarios cannot resolve a {self.alpha:.0%} tail")

    @property
    def budget(self) -> int:
        return self.n_outer * self.n_inner


@dataclass
class NestedResult:
    states: np.ndarray  # (M, D) year-1 drivers
    values: np.ndarray  # (M,) V1 estimates in time-1 money


def outer_states(world: World, n_outer: int, seed: int, stream: int, start: int = 0) -> np.ndarray:
    return rng.normals(seed, stream, start, n_outer, world.dims)


def _value_block(world: World, xis: np.ndarray, n_inner: int, seed: int, streams) -> np.ndarray:
    horizon = world.horizon
    blocks = [inner_drivers(OuterState(x), horizon, n_inner, seed, s).values
              for x, s in zip(xis, streams)]
    paths = world.simulate(DriverTensor(np.concatenate(blocks)))
    b1 = paths.scenarios.cash_account[:, 1]
    per_path = world.value_t1(paths.cashflows.cf, b1)
    return per_path.reshape(len(xis), n_inner).mean(axis=1)


def value_conditional_mc(world: World, state: OuterState, n_inner: int, seed: int,
                         stream: int = 0) -> float:
    """Average inner-path value of cash flows after year 1, in time-1 money."""
    if n_inner < 1:
        raise ValueError("n_inner must be at least 1")
    return float(_value_block(world, np.asarray(state.xi)[None, :], n_inner, seed, [stream])[0])


def nested_distribution(world: World, config: NestedConfig) -> NestedResult:
    if config.n_inner > config.max_paths:
        raise MemoryError(f"{config.n_inner} inner paths exceed the streaming chunk limit "
                          f"of {config.max_paths}")
    outer_stream = rng.stream_id(rng.NESTED_OUTER, config.run)
    xis = outer_states(world, config.n_outer, config.seed, outer_stream)
    per_chunk = max(1, config.max_paths // config.n_inner)
    values = np.empty(config.n_outer)
    for lo in range(0, config.n_outer, per_chunk):
        hi = min(lo + per_chunk, config.n_outer)
        streams = [rng.stream_id(rng.NESTED_INNER, i, config.run) for i in range(lo, hi)]
        values[lo:hi] = _value_block(world, xis[lo:hi], config.n_inner, config.seed, streams)
        if hi % max(per_chunk, config.n_outer // 20) < per_chunk:
            log.debug("nested MC: %d/%d outer scenarios", hi, config.n_outer)
    return NestedResult(xis, values)
