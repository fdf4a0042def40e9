"""Run configuration: one YAML file, validated before any computation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
import hashlib
import json
from pathlib import Path
import typing

import numpy as np
import yaml

from .esg import EsgParams
from .mortality import LeeCarterParams
from .nn import TrainConfig
from .product import Portfolio, Product
from .rp import UniverseSpec
from .world import World

METHODS = ("benchmark", "nested-mc", "rp", "nn-econ", "nn-rand")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MortalityConfig:
    table: str | None = None
    min_age: int = 30
    max_age: int = 110
    level: float = -9.5
    slope: float = 0.085
    kappa0: float = 0.0
    drift: float = -0.365
    vol: float = 0.6


@dataclass(frozen=True)
class PortfolioConfig:
    csv: str | None = None
    n_policies: int = 1000
    min_age: int = 30
    max_age: int = 70
    fund0: float = 100.0
    premium: float = 10.0
    guarantee0: float | None = None
    equity_weight: float = 0.6


@dataclass(frozen=True)
class UniverseConfig:
    zcb_maturities: tuple = tuple(range(1, 41))
    option_expiries: tuple = (5, 10, 15, 20, 25, 30, 35, 40)
    option_moneyness: tuple = (0.5, 0.75, 1.0, 1.25, 1.5)
    swaption_expiries: tuple = (5, 10, 20)
    swaption_tenors: tuple = (5, 10)
    cash: bool = True
    equity: bool = True


@dataclass(frozen=True)
class BudgetConfig:
    benchmark_outer: int = 20_000
    benchmark_inner: int = 1_000
    nested_outer: int = 100
    nested_inner: int = 100
    train_samples: int = 10_000
    econ_inner: int = 1_000
    dataset_samples: int = 10_000


@dataclass(frozen=True)
class NnConfig:
    width: int = 100
    rand_width: int | None = None
    econ_width: int | None = None
    max_iter: int = 500
    gtol: float = 1e-8
    ftol: float = 1e-12
    l2: float = 0.0
    cv_widths: tuple | None = None
    cv_folds: int = 3

    def width_for(self, variant: str) -> int:
        override = self.rand_width if variant == "rand" else self.econ_width
        return override or self.width

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.max_iter, self.gtol, self.ftol, self.l2)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 2024
    out: str = "runs/default"
    cache_dir: str = ".vaproxy-cache"
    methods: tuple = ("nested-mc", "rp", "nn-econ", "nn-rand")
    macro_runs: int = 100
    alpha: float = 0.01
    threads: int = 1
    esg: EsgParams = field(default_factory=EsgParams)
    mortality: MortalityConfig = field(default_factory=MortalityConfig)
    portfolio: PortfolioConfig = field(default_factory=PortfolioConfig)
    universe: UniverseConfig = field(default_factory=UniverseConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    nn: NnConfig = field(default_factory=NnConfig)

    def __post_init__(self):
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if self.macro_runs < 1:
            raise ConfigError("macro_runs must be at least 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.budget.nested_outer * self.alpha < 1 - 1e-9:
            raise ConfigError("nested_outer too small to resolve the alpha tail")
        try:
            self.universe_spec()
        except ValueError as exc:
            raise ConfigError(f"universe: {exc}") from exc

    # --- derived objects ---

    def world(self) -> World:
        m = self.mortality
        extra = dict(kappa0=m.kappa0, drift=m.drift, vol=m.vol)
        if m.table:
            lc = LeeCarterParams.from_csv(m.table, **extra)
        else:
            lc = LeeCarterParams.gompertz(m.min_age, m.max_age, m.level, m.slope, **extra)
        p = self.portfolio
        if p.csv:
            pf = Portfolio.from_csv(p.csv)
        else:
            pf = Portfolio.uniform(p.n_policies, p.min_age, p.max_age, p.fund0, p.premium,
                                   p.guarantee0)
        return World(self.esg, lc, Product(pf, p.equity_weight))

    def universe_spec(self) -> UniverseSpec:
        return UniverseSpec(**asdict(self.universe))

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def digest(self, *sections: str) -> str:
        """Stable hash of the whole config or of the named sections."""
        d = self.to_dict()
        if sections:
            d = {k: d[k] for k in sections}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False), encoding="utf-8")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        if is_dataclass(hint):
            kwargs[name] = _build(hint, value, f"{where}.{name}")
        else:
            kwargs[name] = _coerce(value, hint, f"{where}.{name}")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _coerce(value, hint, where):
    args = typing.get_args(hint)
    optional = type(None) in args
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{where}: may not be null")
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    if base is tuple or typing.get_origin(base) is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        return tuple(value)
    if base is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if base is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where}: expected an integer")
        return int(value)
    if base is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if base is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    return value


def config_from_dict(data: dict | None) -> RunConfig:
    return _build(RunConfig, data or {}, "config")


def load_config(path=None, **overrides) -> RunConfig:
    data = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(text) or {}
    cfg = config_from_dict(data)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides) if overrides else cfg
