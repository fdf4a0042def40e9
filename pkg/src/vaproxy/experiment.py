"""Macro-run harness: benchmark once, then refit and re-value every method per run.

Proxies are evaluated on the benchmark's own outer scenarios, so their
errors are measured against the same year-1 states; all training data comes
from streams disjoint from the benchmark's, keeping the comparison out of
sample.  Values are in time-1 money throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
from pathlib import Path
import time

import numpy as np
import pandas as pd

from . import nn, rng
from .config import RunConfig
from .esg import ScenarioSet, _economy_from
from .metrics import METRICS, RiskReport, mape
from .nested import NestedConfig, NestedResult, nested_distribution
from .rp import build_universe, fit_rp, rp_value_t1

log = logging.getLogger(__name__)

PROXIES = ("rp", "nn-econ", "nn-rand")
RP_CHUNK = 2_500


@dataclass
class Benchmark:
    states: np.ndarray
    values: np.ndarray
    report: RiskReport
    seconds: float = 0.0

    def economy(self, params):
        """(r1, B1, S1) per outer state."""
        r, bank, eq = _economy_from(params, self.states[:, None, :], params.initial_rate, 1.0,
                                    params.equity0, 0)
        return r[:, 1], bank[:, 1], eq[:, 1]


def benchmark_path(config: RunConfig) -> Path:
    key = config.digest("seed", "esg", "mortality", "portfolio") + "-" + "x".join(
        str(v) for v in (config.budget.benchmark_outer, config.budget.benchmark_inner))
    return Path(config.cache_dir) / f"benchmark-{key}.npz"


def load_benchmark(config: RunConfig) -> Benchmark | None:
    path = benchmark_path(config)
    if not path.exists():
        return None
    with np.load(path) as z:
        states, values, secs = z["states"], z["values"], float(z["seconds"])
    return Benchmark(states, values, RiskReport.from_samples(values, config.alpha), secs)


def run_benchmark(config: RunConfig, refresh: bool = False) -> Benchmark:
    """Large nested MC, cached on disk by (config hash, seed)."""
    cached = None if refresh else load_benchmark(config)
    if cached is not None:
        return cached
    b = config.budget
    t0 = time.perf_counter()
    res = nested_distribution(config.world(), NestedConfig(b.benchmark_outer, b.benchmark_inner,
                                                           config.seed, run=0,
                                                           alpha=config.alpha))
    secs = time.perf_counter() - t0
    path = benchmark_path(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, states=res.states, values=res.values, seconds=secs)
    log.info("benchmark %dx%d done in %.0fs", b.benchmark_outer, b.benchmark_inner, secs)
    return Benchmark(res.states, res.values, RiskReport.from_samples(res.values, config.alpha),
                     secs)


# --- single-method estimators --------------------------------------------

def nested_estimate(config: RunConfig, run: int, n_outer=None, n_inner=None) -> np.ndarray:
    b = config.budget
    cfg = NestedConfig(n_outer or b.nested_outer, n_inner or b.nested_inner, config.seed,
                       run=run + 1, alpha=config.alpha)
    return nested_distribution(config.world(), cfg).values


def fit_method(method: str, config: RunConfig, paths, run: int):
    world = config.world()
    if method == "rp":
        universe = build_universe(world.esg, config.universe_spec())
        scen, cf = paths.scenarios, paths.cashflows.cf
        # the stacked design matrix is scenarios x years x instruments; chunk it
        blocks = [slice(i, i + RP_CHUNK) for i in range(0, scen.n_scenarios, RP_CHUNK)]
        chunks = [ScenarioSet(scen.short_rate[b], scen.cash_account[b], scen.equity[b])
                  for b in blocks]
        return fit_rp(universe, world.esg, chunks, [cf[b] for b in blocks])
    tc = config.nn.train_config()
    seed = config.seed + run
    variant = method.removeprefix("nn-")
    if variant not in ("rand", "econ"):
        raise ValueError(f"{method} is not a proxy method")
    width = config.nn.width_for(variant)
    if config.nn.cv_widths:
        if variant == "rand":
            x = nn.rand_inputs(paths.drivers)
        else:
            raw = nn.econ_raw(paths.scenarios)
            x = nn.EconScaler.fit(raw).transform(raw)
        width = nn.cross_validate_width(x, paths.cashflows.cf, config.nn.cv_widths,
                                        config.nn.cv_folds, seed, config=tc)
    if variant == "rand":
        return nn.train_rand(paths.drivers, paths.cashflows.cf, width, tc, seed)
    return nn.train_econ(paths.scenarios, paths.cashflows.cf, width, tc, seed)
    raise ValueError(f"{method} is not a proxy method")


def value_method(method: str, model, config: RunConfig, bench: Benchmark, run: int) -> np.ndarray:
    params = config.esg
    r1, b1, s1 = bench.economy(params)
    if method == "rp":
        return rp_value_t1(model, params, r1, b1, s1)
    if method == "nn-rand":
        return nn.closed_form_value(model, bench.states[:, None, :], 1) * b1
    if method == "nn-econ":
        stream = rng.stream_id(rng.VALUATION, run)
        return nn.mc_value(model, params, bench.states, config.budget.econ_inner,
                           config.seed, stream) * b1
    raise ValueError(f"{method} is not a proxy method")


@dataclass
class MethodRun:
    method: str
    run: int
    report: RiskReport | None
    seconds: float
    samples: int
    error: str | None = None


@dataclass
class MacroRunResult:
    benchmark: RiskReport
    runs: list = field(default_factory=list)
    macro_runs: int = 0

    def reports(self, method: str, samples: int | None = None) -> list:
        return [r.report for r in self.runs if r.method == method and r.report is not None
                and (samples is None or r.samples == samples)]

    def mape(self, method: str, metric: str, samples: int | None = None) -> float:
        est = [rep.metric(metric) for rep in self.reports(method, samples)]
        if not est:
            return float("nan")
        return mape(est, self.benchmark.metric(metric))

    def runtime(self, method: str, samples: int | None = None) -> float:
        secs = [r.seconds for r in self.runs if r.method == method and r.error is None
                and (samples is None or r.samples == samples)]
        return float(np.mean(secs)) if secs else float("nan")

    def methods(self) -> list:
        return list(dict.fromkeys(r.method for r in self.runs))

    def mape_table(self) -> pd.DataFrame:
        rows = [{"method": m, **{k: self.mape(m, k) for k in METRICS}} for m in self.methods()]
        return pd.DataFrame(rows, columns=["method", *METRICS])

    def runtime_table(self) -> pd.DataFrame:
        keys = list(dict.fromkeys((r.method, r.samples) for r in self.runs))
        return pd.DataFrame([{"method": m, "samples": n, "seconds": self.runtime(m, n)}
                             for m, n in keys])

    def runs_table(self) -> pd.DataFrame:
        rows = []
        for r in self.runs:
            row = {"method": r.method, "run": r.run, "samples": r.samples,
                   "seconds": r.seconds, "error": r.error or ""}
            row.update({k: (r.report.metric(k) if r.report else np.nan) for k in METRICS})
            rows.append(row)
        return pd.DataFrame(rows)

    def write(self, out) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        fmt = dict(index=False, float_format="%.10g", lineterminator="\n")
        pd.DataFrame([{"method": "benchmark", **{k: self.benchmark.metric(k) for k in METRICS}}]
                     ).to_csv(out / "table1_benchmark.csv", **fmt)
        self.mape_table().to_csv(out / "table3_mape.csv", **fmt)
        self.runtime_table().to_csv(out / "table4_runtime.csv", **fmt)
        self.runs_table().to_csv(out / "macro_runs.csv", **fmt)


def _one_run(config: RunConfig, bench: Benchmark, methods, run: int, samples: int) -> list:
    out = []
    if "benchmark" in methods:
        out.append(MethodRun("benchmark", run, bench.report, bench.seconds,
                             len(bench.values) * config.budget.benchmark_inner))
    if "nested-mc" in methods:
        t0 = time.perf_counter()
        try:
            vals = nested_estimate(config, run)
            out.append(MethodRun("nested-mc", run, RiskReport.from_samples(vals, config.alpha),
                                 time.perf_counter() - t0,
                                 config.budget.nested_outer * config.budget.nested_inner))
        except Exception as exc:  # flagged per run, the experiment carries on
            log.exception("nested-mc failed in run %d", run)
            out.append(MethodRun("nested-mc", run, None, time.perf_counter() - t0, 0, repr(exc)))
    proxies = [m for m in PROXIES if m in methods]
    if not proxies:
        return out
    paths = config.world().training_paths(samples, config.seed, run)
    for method in proxies:
        t0 = time.perf_counter()
        try:
            model = fit_method(method, config, paths, run)
            vals = value_method(method, model, config, bench, run)
            rep = RiskReport.from_samples(vals, config.alpha)
            out.append(MethodRun(method, run, rep, time.perf_counter() - t0, samples))
        except Exception as exc:
            log.exception("%s failed in run %d", method, run)
            out.append(MethodRun(method, run, None, time.perf_counter() - t0, samples, repr(exc)))
        log.info("run %d %s (%d samples): %.1fs", run, method, samples, out[-1].seconds)
    return out


def run_experiment(config: RunConfig, methods=None, macro_runs=None, samples=None,
                   first_run: int = 0, bench: Benchmark | None = None) -> MacroRunResult:
    """Benchmark (cached) plus ``macro_runs`` independent refits of each method."""
    methods = tuple(methods or config.methods)
    R = macro_runs or config.macro_runs
    samples = samples or config.budget.train_samples
    bench = bench or run_benchmark(config)
    runs = range(first_run, first_run + R)
    if config.threads > 1:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=config.threads)(
            delayed(_one_run)(config, bench, methods, r, samples) for r in runs)
    else:
        chunks = [_one_run(config, bench, methods, r, samples) for r in runs]
    result = MacroRunResult(bench.report, [m for c in chunks for m in c], R)
    return result


def nested_tradeoff(config: RunConfig, splits, macro_runs: int, bench: Benchmark) -> pd.DataFrame:
    """Fixed-budget nested MC estimators across outer/inner splits (one row per run)."""
    rows = []
    for n_outer, n_inner in splits:
        for run in range(macro_runs):
            vals = nested_estimate(config, run, n_outer, n_inner)
            rep = RiskReport.from_samples(vals, config.alpha)
            rows.append({"outer": n_outer, "inner": n_inner, "run": run,
                         **{k: rep.metric(k) for k in METRICS}})
    frame = pd.DataFrame(rows)
    for k in METRICS:
        frame[f"{k}_ape"] = (frame[k] / bench.report.metric(k) - 1.0).abs()
    return frame
