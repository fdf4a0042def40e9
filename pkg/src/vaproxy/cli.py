"""Command line: generate, fit, evaluate, benchmark, full-run.

Errors exit non-zero with a one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
from dataclasses import replace
import json
import logging
from pathlib import Path
import sys
import time

import numpy as np
import pandas as pd

from . import esg, experiment, nn
from .config import ConfigError, RunConfig, load_config
from .metrics import METRICS, RiskReport, mape
from .product import CashflowMatrix
from .rp import RpModel

log = logging.getLogger("vaproxy")

DATASET_FILES = ("drivers.csv", "scenarios.csv", "mortality.csv", "cashflows.csv")
MODEL_FILES = {"rp": "rp.csv", "nn-econ": "nn-econ.nn", "nn-rand": "nn-rand.nn"}
_CSV = dict(index=False, float_format="%.17g", lineterminator="\n")


class CliError(RuntimeError):
    pass


def _line_count(path: Path) -> int:
    with open(path, "rb") as fh:
        return sum(1 for _ in fh)


def _write_resolved(cfg: RunConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config.resolved.yaml")


# --- generate ------------------------------------------------------------

def cmd_generate(cfg: RunConfig, out: Path) -> dict:
    world = cfg.world()
    n = cfg.budget.dataset_samples
    paths = world.training_paths(n, cfg.seed, run=0)
    try:
        _write_resolved(cfg, out)
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc}") from exc
    d = paths.drivers
    T = d.horizon
    drivers = pd.DataFrame({"scenario_id": np.repeat(np.arange(n), T),
                            "t": np.tile(np.arange(1, T + 1), n)})
    for k in range(d.dims):
        drivers[f"xi_{k + 1}"] = d.values[:, :, k].ravel()
    drivers.to_csv(out / "drivers.csv", **_CSV)
    esg.write_scenarios_csv(paths.scenarios, out / "scenarios.csv")
    kappa = paths.mortality.kappa
    pd.DataFrame({"scenario_id": np.repeat(np.arange(n), T + 1),
                  "t": np.tile(np.arange(T + 1), n),
                  "kappa": kappa.ravel()}).to_csv(out / "mortality.csv", **_CSV)
    paths.cashflows.to_csv(out / "cashflows.csv")
    manifest = {
        "seed": cfg.seed,
        "config_hash": cfg.digest("seed", "esg", "mortality", "portfolio", "budget"),
        "n_scenarios": n,
        "horizon": T,
        "dims": d.dims,
        "rows": {name: _line_count(out / name) - 1 for name in DATASET_FILES},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_dataset(cfg: RunConfig, data: Path):
    """Validated dataset as (drivers, scenarios, cash flows)."""
    mpath = data / "manifest.json"
    if not mpath.exists():
        raise CliError(f"no manifest in {data}")
    manifest = json.loads(mpath.read_text())
    expected = cfg.digest("seed", "esg", "mortality", "portfolio", "budget")
    if manifest["config_hash"] != expected:
        raise CliError("dataset manifest does not match the config "
                       f"({manifest['config_hash']} != {expected})")
    for name, rows in manifest["rows"].items():
        if _line_count(data / name) - 1 != rows:
            raise CliError(f"{name} row count differs from manifest")
    scen = esg.read_scenarios_csv(data / "scenarios.csv")
    cf = CashflowMatrix.from_csv(data / "cashflows.csv").cf
    return scen.drivers, scen, cf


# --- fit ---------------------------------------------------------------

def cmd_fit(cfg: RunConfig, data: Path, out: Path, methods) -> dict:
    drivers, scen, cf = load_dataset(cfg, data)
    paths = type("DatasetPaths", (), {})()
    paths.drivers, paths.scenarios = drivers, scen
    paths.cashflows = CashflowMatrix(cf)
    _write_resolved(cfg, out)
    diagnostics = {}
    for method in methods:
        if method not in MODEL_FILES:
            continue
        t0 = time.perf_counter()
        model = experiment.fit_method(method, cfg, paths, run=0)
        secs = time.perf_counter() - t0
        target = out / MODEL_FILES[method]
        if method == "rp":
            model.to_csv(target)
            diagnostics[method] = {"seconds": secs, "selected": model.n_selected,
                                   "alpha": model.diagnostics.get("alpha"),
                                   "dropped": len(model.diagnostics.get("dropped", []))}
        else:
            model.save(target)
            diagnostics[method] = {"seconds": secs, "width": model.width,
                                   "iterations": [h.iterations for h in model.heads],
                                   "loss": [h.loss for h in model.heads]}
    (out / "fit_diagnostics.json").write_text(json.dumps(diagnostics, indent=2) + "\n")
    return diagnostics


def load_model(method: str, path: Path):
    return RpModel.from_csv(path) if method == "rp" else nn.NnModel.load(path)


# --- evaluate ------------------------------------------------------------

def cmd_evaluate(cfg: RunConfig, models: Path, out: Path, methods) -> pd.DataFrame:
    bench = experiment.load_benchmark(cfg)
    if bench is None:
        raise CliError(f"benchmark cache missing ({experiment.benchmark_path(cfg)}); "
                       "run the benchmark command first")
    _write_resolved(cfg, out)
    rows, times = [], []
    for method in methods:
        if method == "benchmark":
            rep, secs = bench.report, bench.seconds
        elif method in MODEL_FILES:
            path = models / MODEL_FILES[method]
            if not path.exists():
                raise CliError(f"model file {path} missing")
            t0 = time.perf_counter()
            vals = experiment.value_method(method, load_model(method, path), cfg, bench, 0)
            rep, secs = RiskReport.from_samples(vals, cfg.alpha), time.perf_counter() - t0
        else:
            continue
        rows.append({"method": method,
                     **{k: mape([rep.metric(k)], bench.report.metric(k)) for k in METRICS}})
        times.append({"method": method, "seconds": secs})
    table = pd.DataFrame(rows, columns=["method", *METRICS])
    table.to_csv(out / "table3_mape.csv", index=False, float_format="%.10g",
                 lineterminator="\n")
    pd.DataFrame(times).to_csv(out / "table4_runtime.csv", index=False, float_format="%.6g",
                               lineterminator="\n")
    return table


def cmd_benchmark(cfg: RunConfig, out: Path, refresh=False) -> RiskReport:
    bench = experiment.run_benchmark(cfg, refresh=refresh)
    _write_resolved(cfg, out)
    pd.DataFrame([{"method": "benchmark", **{k: bench.report.metric(k) for k in METRICS}}]
                 ).to_csv(out / "table1_benchmark.csv", index=False, float_format="%.10g",
                          lineterminator="\n")
    pd.DataFrame({"scenario_id": np.arange(len(bench.values)), "V1": bench.values}).to_csv(
        out / "benchmark_samples.csv", **_CSV)
    return bench.report


def cmd_full_run(cfg: RunConfig, out: Path):
    _write_resolved(cfg, out)
    result = experiment.run_experiment(cfg)
    result.write(out)
    return result


# --- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path)
    common.add_argument("--methods", help="comma-separated method list")
    common.add_argument("--macro-runs", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vaproxy", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="simulate a training dataset")
    f = sub.add_parser("fit", parents=[common], help="fit proxy models to a dataset")
    f.add_argument("--data", type=Path, required=True)
    e = sub.add_parser("evaluate", parents=[common], help="score fitted models")
    e.add_argument("--models", type=Path, required=True)
    b = sub.add_parser("benchmark", parents=[common], help="run or load the large nested MC")
    b.add_argument("--refresh", action="store_true")
    sub.add_parser("full-run", parents=[common], help="benchmark plus macro-run experiment")
    return p


def _resolve(args) -> RunConfig:
    methods = tuple(m.strip() for m in args.methods.split(",")) if args.methods else None
    cfg = load_config(args.config, seed=args.seed, methods=methods,
                      macro_runs=args.macro_runs, threads=args.threads)
    if args.out is not None:
        cfg = replace(cfg, out=str(args.out))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = _resolve(args)
        out = Path(cfg.out)
        if args.command == "generate":
            result = cmd_generate(cfg, out)
        elif args.command == "fit":
            result = cmd_fit(cfg, args.data, out, cfg.methods)
        elif args.command == "evaluate":
            result = cmd_evaluate(cfg, args.models, out, cfg.methods).to_dict("records")
        elif args.command == "benchmark":
            result = cmd_benchmark(cfg, out, args.refresh).as_dict()
        else:
            result = cmd_full_run(cfg, out).mape_table().to_dict("records")
    except (CliError, ConfigError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    print(json.dumps({"command": args.command, "out": str(out), "result": result},
                     default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
