"""Run (or load from cache) the large nested MC benchmark and write its risk report."""

import pandas as pd

from vaproxy import experiment
from vaproxy.metrics import METRICS

from _common import parse

args, cfg = parse(__doc__, refresh=dict(action="store_true"))
bench = experiment.run_benchmark(cfg, refresh=args.refresh)
row = {"method": "benchmark", **{k: bench.report.metric(k) for k in METRICS},
       "outer": len(bench.values), "inner": cfg.budget.benchmark_inner, "seconds": bench.seconds}
pd.DataFrame([row]).to_csv(args.out / "table1_benchmark.csv", index=False)
print(pd.DataFrame([row]).to_string(index=False))
