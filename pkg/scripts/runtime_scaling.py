"""End-to-end fit-and-value runtime per method across training budgets."""

import pandas as pd

from vaproxy import experiment

from _common import parse

args, cfg = parse(__doc__, sizes=dict(default="2500,5000,10000,20000,40000"))
methods = ("rp", "nn-econ", "nn-rand")
bench = experiment.run_benchmark(cfg)
rows = []
for n in (int(s) for s in args.sizes.split(",")):
    res = experiment.run_experiment(cfg, methods, macro_runs=1, samples=n, bench=bench)
    rows += [{"method": m, "samples": n, "seconds": res.runtime(m)} for m in methods]
table = pd.DataFrame(rows).pivot(index="samples", columns="method", values="seconds")
table.to_csv(args.out / "table4_runtime.csv")
print(table.to_string())
