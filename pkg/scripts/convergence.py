"""Network MApE as the training budget grows."""

import pandas as pd

from vaproxy import experiment
from vaproxy.metrics import METRICS

from _common import parse

args, cfg = parse(__doc__, sizes=dict(default="10000,50000,100000"),
                  methods=dict(default="nn-rand,nn-econ"))
sizes = [int(s) for s in args.sizes.split(",")]
methods = tuple(args.methods.split(","))
bench = experiment.run_benchmark(cfg)
rows = []
for n in sizes:
    res = experiment.run_experiment(cfg, methods, samples=n, bench=bench)
    for m in methods:
        rows.append({"method": m, "samples": n, **{k: res.mape(m, k) for k in METRICS},
                     "seconds": res.runtime(m)})
    pd.DataFrame(rows).to_csv(args.out / "convergence.csv", index=False)
print(pd.DataFrame(rows).to_string(index=False))
