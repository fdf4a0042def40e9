"""Macro-run comparison of nested MC, replicating portfolios and both networks."""

from vaproxy import experiment

from _common import parse

args, cfg = parse(__doc__, samples=dict(type=int))
result = experiment.run_experiment(cfg, samples=args.samples)
result.write(args.out)
print(result.mape_table().to_string(index=False))
print(result.runtime_table().to_string(index=False))
