"""Fixed-budget nested MC: estimator spread and bias across outer/inner splits."""

from vaproxy import experiment

from _common import parse

args, cfg = parse(__doc__, budget=dict(type=int, default=10_000))
splits = [(o, args.budget // o) for o in (100, 250, 500, 1000, 2500) if args.budget // o >= 1]
bench = experiment.run_benchmark(cfg)
frame = experiment.nested_tradeoff(cfg, splits, cfg.macro_runs, bench)
frame.to_csv(args.out / "nested_tradeoff_runs.csv", index=False)
summary = frame.groupby(["outer", "inner"]).agg(
    left_es_mean=("left_es", "mean"), left_es_sd=("left_es", "std"),
    left_es_mape=("left_es_ape", "mean")).reset_index()
summary["left_es_bias"] = summary["left_es_mean"] - bench.report.left_es
summary.to_csv(args.out / "nested_tradeoff.csv", index=False)
print(f"benchmark left ES {bench.report.left_es:.4f}")
print(summary.to_string(index=False))
