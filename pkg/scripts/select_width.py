"""Cross-validate the hidden-layer width of both network variants."""

import json

from vaproxy import nn

from _common import parse

args, cfg = parse(__doc__, widths=dict(default="5,10,20,50,100"), samples=dict(type=int,
                  default=10_000), folds=dict(type=int, default=3))
widths = [int(w) for w in args.widths.split(",")]
paths = cfg.world().training_paths(args.samples, cfg.seed)
raw = nn.econ_raw(paths.scenarios)
inputs = {"rand": nn.rand_inputs(paths.drivers), "econ": nn.EconScaler.fit(raw).transform(raw)}
chosen = {v: nn.cross_validate_width(x, paths.cashflows.cf, widths, args.folds, cfg.seed,
                                     config=cfg.nn.train_config())
          for v, x in inputs.items()}
(args.out / "selected_width.json").write_text(json.dumps(chosen, indent=2) + "\n")
print(chosen)
