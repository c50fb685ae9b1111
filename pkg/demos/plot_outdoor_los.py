"""
Outdoor LOS: model order and extrapolation
==========================================

Run the desk-scale outdoor LOS experiment with L = 4 and L = 20, write
the usual artifacts (CSV, SVG plots, summary) and print the headline
numbers. Takes about half a minute.
"""

import json
import sys

from fddextrap.harness import load_config, run_experiment

config = sys.argv[1] if len(sys.argv) > 1 else "configs/desk.json"
cfg = load_config(config)
result = run_experiment(cfg)

for r in result.results:
    print("L = %d" % r.estimator.num_paths)
    print(json.dumps(r.summary, indent=1))
print("artifacts in", cfg.output_dir)
