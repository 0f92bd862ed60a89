"""How much of the target pilot's own data should the model see?

Each participant's workload response points in a mostly personal direction.
For a few targets we sweep the share of target rows in the training pool and
print the mean balanced accuracy per share.  Takes a couple of minutes.
"""

import sys

from aeroload.experiments import ExperimentConfig, generalized_cv, individualized_all
from aeroload.pipeline import build_table
from aeroload.synth import IDIOSYNCRATIC_EFFECTS, SynthSpec, generate_dataset

n_targets = int(sys.argv[1]) if len(sys.argv) > 1 else 4
sessions, _ = generate_dataset(SynthSpec(planted_effects=IDIOSYNCRATIC_EFFECTS))
table, _ = build_table(sessions)
cfg = ExperimentConfig()

print(f"generalized model: {generalized_cv(table, cfg).balanced_accuracy:.3f}")
rep = individualized_all(table, cfg, targets=table.participants[:n_targets])
for p, acc in rep.upsampling_curve:
    print(f"  target share {p:3.1f}: {acc:.3f} {'#' * int(acc * 40)}")
print(f"best share {rep.aggregate['best_fraction']:g}")
