"""Can the pipeline find a signal we planted?

A synthetic cohort of 28 participants carries a 3-sigma workload effect in
pupil diameter only.  Participant-wise cross-validation should find it, and
removing the pupil features should hurt while removing skin conductance
should not.
"""

from aeroload.experiments import ExperimentConfig, ablation, baseline_protocol, generalized_cv
from aeroload.pipeline import build_table
from aeroload.synth import SynthSpec, generate_dataset

sessions, truth = generate_dataset(SynthSpec(seed=0))
table, _ = build_table(sessions)
print(f"feature table: {table.n_rows} rows, {table.X.shape[1]} features")

cfg = ExperimentConfig(modalities_to_ablate=("Pupillary", "GSR", "HR"))
general = generalized_cv(table, cfg)
print(f"generalized balanced accuracy: {general.balanced_accuracy:.3f}")
for f in general.folds:
    print(f"  fold {f['fold']}: {len(f['participants'])} held-out participants, "
          f"{f['metrics']['balanced_accuracy']:.3f}")

print(f"expected-difficulty baseline: {baseline_protocol(table, cfg).aggregate['balanced_accuracy']:.3f}")

for row in ablation(table, cfg, general).ablation_rows:
    print(f"without {row['modality']:10s}: {row['ablated']:.3f} (drop {row['accuracy_drop']:+.3f})")
