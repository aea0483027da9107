"""
Formulation datasets and the logarithmic CE target
===================================================

An electrolyte formulation is a set of molecules (as SMILES) with molar
ratios and a Coulombic-efficiency target.  CE values crowd together near
1.0, so the pipeline trains on LCE = -log10(1 - CE), which spreads the
interesting high-CE region out.

This script builds a small synthetic dataset, shows the transform, then
walks the housekeeping operations: cleaning duplicates, the deterministic
train/test split, and per-component-count distribution stats.
"""

import json
import tempfile
from pathlib import Path

from elyte.data import (
    boxplot_stats,
    ce_from_lce,
    clean_dataset,
    lce_from_ce,
    load_dataset,
    save_dataset,
    split_dataset,
)
from elyte.synth import synthetic_dataset

# The transform and its inverse: CE 0.9 and 0.99 land on LCE 1 and 2.
for ce in (0.0, 0.9, 0.99, 0.999):
    print(f"CE {ce:<6} -> LCE {lce_from_ce(ce):.6f}")
print(f"LCE 1.5 -> CE {ce_from_lce(1.5):.10f}")
print()

# A deterministic synthetic dataset, saved and reloaded through JSONL.
dataset = synthetic_dataset(30, seed=7)
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "formulations.jsonl"
    save_dataset(dataset, path)
    print("one JSONL record:")
    print(" ", json.dumps(json.loads(path.read_text().splitlines()[0]))[:100], "...")
    reloaded = load_dataset(path)
print(f"saved and reloaded {len(reloaded)} formulations")
print()

# Cleaning drops formulations that repeat an earlier component multiset
# after ratio normalization (1:1 and 2:2 are the same mixture).
cleaned, report = clean_dataset(reloaded)
print(f"clean_dataset kept {len(cleaned)}, removed {len(report.removed)}")

# The split is a seeded Fisher-Yates shuffle, reproducible from the seed.
train, test = split_dataset(cleaned, train_fraction=0.7, seed=42)
print(f"7:3 split -> {len(train)} train / {len(test)} test")
again, _ = split_dataset(cleaned, train_fraction=0.7, seed=42)
print("same seed, same membership:", [f.id for f in again] == [f.id for f in train])
print()

# Distribution summary of LCE per component count (box-plot data).
print("component_count  min    median  max    outliers")
for count, stats in boxplot_stats(cleaned).items():
    print(
        f"{count:>15}  {stats.minimum:<6.3f} {stats.median:<7.3f} "
        f"{stats.maximum:<6.3f} {len(stats.outliers)}"
    )
