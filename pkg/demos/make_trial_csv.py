"""
A synthetic dose-finding trial as CSV
=====================================

Writes ``trial.csv`` with a control arm, three doses and five baseline
covariates, ready for ``rankcal analyze``.
"""

import csv
import sys

import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else "trial.csv"
rng = np.random.default_rng(2024)
n = 800
labels = np.array(["placebo", "low", "mid", "high"])
arm = labels[rng.integers(0, 4, n)]
x = rng.multivariate_normal(np.zeros(5), 0.3 + 0.7 * np.eye(5), n)
shift = {"placebo": 0.0, "low": -0.05, "mid": -0.15, "high": -0.25}
y = np.array([shift[a] for a in arm]) + x @ [0.25, 0.2, 0.15, 0.1, 0.05] + rng.standard_t(5, n) * 0.5

with open(path, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["arm", "change", "age", "weight", "baseline", "duration", "score"])
    for a, v, row in zip(arm, y, x):
        w.writerow([a, f"{v:.8f}", *(f"{c:.8f}" for c in row)])
print(f"wrote {n} rows to {path}")
