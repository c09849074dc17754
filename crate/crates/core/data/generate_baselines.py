"""Regenerates the synthetic baseline tables shipped with the simulation module.

The tables mimic the shape of a 24-cluster dengue surveillance dataset:
test-positive counts over a three-year window, test-negative counts (febrile illness visits,
far more numerous than test-positives) over a two-year window, cluster population in 10,000s, and biannual test-positive
counts over nine periods for the stepped-wedge design. They are not real
surveillance data.

    python3 generate_baselines.py
"""

import csv

import numpy as np

M = 24
PERIODS = 9

rng = np.random.default_rng(20211)

population = np.round(np.exp(rng.uniform(np.log(0.9), np.log(2.0), M)), 2)
positive_rate = rng.normal(0.0, 0.3, M)
negative_rate = rng.normal(0.0, 0.3, M)
positives = np.maximum(np.round(population * 45.0 * np.exp(positive_rate)), 8).astype(int)
negatives = np.maximum(np.round(population * 2500.0 * np.exp(negative_rate)), 8).astype(int)

ids = [f"C{i + 1:02d}" for i in range(M)]

with open("baseline_parallel.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["cluster_id", "y_count", "z_count", "population"])
    for i in range(M):
        w.writerow([ids[i], positives[i], negatives[i], f"{population[i]:.2f}"])

# persistent cluster level, city-wide epidemic cycle, cluster-by-period noise
cluster_level = positive_rate + np.log(population)
epidemic = np.log([0.9, 1.3, 0.7, 1.0, 1.6, 0.8, 1.1, 1.4, 1.0])
with open("baseline_sw.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["cluster_id", "period", "y_count"])
    for i in range(M):
        for t in range(PERIODS):
            mu = 22.0 * np.exp(cluster_level[i] + epidemic[t] + rng.normal(0.0, 0.3))
            w.writerow([ids[i], t + 1, max(int(round(mu)), 8)])
