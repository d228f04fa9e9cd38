"""Perturb forcing and initial datum by delta and watch the response ratio settle.

Run: python demos/stability.py
"""
from torusns import SolverConfig
from torusns.ns_solver import random_problem, stability_experiment

cfg = SolverConfig(mu=0.5, T=0.1, M=8, res=16, n=2)
f, u0 = random_problem(cfg.grid, cfg.times, amplitude=0.5, seed=7)
result = stability_experiment(f, u0, [1e-1, 1e-2, 1e-3, 1e-4], cfg, seed=8)

print(" delta     |d solution| / |d datum|")
for row in result.rows:
    print(f" {row.delta:.0e}    {row.ratio:.6f}")
print(f" linear    {result.linear_ratio:.6f}   (from one linearised solve)")
