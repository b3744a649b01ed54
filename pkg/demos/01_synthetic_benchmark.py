"""
The synthetic benchmark
=======================

A quadratic-indicator simulator on a 30 x 30 grid, run over a 10 x 10 lattice
of two parameters. The observation is the run at a known parameter setting,
pushed to the logit scale, perturbed by a short-range Gaussian process and
dichotomized again.
"""

import numpy as np

from binarycal import synthetic as syn

cfg = syn.SyntheticConfig(seed=0)
ens = syn.synth_ensemble(cfg)
print("ensemble:", ens.p, "runs x", ens.n, "cells")

# the truth lies on the lattice, so the ensemble contains the true run
print("truth (native):", cfg.truth, " (unit cube):", np.round(cfg.truth_unit(), 4))

# the region of ones shrinks as theta_1 grows and grows with theta_2
ones = ens.values.sum(axis=1).reshape(cfg.lattice)
print("cells equal to 1, corners of the lattice:")
print("  theta=(0.30, 0.0):", ones[0, 0], "  theta=(0.30, 0.2):", ones[0, -1])
print("  theta=(0.65, 0.0):", ones[-1, 0], "  theta=(0.65, 0.2):", ones[-1, -1])

# contamination: about one cell in ten flips
obs, noise = syn.make_observation(cfg)
truth = syn.synth_output(cfg.truth, cfg.grid).values
flipped = obs.values != truth
print(f"flipped cells: {flipped.mean():.1%}")

# a picture of the observation, '#' for 1 and '.' for 0, flips marked 'x'
rows = np.where(flipped, 2, obs.values).reshape(cfg.grid_shape)
for row in rows[::-1]:
    print("".join(".#x"[v] for v in row))
