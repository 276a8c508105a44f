"""The sign-following walk and its limiting distribution.

Simulates the walk under a null and a positive drift, overlays the empirical
histogram of the final statistic with the closed-form density, and prints the
analytic rejection probability next to the Monte Carlo one.  Writes
``walk_density.csv`` with plot-ready columns.
"""

import csv
import math

import numpy as np

from banditab import BanditParams, RngStream, bandit_pdf, tab_rejection_probability
from banditab.dist import std_normal_quantile
from banditab.tab import walk_sums_batch

N_STEPS = 2000
N_REPS = 20_000

print("final walk statistic vs its limit law")
print("=" * 60)
rows = []
for kappa in (0.0, 2.0):
    sigma0 = math.sqrt(1.0 + kappa**2 / N_STEPS)
    params = BanditParams(kappa, sigma0)

    gen = RngStream(7).child(int(kappa)).generator()
    rewards = kappa / N_STEPS + gen.standard_normal((N_REPS, N_STEPS)) / math.sqrt(N_STEPS)
    theta1 = gen.integers(0, 2, N_REPS)
    stats = walk_sums_batch(rewards, theta1)

    z = std_normal_quantile(0.975)
    mc = float((np.abs(stats) > z).mean())
    analytic = tab_rejection_probability(params, 0.05)
    print(f"drift {kappa:+.1f}: P(|T| > z_0.975)  monte carlo {mc:.4f}   analytic {analytic:.4f}")

    # histogram vs density on a shared grid
    grid = np.linspace(-6.0, 6.0, 121)
    dens = bandit_pdf(grid, params)
    hist, edges = np.histogram(stats, bins=60, range=(-6, 6), density=True)
    centers = (edges[:-1] + edges[1:]) / 2
    for c, h in zip(centers, hist):
        rows.append([kappa, float(c), float(h), float(bandit_pdf(c, params))])

with open("walk_density.csv", "w", newline="") as fh:
    writer = csv.writer(fh)
    writer.writerow(["kappa", "y", "empirical_density", "limit_density"])
    writer.writerows(rows)
print("\nwrote walk_density.csv (60 bins per drift; columns: empirical vs closed form)")
print("note how the null curve is the standard normal while the drifted one is bimodal")
