"""
Long products are nearly rank one
=================================

After normalization, ``phi_n o ... o phi_m`` approaches the rank-one map
``M -> tr[Z'_m M] Z_n``. The error decays exponentially in ``n - m`` at a rate
bounded by the average log contraction of the maps.
"""
import math

from ergodic_channels import ErgodicDriver, kappa_estimate
from ergodic_channels.process import log_linear_fit, rank_one_table

driver = ErgodicDriver.iid(2, 4, seed=7)
gaps = list(range(2, 15))
rows = rank_one_table(driver, 0, gaps)
print(" n-m   sampled     2x split    sqrt(D)|.|_2")
for g, err, split, hs in rows:
    print(f"{g:4d}   {err:.3e}   {split:.3e}   {hs:.3e}")

slope, _ = log_linear_fit(gaps, [r[1] for r in rows])
kappa = kappa_estimate(driver, 10, 16)
print(f"observed rate  mu_hat    = {math.exp(slope):.4f}")
print(f"contraction    kappa_hat = {kappa.kappa_hat:.4f}")
for N, mean, per_n, _ in kappa.table:
    print(f"  N = {N:2d}  E[ln c_N]/N = {per_n:.4f}")
