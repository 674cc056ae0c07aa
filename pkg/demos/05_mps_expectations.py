"""
Matrix product states built from a channel sequence
===================================================

The Kraus operators of the driver become the site tensors of a periodic
matrix product state. Local expectations computed through transfer maps
agree with the dense state vector, and the infinite-chain value follows from
the gauge-fixed tilde channels.
"""
import numpy as np

from ergodic_channels import ErgodicDriver, LocalObservable, MpsChain, Side, gauge_fix, limit_sequence
from ergodic_channels.mps import brute_force_expectation, finite_expectation, thermo_expectation, tilde_trace_defect

driver = ErgodicDriver.iid(2, 2, seed=21, trace_preserving=False)
ZZ = np.diag([1.0, -1.0, -1.0, 1.0])
O = LocalObservable((0, 1), ZZ)

# finite rings around the support
for N in (2, 4, 6):
    chain = MpsChain.from_driver(driver, -N, 1 + N)
    print(f"{chain.n_sites:2d} sites: transfer maps {finite_expectation(chain, O):+.10f}"
          f"   dense vector {brute_force_expectation(chain, O):+.10f}")

Z = limit_sequence(driver, Side.RIGHT)
Zp = limit_sequence(driver, Side.LEFT)
gauge = gauge_fix(driver, Zp, 0, 1, Z)
W = thermo_expectation(gauge, O)
print(f"infinite chain: {W:+.10f}")
long = MpsChain.from_driver(driver, -150, 150)
print(f"301-site ring:  {finite_expectation(long, O):+.10f}")
print("tilde channel trace defect:", tilde_trace_defect(gauge))
