"""
Forgetting the initial state along an ergodic sequence
======================================================

Compose a window of random channels drawn by an ergodic driver. The leading
eigenmatrix of the window ending at 0 converges to a limit ``Z_0`` that does
not depend on where the window started, and the sequence ``Z_n`` is carried
along by the maps themselves.
"""
import numpy as np

from ergodic_channels import ErgodicDriver, Side, limit_sequence
from ergodic_channels.process import convergence_table, covariance_residual, log_linear_fit

driver = ErgodicDriver.iid(2, 4, seed=7)
Ns = list(range(2, 17))
rows = convergence_table(driver, Ns, proxy_factor=2)
for N, d in rows:
    print(f"N = {N:2d}   d(R_-N, Z_0) = {d:.3e}")
slope, _ = log_linear_fit(Ns, [d for _, d in rows])
print(f"log-linear slope {slope:.3f}, i.e. a factor {np.exp(slope):.3f} per step")

# Z_n = phi_n . Z_{n-1}
Z = limit_sequence(driver, Side.RIGHT)
print("max covariance residual:", max(covariance_residual(Z, n) for n in range(-10, 11)))

# other drivers: quasi-periodic rotation, Markov switching
rot = ErgodicDriver.rotation(2, 3, seed=1)
print("rotation driver Z_0 =\n", np.round(limit_sequence(rot, Side.RIGHT).z(0), 6))
