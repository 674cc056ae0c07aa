"""
Exponential clustering
======================

Connected two-point functions in the infinite chain decay exponentially with
the separation of the two observables.
"""
import numpy as np

from ergodic_channels import ErgodicDriver, LocalObservable, Side, correlation, gauge_fix, limit_sequence
from ergodic_channels.process import kappa_estimate, log_linear_fit

driver = ErgodicDriver.iid(2, 2, seed=7, trace_preserving=False)
Z = limit_sequence(driver, Side.RIGHT)
Zp = limit_sequence(driver, Side.LEFT)
gauge = gauge_fix(driver, Zp, 0, 13, Z)

Zop = np.diag([1.0, -1.0])
O1 = LocalObservable((0, 0), Zop)
seps = range(1, 13)
conn = []
for s in seps:
    w12, w1, w2, c = correlation(gauge, O1, LocalObservable((s, s), Zop))
    conn.append(abs(c))
    print(f"s = {s:2d}   <Z_0 Z_s> - <Z_0><Z_s> = {c:+.3e}")

slope, _ = log_linear_fit(list(seps), conn)
print(f"fitted decay per site {np.exp(slope):.3f}")
print(f"kappa_hat of the driver {kappa_estimate(driver, 8, 8).kappa_hat:.3f}")
