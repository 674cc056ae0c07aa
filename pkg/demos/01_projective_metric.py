"""
The projective metric on density matrices
=========================================

``m(X, Y)`` is the largest ``lam`` with ``X - lam Y >= 0``; the metric ``d``
is built from the two coefficients and never exceeds 1.
"""
import numpy as np

from ergodic_channels import d_metric, m_coeff, pmetric, pmetric_endpoint_oracle
from ergodic_channels.matcore import random_state, trace_norm

X = np.diag([0.5, 0.5])
Y = np.diag([0.75, 0.25])
v = pmetric(X, Y)
print("m(X,Y) =", v.m_xy, " m(Y,X) =", v.m_yx, " d =", v.d)

# the chord through X and Y meets the boundary of the state space at two
# points; d can also be read off from where they sit
print("endpoint oracle:", pmetric_endpoint_oracle(X, Y))

# a pure state is infinitely far (d = 1) from anything with wider support
E1 = np.diag([1.0, 0.0])
print("d(I/2, e1) =", d_metric(np.eye(2) / 2, E1), " m(e1, I/2) =", m_coeff(E1, np.eye(2) / 2))

# d dominates half the trace distance
rng = np.random.default_rng(0)
for D in (2, 3, 4):
    A, B = random_state(D, rng), random_state(D, rng)
    print(f"D={D}: d = {d_metric(A, B):.4f} >= tr|A-B|/2 = {0.5 * trace_norm(A - B):.4f}")
