"""
Contraction of positive maps
============================

A strictly positive map pulls every pair of states closer in ``d`` by at
least a factor ``c(phi) < 1``. Maps that are not strictly positive can have
``c = 1``.
"""
import numpy as np

from ergodic_channels import compose, contraction_estimate, strict_positivity_certificate
from ergodic_channels.cpmaps import adjoint, depolarizing_map, random_cp_map, unitary_map

rng = np.random.default_rng(3)
phi = random_cp_map(2, 4, rng)
psi = random_cp_map(2, 4, rng)
print("certificate:", strict_positivity_certificate(phi).name)

c_phi = contraction_estimate(phi).c_lower
c_psi = contraction_estimate(psi).c_lower
c_both = contraction_estimate(compose(phi, psi)).c_lower
print(f"c(phi) = {c_phi:.5f}, c(psi) = {c_psi:.5f}")
print(f"c(phi o psi) = {c_both:.5f} <= product {c_phi * c_psi:.5f}")

# the adjoint contracts at exactly the same rate
print(f"c(phi*) = {contraction_estimate(adjoint(phi)).c_lower:.5f}")

# unitary conjugation is an isometry, the depolarizing map collapses everything
U = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
print("unitary:", contraction_estimate(unitary_map(U)).c_lower)
print("depolarizing:", contraction_estimate(depolarizing_map(2)).c_lower)
