import numpy as np

from ergodic_channels.matcore import random_state


def rand_matrix(D, rng):
    return rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))


def rand_herm(D, rng):
    G = rand_matrix(D, rng)
    return 0.5 * (G + G.conj().T)


def rand_pure(D, rng):
    return random_state(D, rng, rank=1)


def rand_unitary(D, rng):
    Q, R = np.linalg.qr(rand_matrix(D, rng))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def maxabs(A):
    return float(np.abs(np.asarray(A)).max())
