"""Completely positive maps in Kraus form.

A map ``phi(M) = sum_i B^i M B^i^dagger`` is stored as a :class:`CPMap` holding
the Kraus stack ``kraus`` of shape ``(d, D, D)``. Kraus lists are kept exactly
as given; nothing here prunes or re-orthogonalizes them, and every predicate
only looks at channel-level data (superoperator, Choi matrix, images), so the
answers do not depend on which Kraus representation was chosen.

Vectorization is column-major throughout::

    vec(M) = M.reshape(-1, order="F")      vec(A M B) = (B^T kron A) vec(M)

so the superoperator of ``phi`` is ``sum_i conj(B^i) kron B^i`` and the
superoperator of the adjoint map is its conjugate transpose.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .matcore import (
    DimensionError,
    PSDClass,
    classify_eigenvalues,
    classify_psd,
    hermitian_part,
    psd_thresholds,
)

DEFAULT_PROBES = 64


class StrictCertificate(enum.Enum):
    CERTIFIED_STRICT = "CERTIFIED_STRICT"
    CERTIFIED_NOT_STRICT = "CERTIFIED_NOT_STRICT"
    UNDECIDED = "UNDECIDED"


@dataclass(frozen=True, eq=False)
class CPMap:
    """Completely positive map on ``D x D`` matrices given by Kraus operators."""

    kraus: np.ndarray

    def __post_init__(self):
        K = np.array(self.kraus, dtype=complex)
        if K.ndim == 2:
            K = K[None]
        if K.ndim != 3 or K.shape[0] < 1 or K.shape[1] != K.shape[2]:
            raise DimensionError(f"Kraus stack must have shape (d, D, D), got {K.shape}")
        K.setflags(write=False)
        object.__setattr__(self, "kraus", K)

    @property
    def dim(self) -> int:
        return self.kraus.shape[1]

    @property
    def rank(self) -> int:
        """Number of Kraus operators ``d`` (not minimal in general)."""
        return self.kraus.shape[0]

    def __call__(self, M) -> np.ndarray:
        return apply(self, M)

    def __repr__(self):
        return f"CPMap(D={self.dim}, d={self.rank})"


def vec(M) -> np.ndarray:
    return np.asarray(M).reshape(-1, order="F")


def unvec(v, D: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    D = int(round(np.sqrt(v.size))) if D is None else D
    return v.reshape((D, D), order="F")


def _check_dim(phi: CPMap, M: np.ndarray):
    if M.shape != (phi.dim, phi.dim):
        raise DimensionError(f"map acts on {phi.dim}x{phi.dim} matrices, got {M.shape}")


def apply(phi: CPMap, M) -> np.ndarray:
    """``sum_i B^i M B^i^dagger``."""
    M = np.asarray(M, dtype=complex)
    _check_dim(phi, M)
    K = phi.kraus
    return np.einsum("iab,bc,idc->ad", K, M, K.conj())


def adjoint(phi: CPMap) -> CPMap:
    """Hilbert-Schmidt adjoint, Kraus list ``{B^i^dagger}``."""
    return CPMap(np.conj(np.swapaxes(phi.kraus, 1, 2)))


def compose(phi2: CPMap, phi1: CPMap) -> CPMap:
    """``phi2 o phi1`` with Kraus list ``{B2^j B1^i}`` (length ``d1 * d2``)."""
    if phi1.dim != phi2.dim:
        raise DimensionError(f"cannot compose D={phi2.dim} with D={phi1.dim}")
    K = np.einsum("jab,ibc->jiac", phi2.kraus, phi1.kraus)
    return CPMap(K.reshape(-1, phi1.dim, phi1.dim))


def is_trace_preserving(phi: CPMap, tol: float = 1e-10) -> bool:
    """Operator-norm test of ``sum_i B^i^dagger B^i = I``."""
    K = phi.kraus
    gram = np.einsum("iba,ibc->ac", K.conj(), K)
    return float(np.linalg.norm(gram - np.eye(phi.dim), 2)) <= tol


def superop_matrix(phi: CPMap) -> np.ndarray:
    """``D^2 x D^2`` matrix ``S`` with ``S vec(M) = vec(phi(M))`` (column-major vec)."""
    K = phi.kraus
    D = phi.dim
    return np.einsum("iab,icd->iacbd", K.conj(), K).sum(axis=0).reshape(D * D, D * D)


def superop_dim(S: np.ndarray) -> int:
    D = int(round(np.sqrt(S.shape[0])))
    if S.shape != (D * D, D * D):
        raise DimensionError(f"superoperator must be D^2 x D^2, got {S.shape}")
    return D


def as_superop(phi) -> np.ndarray:
    """Superoperator of a :class:`CPMap`, or the argument itself if already a matrix."""
    if isinstance(phi, CPMap):
        return superop_matrix(phi)
    S = np.asarray(phi, dtype=complex)
    superop_dim(S)
    return S


def superop_apply(S: np.ndarray, M) -> np.ndarray:
    """Apply a superoperator to one matrix or a stack of matrices ``(..., D, D)``."""
    M = np.asarray(M, dtype=complex)
    D = M.shape[-1]
    flat = np.swapaxes(M, -1, -2).reshape(M.shape[:-2] + (D * D,))
    out = flat @ S.T
    return np.swapaxes(out.reshape(M.shape[:-2] + (D, D)), -1, -2)


def superop_adjoint(S: np.ndarray) -> np.ndarray:
    return S.conj().T


def superop_trace(S: np.ndarray) -> complex:
    """Trace of the linear map, ``Tr[phi] = sum_{ab} tr[e_b e_a^T phi(e_a e_b^T)]``."""
    return complex(np.trace(S))


def choi_from_superop(S: np.ndarray) -> np.ndarray:
    """``C = sum_{ab} e_a e_b^T kron phi(e_a e_b^T)``."""
    D = superop_dim(S)
    # S[(c,d),(a,b)] with column-major pairs: row index = c + D*d, col index = a + D*b
    T = S.reshape(D, D, D, D)  # [d, c, b, a]
    C = np.transpose(T, (3, 1, 2, 0)).reshape(D * D, D * D)  # [(a,c),(b,d)]
    return hermitian_part(C)


def choi_matrix(phi) -> np.ndarray:
    """Choi matrix of a CP map (PSD for every CP map)."""
    return choi_from_superop(as_superop(phi))


def kraus_from_superop(S: np.ndarray, zero_tol: float = 1e-12) -> CPMap:
    """Canonical Kraus list from the Choi eigendecomposition (at most ``D^2`` terms)."""
    D = superop_dim(S)
    evals, vecs = np.linalg.eigh(choi_from_superop(S))
    keep = evals > zero_tol * max(evals.max(), 0.0)
    if not keep.any():
        return CPMap(np.zeros((1, D, D), dtype=complex))
    K = [np.sqrt(lam) * v.reshape(D, D).T for lam, v in zip(evals[keep], vecs[:, keep].T)]
    return CPMap(np.array(K))


def _probe_vectors(D: int, n_probes: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n_probes, D)) + 1j * rng.standard_normal((n_probes, D))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    return np.concatenate([np.eye(D, dtype=complex), G])


def strict_positivity_certificate(
    phi, n_probes: int = DEFAULT_PROBES, seed: int = 0
) -> StrictCertificate:
    """Three-way certificate for strict positivity.

    A positive definite Choi matrix is sufficient for strict positivity. A probe
    vector ``x`` whose image ``phi(x x^dagger)`` is singular is a witness against
    it. Neither outcome gives ``UNDECIDED``. Accepts a :class:`CPMap` or a
    superoperator matrix.
    """
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    S = as_superop(phi)
    D = superop_dim(S)
    if classify_psd(choi_from_superop(S)) is PSDClass.PD:
        return StrictCertificate.CERTIFIED_STRICT
    X = _probe_vectors(D, n_probes, seed)
    images = superop_apply(S, np.einsum("ka,kb->kab", X, X.conj()))
    evals = np.linalg.eigvalsh(0.5 * (images + np.swapaxes(images, -1, -2).conj()))
    for ev in evals:
        eps_psd, _ = psd_thresholds(ev)
        if ev.min() <= eps_psd:
            return StrictCertificate.CERTIFIED_NOT_STRICT
    return StrictCertificate.UNDECIDED


def kernel_condition_check(phi, n_probes: int = DEFAULT_PROBES) -> bool:
    """No nonzero PSD matrix in the kernel of ``phi`` or of its adjoint.

    For a positive map this holds exactly when both ``phi(I)`` and
    ``phi^*(I)`` are positive definite: a kernel vector ``v`` of ``phi(I)`` gives
    ``phi^*(v v^dagger) = 0`` and vice versa. ``n_probes`` is accepted for
    interface symmetry with the strict-positivity certificate; the test is exact.
    """
    S = as_superop(phi)
    D = superop_dim(S)
    I = np.eye(D)
    for T in (S, superop_adjoint(S)):
        img = hermitian_part(superop_apply(T, I))
        if classify_eigenvalues(np.linalg.eigvalsh(img)) is not PSDClass.PD:
            return False
    return True


def hennion_embed(A) -> CPMap:
    """Embed a nonnegative matrix as the diagonal CP map ``M -> diag(A diag(M))``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got {A.shape}")
    if (A < 0).any():
        raise ValueError("Hennion embedding needs a nonnegative matrix")
    D = A.shape[0]
    K = np.zeros((D * D, D, D), dtype=complex)
    for a in range(D):
        for b in range(D):
            K[a * D + b, a, b] = np.sqrt(A[a, b])
    return CPMap(K)


# -- standard maps ---------------------------------------------------------


def identity_map(D: int) -> CPMap:
    return CPMap(np.eye(D, dtype=complex)[None])


def unitary_map(U) -> CPMap:
    return CPMap(np.asarray(U, dtype=complex)[None])


def depolarizing_map(D: int) -> CPMap:
    """Completely depolarizing channel ``M -> tr[M] I/D`` with Kraus ``e_a e_b^T / sqrt(D)``."""
    K = np.zeros((D * D, D, D), dtype=complex)
    for a in range(D):
        for b in range(D):
            K[a * D + b, a, b] = 1.0 / np.sqrt(D)
    return CPMap(K)


def amplitude_damping(gamma: float) -> CPMap:
    K0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    K1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return CPMap(np.array([K0, K1]))


def polar_isometry(K: np.ndarray) -> np.ndarray:
    """Closest isometry to the stacked Kraus block, returned in the same shape.

    Stacks ``(d, D, D)`` into a ``(dD) x D`` matrix ``V`` and replaces it with
    ``V (V^dagger V)^{-1/2}``, which makes ``sum_i B^i^dagger B^i = I`` exact.
    """
    d, D, _ = K.shape
    V = K.reshape(d * D, D)
    U, _, Wh = np.linalg.svd(V, full_matrices=False)
    return (U @ Wh).reshape(d, D, D)


def random_channel(D: int, d: int, rng: np.random.Generator) -> CPMap:
    """Haar-style random channel from a QR-orthonormalized Gaussian ``(dD) x D`` block."""
    G = rng.standard_normal((d * D, D)) + 1j * rng.standard_normal((d * D, D))
    Q, R = np.linalg.qr(G)
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))
    return CPMap(Q.reshape(d, D, D))


def random_cp_map(D: int, d: int, rng: np.random.Generator) -> CPMap:
    """Random Gaussian Kraus operators (not trace preserving)."""
    G = rng.standard_normal((d, D, D)) + 1j * rng.standard_normal((d, D, D))
    return CPMap(G / np.sqrt(d * D))


# -- Kraus tensor file format ----------------------------------------------


def kraus_to_json(phi: CPMap) -> dict:
    """``{"dim": D, "kraus": [[[re, im], ...], ...]}`` with row-major entry lists."""
    return {
        "dim": phi.dim,
        "kraus": [
            [[float(z.real), float(z.imag)] for z in B.reshape(-1)] for B in phi.kraus
        ],
    }


def kraus_from_json(obj: dict) -> CPMap:
    D = int(obj["dim"])
    mats = []
    for entries in obj["kraus"]:
        if len(entries) != D * D:
            raise DimensionError(f"Kraus matrix needs {D * D} entries, got {len(entries)}")
        arr = np.array([complex(re, im) for re, im in entries], dtype=complex)
        mats.append(arr.reshape(D, D))
    return CPMap(np.array(mats))


def save_kraus(phi: CPMap, path) -> None:
    Path(path).write_text(json.dumps(kraus_to_json(phi)))


def load_kraus(path) -> CPMap:
    return kraus_from_json(json.loads(Path(path).read_text()))
