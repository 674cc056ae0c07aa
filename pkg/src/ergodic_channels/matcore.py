"""Small dense Hermitian matrix utilities.

Everything here works on plain ``numpy`` arrays of shape ``(D, D)``. The
dimension is expected to be small (``D <= 16``), so all spectral routines are
dense ``O(D^3)`` calls into LAPACK via :func:`numpy.linalg.eigh`.

PSD classification uses scale-relative thresholds::

    eps_psd = max(1e-10 * lambda_max(|M|), 1e-14)
    eps_pd  = 1e-10 * lambda_max(|M|)

so that the answer does not change when a matrix is renormalized.
"""
from __future__ import annotations

import enum

import numpy as np

TOL_HERM = 1e-12
REL_EPS = 1e-10
ABS_FLOOR = 1e-14
MAX_DIM = 16


class DimensionError(ValueError):
    pass


class SymmetryError(ValueError):
    pass


class SingularityError(ValueError):
    pass


class PSDClass(enum.Enum):
    PD = "PD"
    PSD_SINGULAR = "PSD_SINGULAR"
    INDEFINITE = "INDEFINITE"


def as_square(M) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    return M


def hermiticity_defect(M: np.ndarray) -> float:
    """Max entrywise asymmetry ``|M - M^dagger|`` relative to ``max |M_ij|``."""
    scale = np.abs(M).max()
    if scale == 0:
        return 0.0
    return float(np.abs(M - M.conj().T).max() / scale)


def is_hermitian(M, tol: float = TOL_HERM) -> bool:
    return hermiticity_defect(as_square(M)) <= tol


def check_hermitian(M, tol: float = TOL_HERM) -> np.ndarray:
    M = as_square(M)
    defect = hermiticity_defect(M)
    if defect > tol:
        raise SymmetryError(f"matrix is not Hermitian (relative defect {defect:.3e})")
    return M


def hermitian_part(M) -> np.ndarray:
    M = np.asarray(M)
    return 0.5 * (M + M.conj().T)


def eigh(M) -> tuple[np.ndarray, np.ndarray]:
    """Real eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix."""
    M = check_hermitian(M)
    return np.linalg.eigh(hermitian_part(M))


def psd_thresholds(evals: np.ndarray) -> tuple[float, float]:
    """Return ``(eps_psd, eps_pd)`` for a spectrum."""
    scale = float(np.abs(evals).max()) if evals.size else 0.0
    return max(REL_EPS * scale, ABS_FLOOR), REL_EPS * scale


def classify_eigenvalues(evals: np.ndarray) -> PSDClass:
    eps_psd, eps_pd = psd_thresholds(evals)
    lo = evals.min()
    if lo > eps_pd and lo > 0:
        return PSDClass.PD
    if lo < -eps_psd:
        return PSDClass.INDEFINITE
    return PSDClass.PSD_SINGULAR


def classify_psd(M) -> PSDClass:
    """Classify a Hermitian matrix as PD, PSD_SINGULAR or INDEFINITE."""
    evals = np.linalg.eigvalsh(hermitian_part(check_hermitian(M)))
    return classify_eigenvalues(evals)


def trace_norm(M) -> float:
    """Sum of singular values of a square matrix."""
    M = as_square(M)
    return float(np.linalg.svd(M, compute_uv=False).sum())


def hs_inner(A, B) -> complex:
    """Hilbert-Schmidt inner product ``tr[A^dagger B]``."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    return complex(np.vdot(A, B))


def sqrt_psd(M, inverse: bool = False) -> np.ndarray:
    """Matrix square root (or inverse square root) by spectral decomposition.

    Eigenvalues inside the PSD tolerance band are clipped to zero for the forward
    root. The inverse root refuses anything that is not positive definite.
    """
    evals, vecs = eigh(M)
    cls = classify_eigenvalues(evals)
    if cls is PSDClass.INDEFINITE:
        raise SymmetryError("square root of an indefinite matrix")
    if inverse:
        if cls is not PSDClass.PD:
            raise SingularityError(
                f"inverse square root of a singular matrix (lambda_min={evals.min():.3e})"
            )
        roots = 1.0 / np.sqrt(evals)
    else:
        roots = np.sqrt(np.clip(evals, 0.0, None))
    out = (vecs * roots) @ vecs.conj().T
    return hermitian_part(out)


def split_trace_norm(M) -> list[tuple[complex, np.ndarray]]:
    """Write ``M = sum_j a_j M_j`` with density matrices ``M_j``.

    Uses the positive and negative parts of the Hermitian real part
    ``(M + M^dagger)/2`` and imaginary part ``(M - M^dagger)/2i``. The returned
    coefficients carry the phase (``+1, -1, +1j, -1j``), so reconstruction is a
    plain weighted sum, and ``sum |a_j| <= 2 * trace_norm(M)``.
    """
    M = as_square(M)
    terms: list[tuple[complex, np.ndarray]] = []
    parts = ((1.0, hermitian_part(M)), (1j, (M - M.conj().T) / 2j))
    for phase, H in parts:
        evals, vecs = np.linalg.eigh(H)
        for sign in (1.0, -1.0):
            w = np.clip(sign * evals, 0.0, None)
            weight = w.sum()
            if weight == 0.0:
                continue
            rho = (vecs * (w / weight)) @ vecs.conj().T
            terms.append((phase * sign * weight, hermitian_part(rho)))
    return terms


def random_state(D: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random density matrix ``G G^dagger / tr`` with ``G`` a ``D x rank`` Ginibre matrix."""
    rank = D if rank is None else rank
    G = rng.standard_normal((D, rank)) + 1j * rng.standard_normal((D, rank))
    rho = G @ G.conj().T
    return hermitian_part(rho / np.trace(rho).real)


def random_unit_vector(D: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(D) + 1j * rng.standard_normal(D)
    return v / np.linalg.norm(v)


def check_state(X, tol: float = 1e-12) -> np.ndarray:
    """Validate membership of the state space ``{M >= 0, tr M = 1}``."""
    X = check_hermitian(X)
    tr = np.trace(X)
    if abs(tr - 1.0) > tol:
        raise ValueError(f"state must have unit trace, got {tr:.3e}")
    if classify_psd(X) is PSDClass.INDEFINITE:
        raise ValueError("state must be positive semi-definite")
    return hermitian_part(X)
