"""Projective geometry of the state space.

For density matrices ``X, Y`` the coefficient ``m(X, Y) = sup{lam : lam Y <= X}``
defines the metric::

    d(X, Y) = (1 - m(X,Y) m(Y,X)) / (1 + m(X,Y) m(Y,X))

which takes values in ``[0, 1]`` and equals 1 whenever exactly one of the two
states is singular in a direction the other is not. The projective action
``phi . M = phi(M) / tr phi(M)`` of a positive map contracts ``d`` with
coefficient ``c(phi)``; :func:`contraction_estimate` gives a lower estimate of
that supremum by sampling and local refinement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cpmaps import as_superop, superop_adjoint, superop_apply, superop_dim
from .matcore import (
    PSDClass,
    check_state,
    classify_eigenvalues,
    hermitian_part,
    psd_thresholds,
)


class DegenerateMapError(ValueError):
    pass


@dataclass(frozen=True)
class ProjMetricValue:
    m_xy: float
    m_yx: float

    @property
    def d0(self) -> float:
        if self.m_xy <= 0.0 or self.m_yx <= 0.0:
            return math.inf
        return -math.log(self.m_xy) - math.log(self.m_yx)

    @property
    def d(self) -> float:
        p = self.m_xy * self.m_yx
        return (1.0 - p) / (1.0 + p)


@dataclass(frozen=True)
class ContractionEstimate:
    c_lower: float
    n_pairs: int
    includes_boundary: bool


def _range_basis(X: np.ndarray):
    evals, vecs = np.linalg.eigh(X)
    eps_psd, _ = psd_thresholds(evals)
    kernel = evals <= eps_psd
    return evals, vecs, kernel


def _m_unchecked(X: np.ndarray, Y: np.ndarray) -> float:
    yvals, yvecs = np.linalg.eigh(Y)
    if classify_eigenvalues(yvals) is PSDClass.PD:
        if classify_eigenvalues(np.linalg.eigvalsh(X)) is not PSDClass.PD:
            # Y is positive on ker X, so no lam > 0 works
            return 0.0
        w = yvecs / np.sqrt(yvals)
        lam = np.linalg.eigvalsh(hermitian_part(w.conj().T @ X @ w))[0]
        return float(min(max(lam, 0.0), 1.0))
    xvals, xvecs, kernel = _range_basis(X)
    if kernel.any():
        K = xvecs[:, kernel]
        scale = max(np.abs(yvals).max(), 1e-300)
        if np.linalg.norm(Y @ K, 2) > 1e-9 * scale:
            return 0.0
    # Y is reduced by ker X (+) ran X; compare on ran X where X is invertible
    R = xvecs[:, ~kernel] / np.sqrt(xvals[~kernel])
    top = np.linalg.eigvalsh(hermitian_part(R.conj().T @ Y @ R))[-1]
    if top <= 0.0:
        return 1.0
    return float(min(1.0 / top, 1.0))


def m_coeff(X, Y) -> float:
    """Largest ``lam >= 0`` with ``X - lam Y`` positive semi-definite."""
    return _m_unchecked(check_state(X), check_state(Y))


def pmetric(X, Y) -> ProjMetricValue:
    X = check_state(X)
    Y = check_state(Y)
    return ProjMetricValue(_m_unchecked(X, Y), _m_unchecked(Y, X))


def d_metric(X, Y) -> float:
    return pmetric(X, Y).d


def _psd_at(X, Y, t, tol):
    M = t * X + (1.0 - t) * Y
    return np.linalg.eigvalsh(hermitian_part(M))[0] >= -tol


def _boundary(X, Y, direction: float, tol: float) -> float:
    # feasible set in t is an interval containing [0, 1]; walk outward then bisect
    inside = 1.0 if direction > 0 else 0.0
    step = 1.0
    outside = inside + direction * step
    while _psd_at(X, Y, outside, tol):
        inside = outside
        step *= 2.0
        outside = inside + direction * step
        if step > 1e16:
            return math.inf * direction
    for _ in range(200):
        mid = 0.5 * (inside + outside)
        if mid == inside or mid == outside:
            break
        if _psd_at(X, Y, mid, tol):
            inside = mid
        else:
            outside = mid
    return inside


def segment_endpoints(X, Y, tol: float = 1e-13) -> tuple[float, float]:
    """``(t_minus, t_plus)``: extent of ``{t : tX + (1-t)Y >= 0}``."""
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    t_plus = _boundary(X, Y, +1.0, tol)
    if not _psd_at(X, Y, 0.0, tol):
        t_minus = 0.0
    else:
        t_minus = _boundary(X, Y, -1.0, tol)
    return t_minus, t_plus


def pmetric_endpoint_oracle(X, Y, tol: float = 1e-13) -> float:
    """``d`` from the endpoints of the chord of the state space through ``X`` and ``Y``.

    Independent of :func:`m_coeff`: only uses the minimum eigenvalue along the
    line ``tX + (1-t)Y``, located by doubling and bisection.
    """
    X = check_state(X)
    Y = check_state(Y)
    if np.abs(X - Y).max() == 0.0:
        return 0.0
    tm, tp = segment_endpoints(X, Y, tol)
    return (tp - tm) / (tm + tp - 2.0 * tm * tp)


def proj_apply(phi, M) -> np.ndarray:
    """Projective action ``phi(M) / tr phi(M)``."""
    S = as_superop(phi)
    out = superop_apply(S, np.asarray(M, dtype=complex))
    tr = np.trace(out).real
    if not tr > 1e-300:
        raise DegenerateMapError(f"tr phi(M) = {tr:.3e}; map annihilates a state")
    return hermitian_part(out / tr)


# -- contraction coefficient -----------------------------------------------
#
# With f(x, z) = <z| phi(x x^dagger) |z>, the product m m' of two images is
#     min_{z, z'} f(x,z) f(y,z') / (f(y,z) f(x,z')),
# so c(phi) = (1 - r) / (1 + r) with r the minimum of that expression over all
# four unit vectors. For fixed (x, y) the optimal (z, z') are the extreme
# generalized eigenvectors of the pencil (phi(xx^+), phi(yy^+)); for fixed
# (z, z') the optimal (x, y) are those of (phi^*(zz^+), phi^*(z'z'^+)). The
# estimator alternates these exact half-steps from many random starts.

CHUNK = 64


def _outer(x: np.ndarray) -> np.ndarray:
    return np.einsum("ka,kb->kab", x, x.conj())


def _pencil(P: np.ndarray, Q: np.ndarray):
    """Extreme eigenpairs of ``P v = lam Q v`` for stacks with ``Q`` positive definite."""
    L = np.linalg.cholesky(Q)
    Linv = np.linalg.inv(L)
    LinvH = np.swapaxes(Linv, -1, -2).conj()
    C = Linv @ P @ LinvH
    ev, U = np.linalg.eigh(0.5 * (C + np.swapaxes(C, -1, -2).conj()))
    V = LinvH @ U
    V /= np.linalg.norm(V, axis=-2, keepdims=True)
    return ev[:, 0] / ev[:, -1], V[:, :, 0], V[:, :, -1]


def _ratio_generic(P: np.ndarray, Q: np.ndarray) -> float:
    trp, trq = np.trace(P).real, np.trace(Q).real
    if trp <= 0 or trq <= 0:
        raise DegenerateMapError("map annihilates a pure state")
    P = hermitian_part(P / trp)
    Q = hermitian_part(Q / trq)
    return _m_unchecked(P, Q) * _m_unchecked(Q, P)


def _chunk_ratios(S: np.ndarray, D: int, seed: int, chunk: int, n_iter: int) -> np.ndarray:
    rng = np.random.default_rng([seed, chunk])
    shape = (CHUNK, D)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    y = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    Sa = superop_adjoint(S)
    P, Q = superop_apply(S, _outer(x)), superop_apply(S, _outer(y))
    try:
        best, z, zp = _pencil(P, Q)
        for _ in range(n_iter):
            r, x, y = _pencil(superop_apply(Sa, _outer(z)), superop_apply(Sa, _outer(zp)))
            best = np.minimum(best, r)
            r, z, zp = _pencil(superop_apply(S, _outer(x)), superop_apply(S, _outer(y)))
            best = np.minimum(best, r)
    except np.linalg.LinAlgError:
        # singular images: the map is not strictly positive, score the raw starts
        best = np.array([_ratio_generic(P[k], Q[k]) for k in range(CHUNK)])
    return np.clip(best, 0.0, 1.0)


def contraction_pairs(phi, n_pairs: int = 256, seed: int = 0, n_iter: int = 30) -> np.ndarray:
    """Per-start values of ``d(phi . X, phi . Y)`` after alternating refinement.

    Start ``k`` depends only on ``(seed, k)``, so the running maximum is
    nondecreasing in ``n_pairs``.
    """
    S = as_superop(phi)
    D = superop_dim(S)
    r = np.concatenate(
        [_chunk_ratios(S, D, seed, c, n_iter) for c in range(-(-n_pairs // CHUNK))]
    )[:n_pairs]
    return (1.0 - r) / (1.0 + r)


def contraction_estimate(
    phi, n_pairs: int = 128, seed: int = 0, n_iter: int = 30, extra_pairs=()
) -> ContractionEstimate:
    """Lower estimate of ``c(phi) = sup d(phi . X, phi . Y)``.

    The supremum is attained on pairs of pure states, which is where the
    alternating search lives. The interior/boundary pair ``(I/D, e_1 e_1^T)``,
    a singular-image witness when the map is not strictly positive, and any
    caller-supplied ``extra_pairs`` of states are always included.
    """
    S = as_superop(phi)
    D = superop_dim(S)
    c = float(contraction_pairs(S, n_pairs, seed, n_iter).max()) if n_pairs > 0 else 0.0
    e1 = np.zeros((D, D), dtype=complex)
    e1[0, 0] = 1.0
    pairs = [(np.eye(D) / D, e1), *extra_pairs]
    witness = singular_image_witness(S, seed=seed)
    if witness is not None:
        pairs.append((np.eye(D) / D, np.outer(witness, witness.conj())))
    for X, Y in pairs:
        c = max(c, d_metric(proj_apply(S, X), proj_apply(S, Y)))
    return ContractionEstimate(min(c, 1.0), n_pairs, True)


def contraction_estimate_adjoint(phi, **kwargs) -> ContractionEstimate:
    return contraction_estimate(superop_adjoint(as_superop(phi)), **kwargs)


def singular_image_witness(phi, n_probes: int = 64, seed: int = 0):
    """A unit vector whose image ``phi(x x^dagger)`` is singular, or None."""
    S = as_superop(phi)
    D = superop_dim(S)
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n_probes, D)) + 1j * rng.standard_normal((n_probes, D))
    X = np.concatenate([np.eye(D, dtype=complex), G / np.linalg.norm(G, axis=1, keepdims=True)])
    images = superop_apply(S, _outer(X))
    evals = np.linalg.eigvalsh(0.5 * (images + np.swapaxes(images, -1, -2).conj()))
    for x, ev in zip(X, evals):
        if ev[0] <= psd_thresholds(ev)[0]:
            return x
    return None
