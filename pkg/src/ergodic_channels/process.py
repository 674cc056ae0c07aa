"""Long compositions, Perron data and the limiting state sequences.

Windows ``Psi_{n,m} = phi_n o ... o phi_m`` are carried as a normalized
superoperator together with the accumulated natural log of the normalizers;
raw products under- or overflow after a few dozen steps.

Tables produced here (all plain lists of tuples, written as CSV by the CLI):

``convergence_table``  columns ``N, d_RN_Z0``: distance of the Perron
    eigenmatrix of ``phi_0 o ... o phi_{-N}`` from the limit state ``Z_0``.
``kappa_estimate``     columns ``N, mean_ln_c, mean_ln_c_over_N, n_windows``.
``rank_one_table``     columns ``gap, error, split_bound, hs_bound``: induced
    trace-norm distance between the normalized window and the rank-one map
    ``M -> tr[Z'_m M] Z_n``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cpmaps import (
    StrictCertificate,
    strict_positivity_certificate,
    superop_adjoint,
    superop_apply,
    superop_dim,
    unvec,
    vec,
)
from .ergodic import ErgodicDriver
from .matcore import hermitian_part, split_trace_norm, trace_norm
from .pmetric import DegenerateMapError, contraction_estimate, d_metric, proj_apply

INFINITE = math.inf
C_FLOOR = 1e-13


class Side(enum.Enum):
    RIGHT = "RIGHT"
    LEFT = "LEFT"


class SpectralGapError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, gap: float):
        super().__init__(msg)
        self.gap = gap


class AssumptionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CompositionResult:
    superop: np.ndarray
    log_scale: float
    m: int
    n: int

    @property
    def dim(self) -> int:
        return superop_dim(self.superop)

    def full(self) -> np.ndarray:
        """Unnormalized superoperator; overflows for long windows."""
        return self.superop * math.exp(self.log_scale)

    def then(self, later: "CompositionResult") -> "CompositionResult":
        """``later o self`` for adjacent windows."""
        if later.m != self.n + 1:
            raise ValueError("windows are not adjacent")
        S = later.superop @ self.superop
        s = np.linalg.norm(S, "nuc")
        return CompositionResult(S / s, self.log_scale + later.log_scale + math.log(s), self.m, later.n)


@dataclass(frozen=True)
class EigenPair:
    eigmatrix: np.ndarray
    log_eigvalue: float
    side: Side


@dataclass(frozen=True)
class RankOneApprox:
    left: np.ndarray
    right: np.ndarray

    def __call__(self, M) -> np.ndarray:
        return np.trace(self.left @ M) * self.right

    def superop(self) -> np.ndarray:
        return np.outer(vec(self.right), vec(self.left).conj())


@dataclass(frozen=True)
class RankOneError:
    error: float
    split_bound: float
    hs_bound: float


def compose_window(driver: ErgodicDriver, m: int, n: int) -> CompositionResult:
    """``phi_n o ... o phi_m`` renormalized by its trace norm after every step."""
    if m > n:
        raise ValueError(f"empty window [{m}, {n}]")
    S = None
    log_scale = 0.0
    for k in range(m, n + 1):
        step = driver.superop_at(k)
        S = step if S is None else step @ S
        s = np.linalg.norm(S, "nuc")
        if not s > 0:
            raise DegenerateMapError(f"composition vanishes at step {k}")
        S = S / s
        log_scale += math.log(s)
    return CompositionResult(S, log_scale, m, n)


def perron_pair(Phi: CompositionResult, side: Side = Side.RIGHT, gap_tol: float = 1e-9) -> EigenPair:
    """Leading eigenmatrix of the window (or of its adjoint), trace-normalized."""
    S = Phi.superop
    D = superop_dim(S)
    if strict_positivity_certificate(S) is not StrictCertificate.CERTIFIED_STRICT:
        warnings.warn("window not certified strictly positive; Perron data may not be unique",
                      AssumptionWarning, stacklevel=2)
    T = S if side is Side.RIGHT else superop_adjoint(S)
    evals, evecs = np.linalg.eig(T)
    order = np.argsort(-np.abs(evals))
    lam = evals[order[0]]
    if abs(lam) == 0 or abs(lam.imag) > 1e-8 * abs(lam) or lam.real <= 0:
        raise SpectralGapError(f"leading eigenvalue {lam} is not real positive")
    if D > 1 and abs(evals[order[1]]) >= (1.0 - gap_tol) * abs(lam):
        raise SpectralGapError(
            f"no spectral gap: |lam_2| / |lam_1| = {abs(evals[order[1]]) / abs(lam):.12f}"
        )
    R = unvec(evecs[:, order[0]], D)
    R = R / np.trace(R)
    R = hermitian_part(R)
    R = R / np.trace(R).real
    return EigenPair(R, math.log(lam.real) + Phi.log_scale, side)


def _proj_chain(driver: ErgodicDriver, indices, side: Side, start=None) -> np.ndarray:
    D = driver.dim
    Y = np.eye(D, dtype=complex) / D if start is None else start
    for k in indices:
        S = driver.superop_at(k)
        Y = proj_apply(S if side is Side.RIGHT else superop_adjoint(S), Y)
    return Y


def proj_chain_right(driver: ErgodicDriver, n: int, depth: int, start=None) -> np.ndarray:
    """``(phi_n o ... o phi_{n-depth}) . Y`` with ``Y = I/D`` by default."""
    return _proj_chain(driver, range(n - depth, n + 1), Side.RIGHT, start)


def proj_chain_left(driver: ErgodicDriver, n: int, depth: int, start=None) -> np.ndarray:
    """``(phi_n^* o ... o phi_{n+depth}^*) . Y`` with ``Y = I/D`` by default."""
    return _proj_chain(driver, range(n + depth, n - 1, -1), Side.LEFT, start)


@dataclass
class LimitSequence:
    """Lazily evaluated ``Z_n`` (RIGHT) or ``Z'_n`` (LEFT).

    ``z(n)`` pushes ``I/D`` through ``depth`` maps with the projective action
    and doubles ``depth`` until the approximations at depths ``L/2``, ``L``
    and ``L + 1`` are all within ``tol`` of each other in the metric ``d``.
    """

    driver: ErgodicDriver
    side: Side
    depth: int = 8
    tol: float = 1e-12
    max_depth: int = 4096
    _z: dict = field(default_factory=dict, repr=False)
    depths: dict = field(default_factory=dict, repr=False)

    def _chain(self, n: int, depth: int) -> np.ndarray:
        if self.side is Side.RIGHT:
            return proj_chain_right(self.driver, n, depth)
        return proj_chain_left(self.driver, n, depth)

    def z(self, n: int) -> np.ndarray:
        if n in self._z:
            return self._z[n]
        depth = max(self.depth, 1)
        prev = self._chain(n, depth)
        gap = math.inf
        while True:
            depth *= 2
            if depth > self.max_depth:
                raise ConvergenceError(
                    f"{self.side.value} limit at n={n} not converged by depth {self.max_depth}"
                    f" (last d-gap {gap:.3e})",
                    gap,
                )
            cur = self._chain(n, depth)
            gap = d_metric(cur, prev)
            prev = cur
            # depth/2 vs depth alone is blind to orbits of even period
            if gap < self.tol:
                gap = max(gap, d_metric(cur, self._chain(n, depth + 1)))
                if gap < self.tol:
                    break
        self._z[n] = cur
        self.depths[n] = depth
        return cur

    __getitem__ = z


def limit_sequence(driver: ErgodicDriver, side: Side, depth: int = 8, tol: float = 1e-12,
                   max_depth: int = 4096) -> LimitSequence:
    return LimitSequence(driver, side, depth, tol, max_depth)


def covariance_residual(seq: LimitSequence, n: int) -> float:
    """Trace-norm residual of ``Z_n = phi_n . Z_{n-1}`` (or the adjoint relation for LEFT)."""
    S = seq.driver.superop_at(n)
    if seq.side is Side.RIGHT:
        pred = proj_apply(S, seq.z(n - 1))
    else:
        pred = proj_apply(superop_adjoint(S), seq.z(n + 1))
    return trace_norm(seq.z(n) - pred)


def convergence_table(driver: ErgodicDriver, Ns, reference: LimitSequence | None = None,
                      proxy_factor: int | None = None):
    """Rows ``(N, d(R_{-N}, Z_0))``.

    ``Z_0`` is taken from ``reference`` (a RIGHT limit sequence) or, when
    ``proxy_factor`` is given, approximated by pushing ``I/D`` through
    ``proxy_factor * N`` maps ending at index 0.
    """
    rows = []
    for N in Ns:
        R = perron_pair(compose_window(driver, -N, 0), Side.RIGHT).eigmatrix
        if proxy_factor is not None:
            Z0 = proj_chain_right(driver, 0, proxy_factor * N)
        else:
            ref = reference if reference is not None else limit_sequence(driver, Side.RIGHT)
            Z0 = ref.z(0)
        rows.append((N, d_metric(R, Z0)))
    return rows


def log_linear_fit(xs, ys) -> tuple[float, float]:
    """Least-squares slope and intercept of ``ln y`` against ``x``."""
    xs = np.asarray(xs, dtype=float)
    ly = np.log(np.asarray(ys, dtype=float))
    slope, intercept = np.polyfit(xs, ly, 1)
    return float(slope), float(intercept)


@dataclass
class KappaResult:
    kappa_hat: float
    table: list
    nonincreasing: bool
    excluded: int


def kappa_estimate(driver: ErgodicDriver, N_max: int, n_windows: int, n_pairs: int = 64,
                   seed: int = 0, slack: float = 5e-2) -> KappaResult:
    """Contraction rate from the growth of ``E[ln c(Phi_N)]``.

    Window ``j`` is ``phi_{j+N} o ... o phi_j``. Windows that are not certified
    strictly positive at ``N_max`` are dropped with a warning, unless that would
    drop all of them (then they are kept and the warning says so).
    """
    if N_max < 2:
        raise ValueError("N_max must be >= 2")
    starts = list(range(n_windows))
    strict = [
        strict_positivity_certificate(compose_window(driver, j, j + N_max).superop)
        is StrictCertificate.CERTIFIED_STRICT
        for j in starts
    ]
    kept = [j for j, ok in zip(starts, strict) if ok]
    if len(kept) < len(starts):
        warnings.warn(f"{len(starts) - len(kept)} windows not strictly positive at N_max",
                      AssumptionWarning, stacklevel=2)
    if not kept:
        warnings.warn("strict-window assumption unverifiable: no strictly positive window", AssumptionWarning,
                      stacklevel=2)
        kept = starts
    table = []
    for N in range(1, N_max + 1):
        lns = []
        for j in kept:
            c = contraction_estimate(compose_window(driver, j, j + N).superop, n_pairs=n_pairs,
                                     seed=seed).c_lower
            # below C_FLOOR the estimate is rounding noise of an exact zero
            lns.append(math.log(c) if c > C_FLOOR else -math.inf)
        mean = float(np.mean(lns))
        table.append((N, mean, mean / N, len(kept)))
    means = np.array([row[1] for row in table])
    if np.isneginf(means).any():
        kappa_hat = 0.0
    else:
        slope, _ = np.polyfit([row[0] for row in table], means, 1)
        kappa_hat = float(math.exp(slope))
    per_n = [row[2] for row in table]
    nonincreasing = all(b <= a + slack for a, b in zip(per_n, per_n[1:]))
    return KappaResult(kappa_hat, table, nonincreasing, len(starts) - len(kept))


def rank_one_map(z_right: np.ndarray, z_left: np.ndarray) -> RankOneApprox:
    return RankOneApprox(np.asarray(z_left), np.asarray(z_right))


def rank_one_error(driver: ErgodicDriver, m: int, n: int, Z: LimitSequence, Zp: LimitSequence,
                   n_samples: int = 128, seed: int = 0) -> RankOneError:
    """Induced trace norm of ``Psi_{n,m} / tr[Psi_{n,m}^*(I)] - P_{n,m}``.

    ``error`` is the maximum of ``tr|Delta(u v^dagger)|`` over sampled unit
    vectors (a lower estimate; rank-one matrices are the extreme points of the
    trace-norm ball). ``split_bound`` doubles the largest value seen on the
    density matrices of the trace-norm splits of those inputs, and
    ``hs_bound = sqrt(D) * ||Delta||_{2->2}`` is a rigorous upper bound.
    """
    Psi = compose_window(driver, m, n)
    D = Psi.dim
    S = Psi.superop
    norm = np.trace(superop_apply(superop_adjoint(S), np.eye(D))).real
    P = rank_one_map(Z.z(n), Zp.z(m)).superop()
    delta = S / norm - P
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n_samples, D)) + 1j * rng.standard_normal((n_samples, D))
    V = rng.standard_normal((n_samples, D)) + 1j * rng.standard_normal((n_samples, D))
    U = np.concatenate([np.eye(D), U / np.linalg.norm(U, axis=1, keepdims=True)])
    V = np.concatenate([np.eye(D), V / np.linalg.norm(V, axis=1, keepdims=True)])
    best = 0.0
    split_best = 0.0
    for u, v in zip(U, V):
        M = np.outer(u, v.conj())
        best = max(best, trace_norm(superop_apply(delta, M)))
        for _, rho in split_trace_norm(M):
            split_best = max(split_best, trace_norm(superop_apply(delta, rho)))
    hs = math.sqrt(D) * float(np.linalg.norm(delta, 2))
    return RankOneError(best, 2.0 * split_best, hs)


def rank_one_table(driver: ErgodicDriver, m: int, gaps, Z=None, Zp=None, **kwargs):
    Z = Z if Z is not None else limit_sequence(driver, Side.RIGHT)
    Zp = Zp if Zp is not None else limit_sequence(driver, Side.LEFT)
    rows = []
    for g in gaps:
        e = rank_one_error(driver, m, m + g, Z, Zp, **kwargs)
        rows.append((g, e.error, e.split_bound, e.hs_bound))
    return rows


def stopping_time(driver: ErgodicDriver, start: int, max_N: int, n_probes: int = 64):
    """First ``N`` with ``phi_{start+N} o ... o phi_start`` certified strictly positive.

    Returns :data:`INFINITE` when no window up to ``max_N`` is certified;
    UNDECIDED certificates never count.
    """
    if max_N < 0:
        raise ValueError("max_N must be >= 0")
    S = None
    for N in range(max_N + 1):
        step = driver.superop_at(start + N)
        S = step if S is None else step @ S
        S = S / np.linalg.norm(S, "nuc")
        if strict_positivity_certificate(S, n_probes) is StrictCertificate.CERTIFIED_STRICT:
            return N
    return INFINITE
