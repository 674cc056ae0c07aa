"""Periodic matrix product states built from a channel sequence.

Site ``k`` carries the tensors ``A_k^i = (B_k^i)^dagger`` where ``B_k^i`` are
the Kraus operators of ``phi_k``, so the transfer map of the site is
``phi_k(M) = sum_i A_k^i^dagger M A_k^i``. Over an interval ``[m, n]`` the
unnormalized amplitude of the basis string ``|i_m, ..., i_n>`` is
``tr[A_m^{i_m} ... A_n^{i_n}]``. Strings are ordered lexicographically with
``i_m`` the most significant digit; observable matrices use the same order.

For a string ``X_i = A_m^{i_m} ... A_n^{i_n}`` the composed transfer map is
``M -> sum_i X_i^dagger M X_i`` and a local observable ``O`` on ``[m, n]``
becomes the map ``O_hat(M) = sum_{ij} <i|O|j> X_i^dagger M X_j``. Since
``Tr[M -> Y^dagger M X] = conj(tr Y) tr X`` the finite-chain expectation is a
ratio of traces of linear maps, see :func:`finite_expectation`.

In the column-major superoperator picture one site contributes the blocks
``E_k[i, j] = A_k^{j T} kron A_k^{i dagger}`` and
``O_hat = sum_{ij} O_ij E_n[i_n, j_n] ... E_m[i_m, j_m]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cpmaps import CPMap, is_trace_preserving, superop_apply
from .ergodic import ErgodicDriver
from .matcore import DimensionError, SymmetryError, check_hermitian, hermitian_part, sqrt_psd
from .process import LimitSequence, Side, limit_sequence

MAX_SUPPORT = 6
MAX_BITS = 22


class CapacityError(ValueError):
    pass


class SupportError(ValueError):
    pass


class BoundaryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MpsChain:
    """Periodic MPS on sites ``start, ..., start + L - 1``; ``tensors[k - start, i] = A_k^i``."""

    tensors: np.ndarray
    start: int = 0
    boundary: str = "PERIODIC"

    def __post_init__(self):
        if str(self.boundary).upper() != "PERIODIC":
            raise BoundaryError(
                f"boundary {self.boundary!r} not supported; only periodic chains are implemented"
            )
        T = np.array(self.tensors, dtype=complex)
        if T.ndim != 4 or T.shape[2] != T.shape[3]:
            raise DimensionError(f"tensors must have shape (L, d, D, D), got {T.shape}")
        T.setflags(write=False)
        object.__setattr__(self, "tensors", T)

    @classmethod
    def from_driver(cls, driver: ErgodicDriver, m: int, n: int) -> "MpsChain":
        if m > n:
            raise ValueError(f"empty interval [{m}, {n}]")
        T = np.array([driver.channel_at(k).kraus.conj().transpose(0, 2, 1) for k in range(m, n + 1)])
        return cls(T, m)

    @property
    def interval(self) -> tuple[int, int]:
        return self.start, self.start + len(self.tensors) - 1

    @property
    def n_sites(self) -> int:
        return self.tensors.shape[0]

    @property
    def phys_dim(self) -> int:
        return self.tensors.shape[1]

    @property
    def bond_dim(self) -> int:
        return self.tensors.shape[2]

    def site(self, k: int) -> np.ndarray:
        m, n = self.interval
        if not m <= k <= n:
            raise SupportError(f"site {k} outside chain [{m}, {n}]")
        return self.tensors[k - m]

    def transfer_superop(self, k: int) -> np.ndarray:
        return site_blocks(self.site(k)).trace(axis1=0, axis2=1)

    def window_superop(self, a: int, b: int) -> tuple[np.ndarray, float]:
        """Transfer map of sites ``a..b`` as ``(normalized superop, log scale)``; identity when empty."""
        D = self.bond_dim
        S = np.eye(D * D, dtype=complex)
        log_scale = 0.0
        for k in range(a, b + 1):
            S = self.transfer_superop(k) @ S
            s = np.linalg.norm(S, "nuc")
            S = S / s
            log_scale += math.log(s)
        return S, log_scale

    def site_channel(self, k: int) -> CPMap:
        return CPMap(self.site(k).conj().transpose(0, 2, 1))


@dataclass(frozen=True, eq=False)
class LocalObservable:
    support: tuple[int, int]
    matrix: np.ndarray

    def __post_init__(self):
        m, n = (int(v) for v in self.support)
        if m > n:
            raise SupportError(f"empty support [{m}, {n}]")
        if n - m + 1 > MAX_SUPPORT:
            raise SupportError(f"support length {n - m + 1} exceeds {MAX_SUPPORT}")
        M = check_hermitian(self.matrix)
        M = hermitian_part(M)
        M.setflags(write=False)
        object.__setattr__(self, "support", (m, n))
        object.__setattr__(self, "matrix", M)

    @property
    def length(self) -> int:
        return self.support[1] - self.support[0] + 1

    def phys_dim(self) -> int:
        dim = self.matrix.shape[0]
        d = round(dim ** (1.0 / self.length))
        if d ** self.length != dim:
            raise DimensionError(f"matrix size {dim} is not d^{self.length}")
        return d

    @classmethod
    def identity(cls, support, d: int) -> "LocalObservable":
        m, n = support
        return cls((m, n), np.eye(d ** (n - m + 1)))

    @classmethod
    def single_site(cls, site: int, op) -> "LocalObservable":
        return cls((site, site), op)

    def shifted(self, k: int) -> "LocalObservable":
        return LocalObservable((self.support[0] + k, self.support[1] + k), self.matrix)

    def to_json(self) -> dict:
        return {
            "support": list(self.support),
            "matrix": [[float(z.real), float(z.imag)] for z in self.matrix.reshape(-1)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LocalObservable":
        if str(obj.get("boundary", "PERIODIC")).upper() != "PERIODIC":
            raise BoundaryError("only periodic boundary conditions are supported")
        entries = obj["matrix"]
        size = math.isqrt(len(entries))
        if size * size != len(entries):
            raise DimensionError(f"observable needs a square number of entries, got {len(entries)}")
        arr = np.array([complex(re, im) for re, im in entries]).reshape(size, size)
        return cls(tuple(obj["support"]), arr)


def save_observable(O: LocalObservable, path) -> None:
    Path(path).write_text(json.dumps(O.to_json()))


def load_observable(path) -> LocalObservable:
    return LocalObservable.from_json(json.loads(Path(path).read_text()))


def product_observable(O1: LocalObservable, O2: LocalObservable, d: int) -> LocalObservable:
    """``O2 O1`` on the hull of two disjoint supports, identity in the gap."""
    (m1, n1), (m2, n2) = O1.support, O2.support
    if not n1 < m2:
        raise SupportError("supports must be disjoint and ordered")
    gap = np.eye(d ** (m2 - n1 - 1))
    return LocalObservable((m1, n2), np.kron(np.kron(O1.matrix, gap), O2.matrix))


# -- dense oracle -------------------------------------------------------------


def brute_force_amplitudes(chain: MpsChain) -> np.ndarray:
    """Unnormalized amplitudes ``tr[A_m^{i_m} ... A_n^{i_n}]`` in lexicographic order."""
    L, d, D = chain.n_sites, chain.phys_dim, chain.bond_dim
    if L * math.log2(max(d, 1)) > MAX_BITS:
        raise CapacityError(f"{L} sites of dimension {d} exceed 2^{MAX_BITS} amplitudes")
    P = chain.tensors[0]
    for A in chain.tensors[1:]:
        P = np.einsum("sab,ibc->siac", P, A).reshape(-1, D, D)
    return np.einsum("saa->s", P)


def brute_force_state(chain: MpsChain) -> tuple[np.ndarray, float]:
    """Unit-norm state vector and the squared normalization ``N^2``."""
    amp = brute_force_amplitudes(chain)
    norm_sq = float(np.vdot(amp, amp).real)
    if not norm_sq > 0:
        raise ValueError("all amplitudes vanish")
    return amp / math.sqrt(norm_sq), norm_sq


def _embed(O: LocalObservable, chain: MpsChain) -> np.ndarray:
    m0, n0 = chain.interval
    m, n = O.support
    d = chain.phys_dim
    return np.kron(np.kron(np.eye(d ** (m - m0)), O.matrix), np.eye(d ** (n0 - n)))


def brute_force_expectation(chain: MpsChain, O: LocalObservable) -> float:
    _check_support(chain, O)
    psi, _ = brute_force_state(chain)
    val = np.vdot(psi, _embed(O, chain) @ psi)
    return float(val.real)


# -- transfer-map formula -----------------------------------------------------


def site_blocks(A: np.ndarray) -> np.ndarray:
    """``E[i, j] = A^{j T} kron A^{i dagger}`` with shape ``(d, d, D^2, D^2)``."""
    Ad = A.conj().transpose(0, 2, 1)
    d, D = A.shape[0], A.shape[1]
    E = np.einsum("jba,icd->ijacbd", A, Ad)
    return E.reshape(d, d, D * D, D * D)


def _observable_superop(tensors, O: np.ndarray) -> np.ndarray:
    """``sum_{ij} O_ij E_last ... E_first`` for the given list of site tensors."""
    L = len(tensors)
    d, D = tensors[0].shape[0], tensors[0].shape[1]
    D2 = D * D
    # G[i_rest, j_rest] holds the partial sum over already absorbed sites
    G = O.reshape((d,) * (2 * L))
    G = np.moveaxis(G, L, 1).reshape(d, d, -1)
    acc = np.einsum("ijr,ijxy->rxy", G, site_blocks(tensors[0]))
    for k in range(1, L):
        rest = L - k
        acc = acc.reshape((d,) * (2 * rest) + (D2, D2))
        acc = np.moveaxis(acc, rest, 1).reshape(d, d, -1, D2, D2)
        acc = np.einsum("ijxy,ijryz->rxz", site_blocks(tensors[k]), acc)
    return acc.reshape(D2, D2)


def _check_support(chain: MpsChain, O: LocalObservable):
    m0, n0 = chain.interval
    m, n = O.support
    if not (m0 <= m and n <= n0):
        raise SupportError(f"support [{m}, {n}] not inside chain [{m0}, {n0}]")
    if O.phys_dim() != chain.phys_dim:
        raise DimensionError("observable and chain disagree on the physical dimension")


def observable_hat(chain: MpsChain, O: LocalObservable) -> np.ndarray:
    """Superoperator of ``O_hat(M) = sum_{ij} <i|O|j> X_i^dagger M X_j`` on the support of ``O``."""
    _check_support(chain, O)
    m, n = O.support
    return _observable_superop([chain.site(k) for k in range(m, n + 1)], O.matrix)


def finite_expectation(chain: MpsChain, O: LocalObservable, tol_imag: float = 1e-10) -> float:
    """``<psi|O|psi>`` as ``Tr[Phi_right o O_hat o Phi_left] / Tr[Phi_full]``.

    The windows on both sides of the support are carried with per-step
    normalization, so there is no limit on chain length here.
    """
    _check_support(chain, O)
    m0, n0 = chain.interval
    m, n = O.support
    left, _ = chain.window_superop(m0, m - 1)
    right, _ = chain.window_superop(n + 1, n0)
    # the support is at most a few sites, so its raw products are safe
    num = np.trace(right @ observable_hat(chain, O) @ left)
    den = np.trace(right @ support_superop(chain, m, n) @ left)
    return _real(num / den, tol_imag)


def support_superop(chain: MpsChain, m: int, n: int) -> np.ndarray:
    """Unnormalized transfer map of the sites ``m..n``."""
    D = chain.bond_dim
    S = np.eye(D * D, dtype=complex)
    for k in range(m, n + 1):
        S = chain.transfer_superop(k) @ S
    return S


def normalization_log(chain: MpsChain) -> tuple[complex, float]:
    """``Tr[phi_n o ... o phi_m]`` as ``(trace of normalized superop, log scale)``."""
    S, log_scale = chain.window_superop(*chain.interval)
    return complex(np.trace(S)), log_scale


# -- gauge fixing and the thermodynamic limit --------------------------------


@dataclass
class GaugeData:
    """Trace-preserving gauge over sites ``[m, n]``.

    ``tilde_kraus[k]`` holds the gauge-transformed site tensors
    ``A~_k^i = xi_k^{-1/2} Z'_k^{-1/2} A_k^i Z'_{k+1}^{1/2}``; the Kraus
    operators of the tilde channel are their adjoints. ``tilde_z`` is defined
    for ``k`` in ``[m - 1, n]``.
    """

    m: int
    n: int
    xi: dict = field(default_factory=dict)
    tilde_kraus: dict = field(default_factory=dict)
    tilde_z: dict = field(default_factory=dict)
    z: dict = field(default_factory=dict)
    z_prime: dict = field(default_factory=dict)

    def tilde_channel(self, k: int) -> CPMap:
        return CPMap(self.tilde_kraus[k].conj().transpose(0, 2, 1))

    def tilde_superop(self, k: int) -> np.ndarray:
        return site_blocks(self.tilde_kraus[k]).trace(axis1=0, axis2=1)

    def covers(self, a: int, b: int) -> bool:
        return self.m <= a and b <= self.n


def gauge_fix(driver: ErgodicDriver, z_left: LimitSequence | None, m: int, n: int,
              z_right: LimitSequence | None = None, tol: float = 1e-12) -> GaugeData:
    """Gauge transform sites ``[m, n]`` so that every site channel is trace preserving.

    ``z_left`` is the LEFT limit sequence ``Z'`` and ``z_right`` the RIGHT one
    ``Z``; either is built from the driver when omitted.
    """
    if m > n:
        raise ValueError(f"empty range [{m}, {n}]")
    z_left = z_left if z_left is not None else limit_sequence(driver, Side.LEFT, tol=tol)
    z_right = z_right if z_right is not None else limit_sequence(driver, Side.RIGHT, tol=tol)
    g = GaugeData(m, n)
    roots = {}
    inv_roots = {}
    for k in range(m - 1, n + 2):
        Zp = z_left.z(k)
        g.z_prime[k] = Zp
        roots[k] = sqrt_psd(Zp)
        inv_roots[k] = sqrt_psd(Zp, inverse=True)
    for k in range(m - 1, n + 1):
        g.z[k] = z_right.z(k)
    for k in range(m, n + 1):
        phi = driver.channel_at(k)
        A = phi.kraus.conj().transpose(0, 2, 1)
        # xi_k = tr[phi_k^*(Z'_{k+1})] = sum_i tr[A^i Z'_{k+1} A^i^dagger]
        xi = float(np.einsum("iab,bc,iac->", A, g.z_prime[k + 1], A.conj()).real)
        if not xi > 0:
            raise SymmetryError(f"xi_{k} = {xi} is not positive")
        g.xi[k] = xi
        g.tilde_kraus[k] = inv_roots[k] @ A @ roots[k + 1] / math.sqrt(xi)
    for k in range(m - 1, n + 1):
        Z = g.z[k]
        R = roots[k + 1]
        T = R @ Z @ R
        g.tilde_z[k] = hermitian_part(T / np.trace(T).real)
    return g


def tilde_observable(gauge: GaugeData, O: LocalObservable) -> np.ndarray:
    m, n = O.support
    if not gauge.covers(m, n):
        raise SupportError(f"gauge [{gauge.m}, {gauge.n}] does not cover support [{m}, {n}]")
    return _observable_superop([gauge.tilde_kraus[k] for k in range(m, n + 1)], O.matrix)


def _real(val: complex, tol: float) -> float:
    if abs(val.imag) > tol * max(1.0, abs(val.real)):
        raise ValueError(f"value has imaginary part {val.imag:.3e}")
    return float(val.real)


def thermo_expectation(gauge: GaugeData, O: LocalObservable, tol_imag: float = 1e-10) -> float:
    """Thermodynamic-limit expectation ``W(O) = tr[O~(Z~_{m-1})]``."""
    m, _ = O.support
    out = superop_apply(tilde_observable(gauge, O), gauge.tilde_z[m - 1])
    return _real(np.trace(out), tol_imag)


def thermo_expectation_ratio(chain: MpsChain, O: LocalObservable, z: LimitSequence,
                             z_prime: LimitSequence, tol_imag: float = 1e-10) -> float:
    """``W(O) = <Z'_{n+1}| O_hat |Z_{m-1}> / <Z'_{n+1}| phi_n o ... o phi_m |Z_{m-1}>``."""
    m, n = O.support
    Zl = z.z(m - 1)
    Zp = z_prime.z(n + 1)
    num = np.trace(Zp @ superop_apply(observable_hat(chain, O), Zl))
    den = np.trace(Zp @ superop_apply(support_superop(chain, m, n), Zl))
    return _real(num / den, tol_imag)


def denominator_factorization(chain: MpsChain, z: LimitSequence, z_prime: LimitSequence,
                              m: int, n: int) -> tuple[float, float, float]:
    """Three expressions for ``<Z'_{n+1}| phi_n o ... o phi_m |Z_{m-1}>``, as logs.

    Returns ``(direct, telescoped, via_xi)`` where ``telescoped`` is
    ``sum_k ln tr[phi_k(Z_{k-1})] + ln <Z'_{n+1}|Z_n>`` and ``via_xi`` is
    ``sum_k ln xi_k + ln tr[Z'_m Z_{m-1}]``.
    """
    Psi, log_scale = chain.window_superop(m, n)
    direct = math.log(np.trace(z_prime.z(n + 1) @ superop_apply(Psi, z.z(m - 1))).real) + log_scale
    tel = 0.0
    for k in range(m, n + 1):
        tel += math.log(np.trace(superop_apply(chain.transfer_superop(k), z.z(k - 1))).real)
    tel += math.log(np.trace(z_prime.z(n + 1) @ z.z(n)).real)
    via = 0.0
    for k in range(m, n + 1):
        S = chain.transfer_superop(k)
        via += math.log(np.trace(superop_apply(S.conj().T, z_prime.z(k + 1))).real)
    via += math.log(np.trace(z_prime.z(m) @ z.z(m - 1)).real)
    return direct, tel, via


def correlation(gauge: GaugeData, O1: LocalObservable, O2: LocalObservable,
                tol_imag: float = 1e-10) -> tuple[float, float, float, float]:
    """``(W(O2 O1), W(O1), W(O2), W(O2 O1) - W(O2) W(O1))`` for ``O1`` left of ``O2``."""
    (m1, n1), (m2, n2) = O1.support, O2.support
    if not n1 < m2:
        raise SupportError(f"supports [{m1}, {n1}] and [{m2}, {n2}] overlap or are misordered")
    Y = superop_apply(tilde_observable(gauge, O1), gauge.tilde_z[m1 - 1])
    for k in range(n1 + 1, m2):
        Y = superop_apply(gauge.tilde_superop(k), Y)
    w12 = _real(np.trace(superop_apply(tilde_observable(gauge, O2), Y)), tol_imag)
    w1 = thermo_expectation(gauge, O1, tol_imag)
    w2 = thermo_expectation(gauge, O2, tol_imag)
    return w12, w1, w2, w12 - w2 * w1


def gauge_chain(chain: MpsChain, gauge: GaugeData) -> MpsChain:
    """The same periodic chain written with the tilde tensors.

    The last site's right factor ``Z'_{n+1}^{1/2}`` is replaced by
    ``Z'_m^{1/2}`` so the ring closes; this is a similarity transform of the
    tensors that leaves the periodic state unchanged up to normalization.
    """
    m0, n0 = chain.interval
    if not gauge.covers(m0, n0):
        raise SupportError("gauge must cover the whole chain")
    T = [gauge.tilde_kraus[k] for k in range(m0, n0 + 1)]
    close = (sqrt_psd(gauge.z_prime[n0 + 1], inverse=True) @ sqrt_psd(gauge.z_prime[m0]))
    T[-1] = T[-1] @ close
    return MpsChain(np.array(T), m0)


def tilde_trace_defect(gauge: GaugeData) -> float:
    """Largest operator-norm deviation of ``sum_i A~ A~^dagger`` from the identity."""
    return max(
        float(np.linalg.norm(
            np.einsum("iab,icb->ac", gauge.tilde_kraus[k], gauge.tilde_kraus[k].conj())
            - np.eye(gauge.tilde_kraus[k].shape[1]), 2))
        for k in range(gauge.m, gauge.n + 1)
    )


def tilde_channels_trace_preserving(gauge: GaugeData, tol: float = 1e-10) -> bool:
    return all(is_trace_preserving(gauge.tilde_channel(k), tol) for k in range(gauge.m, gauge.n + 1))
