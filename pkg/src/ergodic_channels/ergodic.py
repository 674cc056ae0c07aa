"""Seeded two-sided drivers for ergodic sequences of CP maps.

A driver stands in for the abstract system ``(Omega, T, omega)``: querying
``channel_at(n)`` returns the map at time ``n`` for every integer ``n``,
including negative ones. All randomness is counter-based, keyed by
``(master_seed, n)``, so any index can be evaluated on its own and the answer
is bit-identical across calls, processes and thread counts. Shifting a driver
by ``k`` only moves an index offset.

Four kinds are provided:

``IID``
    independent draws per index.
``ROTATION``
    Kraus operators are smooth periodic functions of the orbit
    ``frac(omega_0 + n * alpha)`` of an irrational rotation. ``alpha`` defaults
    to the double closest to ``(sqrt(5) - 1) / 2``; floating point cannot
    represent an irrational, so keep horizons far below the period of that
    rational approximation.
``MARKOV``
    a stationary Markov chain over a finite table of maps. Negative indices
    walk the time-reversed chain from index 0.
``FIXED_PLUS_NOISE``
    a base map plus a (moving-average correlated) Gaussian perturbation of
    size ``eps``. If the base is a channel the perturbed Kraus block is
    projected back to an isometry.
"""
from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .cpmaps import (
    CPMap,
    StrictCertificate,
    is_trace_preserving,
    kernel_condition_check,
    polar_isometry,
    strict_positivity_certificate,
    superop_matrix,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
CHECKPOINT = 1024

_STREAM_KRAUS = 1
_STREAM_NOISE = 2
_STREAM_MARKOV = 3
_STREAM_SETUP = 4


class DriverKind(enum.Enum):
    IID = "IID"
    ROTATION = "ROTATION"
    MARKOV = "MARKOV"
    FIXED_PLUS_NOISE = "FIXED_PLUS_NOISE"


def _zigzag(n: int) -> int:
    return 2 * n if n >= 0 else -2 * n - 1


def keyed_rng(seed: int, stream: int, n: int = 0) -> np.random.Generator:
    """Generator keyed by ``(seed, stream, n)``; independent of call order."""
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), stream, _zigzag(n)]))


def _gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _kraus_block(G: np.ndarray, trace_preserving: bool) -> np.ndarray:
    d, D, _ = G.shape
    if trace_preserving:
        return polar_isometry(G)
    return G / np.sqrt(d * D)


@dataclass(frozen=True, eq=False)
class ErgodicDriver:
    """Deterministic two-sided source of CP maps ``phi_n``.

    Use the constructors :meth:`iid`, :meth:`rotation`, :meth:`markov` and
    :meth:`fixed_plus_noise` rather than building one by hand.
    """

    kind: DriverKind
    dim: int
    kraus_rank: int
    master_seed: int
    params: dict = field(default_factory=dict)
    offset: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: Any = field(default_factory=threading.Lock, repr=False, compare=False)

    # -- constructors ------------------------------------------------------

    @classmethod
    def iid(cls, dim: int, kraus_rank: int, seed: int, trace_preserving: bool = True):
        return cls(DriverKind.IID, dim, kraus_rank, seed, {"trace_preserving": trace_preserving})

    @classmethod
    def rotation(
        cls,
        dim: int,
        kraus_rank: int,
        seed: int,
        alpha: float = GOLDEN,
        n_modes: int = 2,
        trace_preserving: bool = True,
    ):
        rng = keyed_rng(seed, _STREAM_SETUP)
        omega0 = float(rng.random())
        # Fourier coefficients of the Kraus block as a function of the angle
        coeffs = _gaussian(rng, (2 * n_modes + 1, kraus_rank, dim, dim))
        coeffs[1:] *= 0.5 / np.arange(1, 2 * n_modes + 1)[:, None, None, None]
        params = {
            "alpha": alpha,
            "omega0": omega0,
            "coeffs": coeffs,
            "trace_preserving": trace_preserving,
        }
        return cls(DriverKind.ROTATION, dim, kraus_rank, seed, params)

    @classmethod
    def markov(cls, table, transition, seed: int):
        """Markov chain over ``table`` (list of CPMaps) with row-stochastic ``transition``."""
        table = list(table)
        P = np.asarray(transition, dtype=float)
        k = len(table)
        if P.shape != (k, k) or (P < 0).any() or not np.allclose(P.sum(axis=1), 1.0):
            raise ValueError("transition must be a row-stochastic k x k matrix")
        if len({phi.dim for phi in table}) != 1:
            raise ValueError("all maps in the table must share one dimension")
        evals, evecs = np.linalg.eig(P.T)
        pi = np.real(evecs[:, np.argmin(np.abs(evals - 1.0))])
        pi = np.abs(pi) / np.abs(pi).sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            # time reversal: P~[i, j] = pi_j P[j, i] / pi_i
            reverse = np.where(pi[:, None] > 0, P.T * pi[None, :] / pi[:, None], 0.0)
        params = {"table": table, "transition": P, "stationary": pi, "reverse": reverse}
        return cls(DriverKind.MARKOV, table[0].dim, max(p.rank for p in table), seed, params)

    @classmethod
    def fixed_plus_noise(cls, base: CPMap, eps: float, seed: int, ma_window: int = 1):
        params = {
            "base": base,
            "eps": float(eps),
            "ma_window": int(ma_window),
            "reproject": is_trace_preserving(base, 1e-10),
        }
        return cls(DriverKind.FIXED_PLUS_NOISE, base.dim, base.rank, seed, params)

    @classmethod
    def fixed(cls, base: CPMap):
        return cls.fixed_plus_noise(base, 0.0, 0)

    # -- queries -------------------------------------------------------------

    def shift(self, k: int) -> "ErgodicDriver":
        """Driver whose index ``n`` is this driver's index ``n + k``."""
        return replace(self, offset=self.offset + k, _cache={}, _lock=threading.Lock())

    def channel_at(self, n: int) -> CPMap:
        return self._channel(int(n) + self.offset)

    def superop_at(self, n: int) -> np.ndarray:
        return superop_matrix(self.channel_at(n))

    def channels(self, m: int, n: int) -> list[CPMap]:
        return [self.channel_at(k) for k in range(m, n + 1)]

    def angle_at(self, n: int) -> float:
        """Orbit point ``frac(omega_0 + n alpha)`` of a ROTATION driver."""
        p = self.params
        return float((p["omega0"] + (int(n) + self.offset) * p["alpha"]) % 1.0)

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "D": self.dim, "d": self.kraus_rank, "seed": self.master_seed}
        for key in ("trace_preserving", "alpha", "eps", "ma_window"):
            if key in self.params:
                out[key] = self.params[key]
        if self.offset:
            out["offset"] = self.offset
        return out

    # -- internals -----------------------------------------------------------

    def _channel(self, n: int) -> CPMap:
        kind = self.kind
        seed = self.master_seed
        if kind is DriverKind.IID:
            G = _gaussian(keyed_rng(seed, _STREAM_KRAUS, n), (self.kraus_rank, self.dim, self.dim))
            return CPMap(_kraus_block(G, self.params["trace_preserving"]))
        if kind is DriverKind.ROTATION:
            p = self.params
            theta = 2 * np.pi * ((p["omega0"] + n * p["alpha"]) % 1.0)
            modes = (len(p["coeffs"]) - 1) // 2
            basis = [1.0]
            for j in range(1, modes + 1):
                basis += [math.cos(j * theta), math.sin(j * theta)]
            G = np.tensordot(np.array(basis), p["coeffs"], axes=1)
            return CPMap(_kraus_block(G, p["trace_preserving"]))
        if kind is DriverKind.MARKOV:
            return self.params["table"][self._markov_state(n)]
        if kind is DriverKind.FIXED_PLUS_NOISE:
            p = self.params
            base = p["base"]
            if p["eps"] == 0.0:
                return base
            w = p["ma_window"]
            shape = base.kraus.shape
            noise = sum(_gaussian(keyed_rng(seed, _STREAM_NOISE, n - j), shape) for j in range(w))
            K = base.kraus + p["eps"] * noise / np.sqrt(2 * w)
            if p["reproject"]:
                K = polar_isometry(K)
            return CPMap(K)
        raise ValueError(f"unknown driver kind {kind}")

    def _markov_step(self, state: int, n: int, forward: bool) -> int:
        P = self.params["transition"] if forward else self.params["reverse"]
        u = keyed_rng(self.master_seed, _STREAM_MARKOV, n).random()
        return int(min(np.searchsorted(np.cumsum(P[state]), u, side="right"), len(P) - 1))

    def _markov_state(self, n: int) -> int:
        # states are walked outward from index 0 and stored in blocks of
        # CHECKPOINT consecutive indices, keyed by signed block number
        pi = self.params["stationary"]
        step = 1 if n >= 0 else -1
        block = abs(n) // CHECKPOINT
        with self._lock:
            cache = self._cache
            if (0, 1) not in cache:
                u = keyed_rng(self.master_seed, _STREAM_MARKOV, 0).random()
                s0 = int(min(np.searchsorted(np.cumsum(pi), u, side="right"), len(pi) - 1))
                cache[(0, 1)] = self._walk_block(s0, 0, 1)
                cache[(0, -1)] = self._walk_block(s0, 0, -1)
            b = 0
            while b < block:
                if (b + 1, step) not in cache:
                    last = cache[(b, step)][-1]
                    cache[(b + 1, step)] = self._walk_block(last, (b + 1) * CHECKPOINT * step, step)
                b += 1
            return int(cache[(block, step)][abs(n) - block * CHECKPOINT])

    def _walk_block(self, state: int, first: int, step: int) -> np.ndarray:
        """States at ``first, first + step, ...`` (CHECKPOINT of them); ``state`` is
        the state at ``first`` when ``first == 0`` and at ``first - step`` otherwise."""
        out = np.empty(CHECKPOINT, dtype=np.int64)
        s = state
        for j in range(CHECKPOINT):
            idx = first + j * step
            if idx != 0:
                s = self._markov_step(s, idx, forward=step > 0)
            out[j] = s
        return out


@dataclass
class AssumptionReport:
    strict_fraction: dict
    kernel_ok: dict
    stopping_times: dict
    horizon: int
    strict_windows_verified: bool = False
    kernel_condition_verified: bool = False
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "strict_windows_verified": self.strict_windows_verified,
            "kernel_condition_verified": self.kernel_condition_verified,
            "strict_fraction": {str(k): v for k, v in self.strict_fraction.items()},
            "kernel_ok": {str(k): v for k, v in self.kernel_ok.items()},
            "stopping_times": {str(k): v for k, v in self.stopping_times.items()},
            "notes": list(self.notes),
        }


def window_superop(driver: ErgodicDriver, m: int, n: int) -> np.ndarray:
    """Trace-normalized superoperator of ``phi_n o ... o phi_m`` (scale dropped)."""
    S = driver.superop_at(m)
    S = S / np.abs(S).max()
    for k in range(m + 1, n + 1):
        S = driver.superop_at(k) @ S
        S = S / np.abs(S).max()
    return S


def validate_assumptions(
    driver: ErgodicDriver, horizon: int, n_probes: int = 64, starts=range(16)
) -> AssumptionReport:
    """Empirical check of the two irreducibility assumptions.

    For every window length ``N0 < horizon`` reports the fraction of sampled
    windows ``[k, k + N0]`` that are certified strictly positive, the kernel
    condition for each channel touched, and the first window length at which
    each start becomes certified (``None`` if it never does within the horizon).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    starts = list(starts)
    strict = {N0: 0 for N0 in range(horizon)}
    tau: dict = {}
    for k in starts:
        S = None
        tau[k] = None
        for N0 in range(horizon):
            step = driver.superop_at(k + N0)
            S = step if S is None else step @ S
            S = S / np.abs(S).max()
            cert = strict_positivity_certificate(S, n_probes, seed=k)
            if cert is StrictCertificate.CERTIFIED_STRICT:
                strict[N0] += 1
                if tau[k] is None:
                    tau[k] = N0
    lo = min(starts)
    hi = max(starts) + horizon - 1
    kernel = {n: kernel_condition_check(driver.channel_at(n)) for n in range(lo, hi + 1)}
    report = AssumptionReport(
        strict_fraction={N0: c / len(starts) for N0, c in strict.items()},
        kernel_ok=kernel,
        stopping_times=tau,
        horizon=horizon,
    )
    report.strict_windows_verified = any(c > 0 for c in strict.values())
    report.kernel_condition_verified = all(kernel.values())
    if not report.strict_windows_verified:
        report.notes.append(
            "strict-window assumption unverifiable: no sampled window certified strictly positive"
        )
    if not report.kernel_condition_verified:
        report.notes.append("kernel assumption violated: some phi(I) or phi*(I) is singular")
    if driver.kind is DriverKind.ROTATION:
        report.notes.append("ergodicity of the rotation is a sanity heuristic only")
    return report


def equidistribution_ks(driver: ErgodicDriver, n_max: int) -> float:
    """Kolmogorov-Smirnov distance of ``{frac(omega_0 + n alpha)}_{n < n_max}`` from uniform."""
    pts = np.sort([driver.angle_at(n) for n in range(n_max)])
    i = np.arange(1, n_max + 1)
    return float(max((i / n_max - pts).max(), (pts - (i - 1) / n_max).max()))
