"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` (lines are printed even
without ``-s``). Every test also checks its own wall-clock budget.
"""
import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from ergodic_channels.cli import run as cli_run
from ergodic_channels.cpmaps import (
    StrictCertificate,
    adjoint,
    compose,
    hennion_embed,
    random_channel,
    random_cp_map,
    strict_positivity_certificate,
)
from ergodic_channels.ergodic import ErgodicDriver
from ergodic_channels.matcore import random_state, trace_norm
from ergodic_channels.mps import (
    LocalObservable,
    MpsChain,
    brute_force_expectation,
    brute_force_state,
    correlation,
    denominator_factorization,
    finite_expectation,
    gauge_chain,
    gauge_fix,
    normalization_log,
    thermo_expectation,
    tilde_trace_defect,
)
from ergodic_channels.cpmaps import superop_apply, superop_matrix
from ergodic_channels.pmetric import (
    contraction_estimate,
    d_metric,
    m_coeff,
    pmetric,
    pmetric_endpoint_oracle,
)
from ergodic_channels.process import (
    AssumptionWarning,
    Side,
    compose_window,
    convergence_table,
    covariance_residual,
    kappa_estimate,
    limit_sequence,
    log_linear_fit,
    perron_pair,
    rank_one_table,
)

DEMOS = Path(__file__).resolve().parents[1] / "demos" / "configs"


@pytest.fixture
def report(capsys):
    t0 = time.perf_counter()

    def _report(k, ok, detail, budget):
        elapsed = time.perf_counter() - t0
        in_time = budget is None or elapsed <= budget
        status = "PASS" if ok and in_time else "FAIL"
        limit = "" if budget is None else f" / {budget:.0f} s"
        with capsys.disabled():
            print(f"\n{status} criterion {k}: {detail} [{elapsed:.1f} s{limit}]")
        assert ok, detail
        assert in_time, f"criterion {k} took {elapsed:.1f} s, budget {budget} s"

    return _report


def _state(D, rng):
    return random_state(D, rng, rank=int(rng.integers(1, D + 1)))


def _herm(D, rng):
    G = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    return 0.5 * (G + G.conj().T)


def _min_eig(M):
    return np.linalg.eigvalsh(0.5 * (M + M.conj().T))[0]


# 1 ---------------------------------------------------------------------------


def test_criterion_1_metric_suite(report):
    rng = np.random.default_rng(1)
    n = 10_000
    slack = 1e-10
    worst = {"range": 0.0, "mult": 0.0, "ident": 0.0, "max": 0.0, "tri": 0.0, "tr": 0.0}
    for D in (2, 3, 4):
        for _ in range(n):
            X, Y, Z = _state(D, rng), _state(D, rng), _state(D, rng)
            mxy, myx = m_coeff(X, Y), m_coeff(Y, X)
            mxz, mzx = m_coeff(X, Z), m_coeff(Z, X)
            mzy, myz = m_coeff(Z, Y), m_coeff(Y, Z)
            # part 1
            worst["range"] = max(worst["range"], -mxy, mxy - 1)
            # part 2
            worst["mult"] = max(worst["mult"], mxz * mzy - mxy)
            # part 3: distinct states have product < 1; equal states give 1
            worst["ident"] = max(worst["ident"], mxy * myx - 1, abs(m_coeff(X, X) - 1) - slack)
            # part 4 through maximality: X - m Y >= 0 and X - (m + h) Y is not
            h = 1e-6
            worst["max"] = max(worst["max"], -_min_eig(X - mxy * Y))
            if mxy < 1 - h and _min_eig(X - (mxy + h) * Y) >= 0:
                worst["max"] = max(worst["max"], 1.0)
            # triangle inequality for d and the trace-norm lower bound
            dxy = (1 - mxy * myx) / (1 + mxy * myx)
            dxz = (1 - mxz * mzx) / (1 + mxz * mzx)
            dzy = (1 - mzy * myz) / (1 + mzy * myz)
            worst["tri"] = max(worst["tri"], dxy - dxz - dzy)
            worst["tr"] = max(worst["tr"], 0.5 * trace_norm(X - Y) - dxy)
        # part 4 both ways on structured pairs: kernel of X hit or avoided by Y
        for _ in range(n // 10):
            U = np.linalg.qr(rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D)))[0]
            r = int(rng.integers(1, D))
            X = U[:, :r] @ np.diag(rng.uniform(0.1, 1, r)) @ U[:, :r].conj().T
            X /= np.trace(X).real
            inside = U[:, :r] @ random_state(r, rng) @ U[:, :r].conj().T
            if m_coeff(X, random_state(D, rng)) != 0.0 or not m_coeff(X, inside) > 0:
                worst["max"] = max(worst["max"], 1.0)
    ok = all(v <= slack for v in worst.values())
    detail = f"{3 * n} triples, worst violations " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    report(1, ok, detail, 60)


# 2 ---------------------------------------------------------------------------


def test_criterion_2_endpoint_oracle(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    count = 0
    for D in (2, 3, 4):
        for _ in range(334):
            X, Y = _state(D, rng), _state(D, rng)
            worst = max(worst, abs(pmetric(X, Y).d - pmetric_endpoint_oracle(X, Y)))
            count += 1
    report(2, worst <= 1e-8, f"{count} pairs, max |d - d_oracle| = {worst:.2e}", 60)


# 3 ---------------------------------------------------------------------------


def test_criterion_3_contraction(report):
    rng = np.random.default_rng(3)
    worst_sub, worst_adj, count = -math.inf, 0.0, 0
    for D in (2, 3):
        done = 0
        while done < 50:
            phi, psi = random_cp_map(D, D * D, rng), random_cp_map(D, D * D, rng)
            if any(strict_positivity_certificate(f) is not StrictCertificate.CERTIFIED_STRICT
                   for f in (phi, psi)):
                continue
            c1 = contraction_estimate(phi, n_pairs=64).c_lower
            c2 = contraction_estimate(psi, n_pairs=64).c_lower
            c12 = contraction_estimate(compose(phi, psi), n_pairs=64).c_lower
            ca = contraction_estimate(adjoint(phi), n_pairs=64).c_lower
            worst_sub = max(worst_sub, c12 - c1 * c2)
            worst_adj = max(worst_adj, abs(c1 - ca))
            done += 1
            count += 2
    ok = worst_sub <= 5e-3 and worst_adj <= 2e-3
    report(3, ok, f"{count} strict maps, max c(ab)-c(a)c(b) = {worst_sub:.1e}, "
                  f"max |c - c*| = {worst_adj:.1e}", 120)


# 4 ---------------------------------------------------------------------------


def test_criterion_4_convergence(report):
    drv = ErgodicDriver.iid(2, 4, 7)
    Ns = list(range(2, 17))
    rows = convergence_table(drv, Ns, proxy_factor=2)
    slope, _ = log_linear_fit(Ns, [max(r[1], 1e-300) for r in rows])
    Z, Zp = limit_sequence(drv, Side.RIGHT), limit_sequence(drv, Side.LEFT)
    cov = max(max(covariance_residual(Z, n), covariance_residual(Zp, n)) for n in range(-10, 11))
    ok = slope < -0.1 and cov <= 1e-9
    report(4, ok, f"slope {slope:.3f} (< -0.1), covariance residual {cov:.1e} (<= 1e-9)", 60)


# 5 ---------------------------------------------------------------------------


def test_criterion_5_rank_one_rate(report):
    drv = ErgodicDriver.iid(2, 4, 7)
    gaps = list(range(2, 15))
    rows = rank_one_table(drv, 0, gaps)
    slope, _ = log_linear_fit(gaps, [r[1] for r in rows])
    mu = math.exp(slope)
    kappa = kappa_estimate(drv, 10, 16).kappa_hat
    ok = slope < 0 and mu < 1 and kappa / 2 <= mu <= 2 * kappa
    report(5, ok, f"mu_hat {mu:.4f}, kappa_hat {kappa:.4f}, band [{kappa / 2:.4f}, {2 * kappa:.4f}]", 300)


# 6 ---------------------------------------------------------------------------


def test_criterion_6_mps_oracle(report):
    rng = np.random.default_rng(6)
    worst, worst_norm = 0.0, 0.0
    n = 60
    for k in range(n):
        drv = ErgodicDriver.iid(2, 2, 100 + k, trace_preserving=bool(k % 2))
        L = int(rng.integers(2, 13))
        start = int(rng.integers(-5, 5))
        chain = MpsChain.from_driver(drv, start, start + L - 1)
        width = int(rng.integers(1, min(2, L) + 1))
        a = start + int(rng.integers(0, L - width + 1))
        O = LocalObservable((a, a + width - 1), _herm(2**width, rng))
        worst = max(worst, abs(finite_expectation(chain, O) - brute_force_expectation(chain, O)))
        _, n2 = brute_force_state(chain)
        tr, log_scale = normalization_log(chain)
        worst_norm = max(worst_norm, abs(n2 / (tr.real * math.exp(log_scale)) - 1))
    ok = worst <= 1e-8 and worst_norm <= 1e-9
    report(6, ok, f"{n} chains, max |finite - brute| = {worst:.1e}, N^2 relative gap {worst_norm:.1e}", 120)


# 7 ---------------------------------------------------------------------------


def test_criterion_7_gauge(report):
    rng = np.random.default_rng(7)
    tp = fp = inv = fac = 0.0
    for seed in range(4):
        drv = ErgodicDriver.iid(2, 2, 40 + seed, trace_preserving=False)
        Z, Zp = limit_sequence(drv, Side.RIGHT), limit_sequence(drv, Side.LEFT)
        g = gauge_fix(drv, Zp, -3, 12, Z)
        tp = max(tp, tilde_trace_defect(g))
        for k in range(-3, 13):
            fp = max(fp, np.abs(superop_apply(g.tilde_superop(k), g.tilde_z[k - 1]) - g.tilde_z[k]).max())
        chain = MpsChain.from_driver(drv, -3, 8)
        tchain = gauge_chain(chain, gauge_fix(drv, Zp, -3, 8, Z))
        for a in range(-3, 8):
            O = LocalObservable((a, a + 1), _herm(4, rng))
            inv = max(inv, abs(finite_expectation(chain, O) - finite_expectation(tchain, O)))
        for m, n in [(0, 0), (-2, 3), (1, 7)]:
            direct, tel, via = denominator_factorization(chain, Z, Zp, m, n)
            fac = max(fac, abs(direct - tel), abs(direct - via))
    ok = tp <= 1e-10 and fp <= 1e-9 and inv <= 1e-9 and fac <= 1e-9
    report(7, ok, f"TP defect {tp:.1e}, fixed point {fp:.1e}, gauge invariance {inv:.1e}, "
                  f"factorization {fac:.1e}", 60)


# 8 ---------------------------------------------------------------------------


def test_criterion_8_correlation_decay(report):
    drv = ErgodicDriver.iid(2, 2, 7, trace_preserving=False)
    Z, Zp = limit_sequence(drv, Side.RIGHT), limit_sequence(drv, Side.LEFT)
    g = gauge_fix(drv, Zp, 0, 14, Z)
    Zop = np.diag([1.0, -1.0])
    O1 = LocalObservable((0, 0), Zop)
    seps = list(range(1, 13))
    conn = [abs(correlation(g, O1, LocalObservable((s, s), Zop))[3]) for s in seps]
    # envelope: running maximum from the far end, so sign flips do not dip the fit
    env = np.maximum.accumulate(np.array(conn)[::-1])[::-1]
    slope, _ = log_linear_fit(seps, env)
    rate = math.exp(slope)

    # fixed strictly positive channel with a clear transfer gap, single-site O
    for seed in range(100):
        phi = random_channel(2, 2, np.random.default_rng(seed))
        if np.sort(np.abs(np.linalg.eigvals(superop_matrix(phi))))[-2] < 0.3:
            break
    fixed = ErgodicDriver.fixed(phi)
    Zf, Zpf = limit_sequence(fixed, Side.RIGHT), limit_sequence(fixed, Side.LEFT)
    O = LocalObservable((0, 0), _herm(2, np.random.default_rng(8)))
    W = thermo_expectation(gauge_fix(fixed, Zpf, 0, 0, Zf), O)
    gap14 = abs(W - brute_force_expectation(MpsChain.from_driver(fixed, -6, 7), O))
    ok = rate < 1 and gap14 <= 1e-4
    report(8, ok, f"envelope rate {rate:.3f} (< 1) over separations 1-12, "
                  f"|W - finite(N=14)| = {gap14:.1e}", 300)


# 9 ---------------------------------------------------------------------------


def _classical_perron(A):
    """Perron root and right/left vectors by power iteration on the primitive A."""
    D = A.shape[0]
    v, w = np.ones(D) / D, np.ones(D) / D
    for _ in range(20000):
        v2 = A @ v
        v2 /= v2.sum()
        w2 = A.T @ w
        w2 /= w2.sum()
        if np.abs(v2 - v).max() < 1e-15 and np.abs(w2 - w).max() < 1e-15:
            v, w = v2, w2
            break
        v, w = v2, w2
    return (A @ v).sum() / v.sum(), v, w


def test_criterion_9_hennion(report):
    rng = np.random.default_rng(9)
    worst_val, worst_vec = 0.0, 0.0
    n = 0
    while n < 120:
        D = int(rng.integers(2, 7))
        A = rng.uniform(0, 1, (D, D)) * (rng.uniform(size=(D, D)) < 0.5)
        A += np.roll(np.eye(D), 1, axis=1) * rng.uniform(0.2, 1)  # cycle: irreducible
        A += np.eye(D) * rng.uniform(0.2, 1)  # positive diagonal: aperiodic
        rho, v, w = _classical_perron(A)
        Phi = compose_window(ErgodicDriver.fixed(hennion_embed(A)), 0, 0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AssumptionWarning)
            right = perron_pair(Phi, Side.RIGHT)
            left = perron_pair(Phi, Side.LEFT)
        worst_val = max(worst_val, abs(math.exp(right.log_eigvalue) / rho - 1),
                        abs(math.exp(left.log_eigvalue) / rho - 1))
        worst_vec = max(worst_vec, np.abs(right.eigmatrix - np.diag(v)).max(),
                        np.abs(left.eigmatrix - np.diag(w)).max())
        n += 1
    ok = worst_val <= 1e-10 and worst_vec <= 1e-9
    report(9, ok, f"{n} matrices, eigenvalue rel. gap {worst_val:.1e}, eigenstate gap {worst_vec:.1e}", 30)


# 10 --------------------------------------------------------------------------


def test_criterion_10_determinism(report, tmp_path):
    configs = sorted(DEMOS.glob("*.toml"))
    mismatched = []
    for cfg in configs:
        outs = []
        for tag, threads in (("a", 1), ("b", 4), ("c", 1)):
            out = tmp_path / f"{cfg.stem}-{tag}"
            code = cli_run(cfg, str(out), threads=threads)
            outs.append((code, {p.name: p.read_bytes() for p in sorted(out.iterdir())}))
        if not outs[0] == outs[1] == outs[2]:
            mismatched.append(cfg.stem)
    ok = not mismatched and len(configs) >= 6
    detail = f"{len(configs)} configs x threads 1,4,1 byte-identical" if ok else f"mismatch: {mismatched}"
    report(10, ok, detail, None)
