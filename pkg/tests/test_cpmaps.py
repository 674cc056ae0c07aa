import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergodic_channels.cpmaps import (
    CPMap,
    StrictCertificate,
    adjoint,
    amplitude_damping,
    apply,
    choi_matrix,
    compose,
    depolarizing_map,
    hennion_embed,
    identity_map,
    is_trace_preserving,
    kernel_condition_check,
    kraus_from_json,
    kraus_from_superop,
    kraus_to_json,
    load_kraus,
    random_channel,
    random_cp_map,
    save_kraus,
    strict_positivity_certificate,
    superop_apply,
    superop_matrix,
    unitary_map,
    unvec,
    vec,
)
from ergodic_channels.matcore import (
    DimensionError,
    PSDClass,
    classify_psd,
    hermiticity_defect,
    hs_inner,
    random_state,
)
from helpers import maxabs, rand_herm, rand_matrix, rand_unitary


def _basis(D):
    for a in range(D):
        for b in range(D):
            E = np.zeros((D, D), dtype=complex)
            E[a, b] = 1
            yield E


def test_apply_examples(rng):
    M = rand_matrix(3, rng)
    assert maxabs(apply(identity_map(3), M) - M) == 0
    out = apply(depolarizing_map(3), M)
    assert maxabs(out - np.trace(M) * np.eye(3) / 3) < 1e-14
    U = rand_unitary(3, rng)
    rho = random_state(3, rng)
    assert maxabs(apply(unitary_map(U), rho) - U @ rho @ U.conj().T) < 1e-14
    with pytest.raises(DimensionError):
        apply(identity_map(2), np.eye(3))


def test_adjoint(rng):
    U = rand_unitary(2, rng)
    assert maxabs(adjoint(unitary_map(U)).kraus[0] - U.conj().T) == 0
    ch = random_channel(3, 4, rng)
    assert maxabs(apply(adjoint(ch), np.eye(3)) - np.eye(3)) < 1e-12
    phi = random_cp_map(3, 2, rng)
    for _ in range(20):
        M, N = rand_matrix(3, rng), rand_matrix(3, rng)
        assert abs(hs_inner(N, apply(phi, M)) - hs_inner(apply(adjoint(phi), N), M)) < 1e-12
    aa = adjoint(adjoint(phi))
    for E in _basis(3):
        assert maxabs(apply(aa, E) - apply(phi, E)) < 1e-12


def test_compose(rng):
    phi = random_cp_map(2, 3, rng)
    idc = compose(identity_map(2), phi)
    for E in _basis(2):
        assert maxabs(apply(idc, E) - apply(phi, E)) < 1e-14
    U, V = rand_unitary(2, rng), rand_unitary(2, rng)
    uv = compose(unitary_map(U), unitary_map(V))
    assert uv.rank == 1 and maxabs(uv.kraus[0] - U @ V) < 1e-14
    p2, p1 = random_cp_map(3, 2, rng), random_cp_map(3, 4, rng)
    c = compose(p2, p1)
    assert c.rank == 8
    M = rand_matrix(3, rng)
    assert maxabs(apply(c, M) - apply(p2, apply(p1, M))) < 1e-12
    assert maxabs(superop_matrix(c) - superop_matrix(p2) @ superop_matrix(p1)) < 1e-10


def test_trace_preserving(rng):
    assert is_trace_preserving(unitary_map(rand_unitary(3, rng)))
    assert not is_trace_preserving(CPMap(np.array([np.eye(2), np.eye(2)])))
    assert is_trace_preserving(amplitude_damping(0.3))
    assert is_trace_preserving(random_channel(4, 3, rng))


def test_superop_examples(rng):
    assert maxabs(superop_matrix(identity_map(3)) - np.eye(9)) == 0
    U = rand_unitary(3, rng)
    S = superop_matrix(unitary_map(U))
    assert maxabs(S - np.kron(U.conj(), U)) < 1e-14
    phi = random_cp_map(3, 4, rng)
    S = superop_matrix(phi)
    assert abs(np.trace(S) - sum(abs(np.trace(B)) ** 2 for B in phi.kraus)) < 1e-12
    direct = sum(np.trace(E.conj().T @ apply(phi, E)) for E in _basis(3))
    assert abs(np.trace(S) - direct) < 1e-12
    for E in _basis(3):
        assert maxabs(unvec(S @ vec(E), 3) - apply(phi, E)) < 1e-12
    stack = np.array([rand_matrix(3, rng) for _ in range(5)])
    assert maxabs(superop_apply(S, stack) - np.array([apply(phi, M) for M in stack])) < 1e-12


def test_choi_examples(rng):
    C = choi_matrix(identity_map(2))
    omega = np.zeros(4)
    omega[[0, 3]] = 1
    assert maxabs(C - np.outer(omega, omega)) < 1e-14
    assert classify_psd(C) is PSDClass.PSD_SINGULAR
    C = choi_matrix(depolarizing_map(3))
    assert maxabs(C - np.eye(9) / 3) < 1e-14
    assert classify_psd(choi_matrix(random_cp_map(3, 9, rng))) is PSDClass.PD


def test_kraus_from_superop_is_same_channel(rng):
    phi = random_cp_map(3, 5, rng)
    psi = kraus_from_superop(superop_matrix(phi))
    assert psi.rank == 5
    assert maxabs(superop_matrix(psi) - superop_matrix(phi)) < 1e-12


def test_certificates(rng):
    assert strict_positivity_certificate(identity_map(2)) is StrictCertificate.CERTIFIED_NOT_STRICT
    assert strict_positivity_certificate(depolarizing_map(3)) is StrictCertificate.CERTIFIED_STRICT
    # channel M -> P M P + S M S^dagger with P = e1 e1^T, S = e1 e2^T
    P = np.diag([1.0, 0.0])
    S = np.array([[0.0, 1.0], [0.0, 0.0]])
    phi = CPMap(np.array([P, S]))
    assert is_trace_preserving(phi)
    assert strict_positivity_certificate(phi) is StrictCertificate.CERTIFIED_NOT_STRICT
    assert maxabs(apply(adjoint(phi), np.eye(2) - P)) == 0
    assert not kernel_condition_check(phi)
    assert strict_positivity_certificate(amplitude_damping(0.3)) is StrictCertificate.CERTIFIED_NOT_STRICT
    with pytest.raises(ValueError):
        strict_positivity_certificate(identity_map(2), n_probes=0)


def test_certificate_undecided():
    # Pauli twirl without the identity term: phi(x x^+) = 2 I - x x^+ is PD for
    # every x, yet the Choi matrix has rank 3
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Y = np.array([[0, -1j], [1j, 0]])
    Z = np.diag([1.0, -1.0]).astype(complex)
    phi = CPMap(np.array([X, Y, Z]))
    assert classify_psd(choi_matrix(phi)) is PSDClass.PSD_SINGULAR
    assert strict_positivity_certificate(phi) is StrictCertificate.UNDECIDED


def test_kernel_condition():
    assert kernel_condition_check(unitary_map(np.eye(3)))
    assert not kernel_condition_check(CPMap(np.diag([1.0, 0.0])))
    assert kernel_condition_check(depolarizing_map(2))


def test_hennion():
    M = np.array([[0.3, 0.2 + 0.1j], [0.2 - 0.1j, 0.7]])
    assert maxabs(apply(hennion_embed(np.eye(2)), M) - np.diag(np.diag(M))) < 1e-15
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert maxabs(apply(hennion_embed(A), np.eye(2) / 2) - np.diag([1.5, 1.5])) < 1e-15
    with pytest.raises(ValueError):
        hennion_embed(np.array([[1.0, -0.1], [0.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(D=st.integers(1, 4), d=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_positivity_and_hermiticity(D, d, seed):
    rng = np.random.default_rng(seed)
    phi = random_cp_map(D, d, rng)
    H = rand_herm(D, rng)
    assert hermiticity_defect(apply(phi, H)) <= 1e-12
    rho = random_state(D, rng, rank=int(rng.integers(1, D + 1)))
    assert classify_psd(apply(phi, rho)) is not PSDClass.INDEFINITE


@settings(max_examples=40, deadline=None)
@given(D=st.integers(2, 4), seed=st.integers(0, 2**32 - 1))
def test_kernel_condition_keeps_interior(D, seed):
    rng = np.random.default_rng(seed)
    phi = random_cp_map(D, int(rng.integers(D, D * D + 1)), rng)
    if kernel_condition_check(phi):
        assert classify_psd(apply(phi, random_state(D, rng))) is PSDClass.PD


@settings(max_examples=30, deadline=None)
@given(D=st.integers(2, 4), seed=st.integers(0, 2**32 - 1))
def test_strict_absorbs_kernel_valid(D, seed):
    rng = np.random.default_rng(seed)
    strict = random_cp_map(D, D * D, rng)
    other = unitary_map(rand_unitary(D, rng))
    assert strict_positivity_certificate(strict) is StrictCertificate.CERTIFIED_STRICT
    assert kernel_condition_check(other)
    for c in (compose(strict, other), compose(other, strict)):
        X = rng.standard_normal((100, D)) + 1j * rng.standard_normal((100, D))
        for x in X:
            img = apply(c, np.outer(x, x.conj()) / np.vdot(x, x).real)
            assert classify_psd(img) is PSDClass.PD


def test_predicates_ignore_kraus_representation(rng):
    phi = random_cp_map(2, 3, rng)
    V = rand_unitary(3, rng)
    mixed = CPMap(np.einsum("ij,jab->iab", V, phi.kraus))
    assert maxabs(superop_matrix(mixed) - superop_matrix(phi)) < 1e-12
    assert strict_positivity_certificate(mixed) is strict_positivity_certificate(phi)
    assert kernel_condition_check(mixed) == kernel_condition_check(phi)


def test_json_roundtrip(tmp_path, rng):
    phi = random_cp_map(3, 2, rng)
    path = tmp_path / "k.json"
    save_kraus(phi, path)
    back = load_kraus(path)
    assert np.array_equal(back.kraus, phi.kraus)
    obj = json.loads(path.read_text())
    assert obj["dim"] == 3 and len(obj["kraus"]) == 2 and len(obj["kraus"][0]) == 9
    assert obj["kraus"][0][1] == [phi.kraus[0, 0, 1].real, phi.kraus[0, 0, 1].imag]
    assert np.array_equal(kraus_from_json(kraus_to_json(phi)).kraus, phi.kraus)
    with pytest.raises(DimensionError):
        kraus_from_json({"dim": 2, "kraus": [[[1, 0]] * 3]})
