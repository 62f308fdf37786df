"""Oracle and property tests for the linear-algebra substrate."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covtrace.qlinalg import (
    DensityOperator,
    OverlapMatrix,
    StateVector,
    evolve,
    kron,
    partial_trace,
    schmidt,
    shannon_entropy,
    von_neumann_entropy,
)

# -0.3*log2(0.3) - 0.7*log2(0.7), evaluated directly
ENTROPY_03_07 = 0.8812908992306927


def random_state(rng, dims) -> StateVector:
    n = int(np.prod(dims))
    amps = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return StateVector(amps, tuple(dims)).normalize()


def random_hermitian(rng, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a + a.conj().T) / 2


def haar_unitary(rng, n: int) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


# --- kron ---------------------------------------------------------------


def test_kron_basis_product():
    a = StateVector([1, 0], (2,))
    b = StateVector([1, 0], (2,))
    out = kron(a, b)
    assert out.dims == (2, 2)
    np.testing.assert_allclose(out.amps, [1, 0, 0, 0])


def test_kron_identity_matrices():
    np.testing.assert_allclose(kron(np.eye(2), np.eye(2)), np.eye(4))


def test_kron_against_index_loop_oracle():
    rng = np.random.default_rng(7)
    a = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    b = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    expected = np.zeros(6, dtype=complex)
    for i in range(2):
        for j in range(3):
            expected[i * 3 + j] = a[i] * b[j]
    out = kron(StateVector(a, (2,)), StateVector(b, (3,)))
    np.testing.assert_allclose(out.amps, expected, atol=1e-15)
    assert out.dims == (2, 3)


def test_kron_rejects_mixed_kinds():
    with pytest.raises(TypeError):
        kron(StateVector([1, 0], (2,)), np.eye(2))


# --- partial_trace -------------------------------------------------------


def test_partial_trace_bell_state():
    bell = StateVector([1, 0, 0, 1], (2, 2)).normalize()
    rho = partial_trace(bell.density(), keep={0})
    np.testing.assert_allclose(rho.mat, np.eye(2) / 2, atol=1e-12)


def test_partial_trace_product_state():
    rng = np.random.default_rng(3)
    psi = random_state(rng, (2,))
    phi = random_state(rng, (3,))
    rho = partial_trace(kron(psi, phi).density(), keep={0})
    np.testing.assert_allclose(rho.mat, np.outer(psi.amps, psi.amps.conj()), atol=1e-12)


def test_partial_trace_against_summation_oracle():
    rng = np.random.default_rng(11)
    dims = (2, 2, 3)
    psi = random_state(rng, dims)
    full = psi.density().mat
    d0, d1, d2 = dims
    expected = np.zeros((d1, d1), dtype=complex)
    for a in range(d1):
        for b in range(d1):
            for i in range(d0):
                for k in range(d2):
                    row = (i * d1 + a) * d2 + k
                    col = (i * d1 + b) * d2 + k
                    expected[a, b] += full[row, col]
    got = partial_trace(psi.density(), keep={1})
    assert np.linalg.norm(got.mat - expected) < 1e-12


def test_partial_trace_invalid_factor():
    rho = StateVector([1, 0, 0, 0], (2, 2)).density()
    with pytest.raises(ValueError):
        partial_trace(rho, keep={2})
    with pytest.raises(ValueError):
        partial_trace(rho, keep=set())


def test_partial_trace_preserves_trace_and_hermiticity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        dims = tuple(rng.integers(2, 4, size=rng.integers(2, 4)))
        psi = random_state(rng, dims)
        keep = {int(rng.integers(0, len(dims)))}
        rho = partial_trace(psi.density(), keep)
        assert abs(np.trace(rho.mat) - 1.0) < 1e-10
        assert np.linalg.norm(rho.mat - rho.mat.conj().T) < 1e-10


# --- schmidt -------------------------------------------------------------


def test_schmidt_product_state():
    rng = np.random.default_rng(13)
    psi = kron(random_state(rng, (2,)), random_state(rng, (3,)))
    dec = schmidt(psi, cut={0})
    assert dec.coefficients.size == 1
    assert abs(dec.coefficients[0] - 1.0) < 1e-12


def test_schmidt_bell_state():
    bell = StateVector([1, 0, 0, 1], (2, 2)).normalize()
    dec = schmidt(bell, cut={0})
    np.testing.assert_allclose(dec.coefficients, [1 / np.sqrt(2)] * 2, atol=1e-12)


def test_schmidt_random_4x4_reconstruction_and_eigenvalues():
    rng = np.random.default_rng(17)
    psi = random_state(rng, (4, 4))
    dec = schmidt(psi, cut={0})
    assert np.linalg.norm(dec.reconstruct() - psi.amps) < 1e-10
    evals = np.sort(np.linalg.eigvalsh(partial_trace(psi.density(), {0}).mat))[::-1]
    lam2 = np.zeros(4)
    lam2[: dec.coefficients.size] = dec.coefficients**2
    np.testing.assert_allclose(lam2, evals, atol=1e-9)


def test_schmidt_squared_matches_both_reductions():
    rng = np.random.default_rng(19)
    for _ in range(10):
        psi = random_state(rng, (3, 4))
        dec = schmidt(psi, cut={0})
        for keep in ({0}, {1}):
            rho = partial_trace(psi.density(), keep)
            evals = np.sort(np.linalg.eigvalsh(rho.mat))[::-1][: dec.coefficients.size]
            np.testing.assert_allclose(dec.coefficients**2, evals, atol=1e-9)


def test_bipartite_reduction_entropies_equal():
    rng = np.random.default_rng(23)
    for _ in range(10):
        psi = random_state(rng, (2, 5))
        s0 = von_neumann_entropy(partial_trace(psi.density(), {0}))
        s1 = von_neumann_entropy(partial_trace(psi.density(), {1}))
        assert abs(s0 - s1) < 1e-9


# --- entropies -----------------------------------------------------------


def test_von_neumann_entropy_maximally_mixed():
    rho = DensityOperator(np.eye(2) / 2, (2,))
    assert abs(von_neumann_entropy(rho) - 1.0) < 1e-12


def test_von_neumann_entropy_pure_state():
    rho = StateVector([1, 0], (2,)).density()
    assert von_neumann_entropy(rho) < 1e-12


def test_von_neumann_entropy_diag_03_07():
    rho = DensityOperator(np.diag([0.3, 0.7]).astype(complex), (2,))
    assert abs(von_neumann_entropy(rho) - ENTROPY_03_07) < 1e-12


def test_shannon_entropy_values():
    assert shannon_entropy([1.0, 0.0]) == 0.0
    assert abs(shannon_entropy([0.5, 0.5]) - 1.0) < 1e-12
    assert abs(shannon_entropy([0.3, 0.7]) - ENTROPY_03_07) < 1e-12


def test_shannon_entropy_rejects_unnormalized():
    with pytest.raises(ValueError):
        shannon_entropy([0.5, 0.6])
    with pytest.raises(ValueError):
        shannon_entropy([1.5, -0.5])


@given(st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=1, max_size=8))
@settings(max_examples=200, deadline=None)
def test_vn_entropy_of_diagonal_matches_shannon(weights):
    p = np.asarray(weights) / np.sum(weights)
    rho = DensityOperator(np.diag(p).astype(complex), (p.size,))
    assert abs(von_neumann_entropy(rho) - shannon_entropy(p)) < 1e-10


# --- evolve --------------------------------------------------------------


def expm_taylor(a: np.ndarray) -> np.ndarray:
    """Scaled-and-squared Taylor series, independent of eigendecomposition."""
    norm = float(np.linalg.norm(a, ord=np.inf))
    s = max(0, int(np.ceil(np.log2(max(norm, 1e-30)))) + 1)
    x = a / (2**s)
    term = np.eye(a.shape[0], dtype=complex)
    out = term.copy()
    for k in range(1, 32):
        term = term @ x / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def test_evolve_zero_hamiltonian():
    np.testing.assert_allclose(evolve(np.zeros((3, 3)), 2.7), np.eye(3), atol=1e-12)


def test_evolve_diagonal_phase():
    omega = 1.7
    u = evolve(np.diag([0.0, omega]), np.pi / omega)
    np.testing.assert_allclose(u, np.diag([1.0, -1.0]), atol=1e-12)


def test_evolve_against_taylor_oracle():
    rng = np.random.default_rng(29)
    h = random_hermitian(rng, 8)
    t = 0.83
    assert np.linalg.norm(evolve(h, t) - expm_taylor(-1j * h * t)) < 1e-8


def test_evolve_rejects_non_hermitian():
    with pytest.raises(ValueError):
        evolve(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)


def test_evolve_inverse_property():
    rng = np.random.default_rng(31)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        h = random_hermitian(rng, n)
        t = float(rng.uniform(-2, 2))
        u = evolve(h, t) @ evolve(h, -t)
        assert np.linalg.norm(u - np.eye(n)) < 1e-9


# --- type invariants ------------------------------------------------------


def test_state_vector_validation():
    with pytest.raises(ValueError):
        StateVector([1, 0, 0], (2,))
    with pytest.raises(ValueError):
        StateVector([], (0,))
    psi = StateVector([3, 4], (2,)).normalize()
    assert abs(psi.norm - 1.0) < 1e-12


def test_density_operator_validation():
    with pytest.raises(ValueError):
        DensityOperator(np.array([[0.5, 0.1], [0.3, 0.5]]), (2,))  # not Hermitian
    with pytest.raises(ValueError):
        DensityOperator(np.eye(2), (2,))  # trace 2
    with pytest.raises(ValueError):
        DensityOperator(np.diag([1.5, -0.5]).astype(complex), (2,))  # not PSD


def test_overlap_matrix_validation_and_stochasticity():
    with pytest.raises(ValueError):
        OverlapMatrix(np.array([[1, 1], [0, 1]], dtype=complex))
    rng = np.random.default_rng(37)
    for n in (2, 3, 5):
        m = OverlapMatrix(haar_unitary(rng, n))
        t = m.stochastic()
        np.testing.assert_allclose(t.sum(axis=0), np.ones(n), atol=1e-10)
        np.testing.assert_allclose(t.sum(axis=1), np.ones(n), atol=1e-10)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=60, deadline=None)
def test_haar_overlap_always_doubly_stochastic(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    t = OverlapMatrix(haar_unitary(rng, n)).stochastic()
    assert np.abs(t.sum(axis=0) - 1).max() < 1e-10
    assert np.abs(t.sum(axis=1) - 1).max() < 1e-10
