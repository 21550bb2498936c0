import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tddmimo.numerics import (RankDeficiencyError, extended_channel_matrix, gram_schmidt_qr,
                              lmmse_weights, unitary_dft)

from conftest import crandn


def test_qr_of_stacked_identities():
    qr = gram_schmidt_qr(extended_channel_matrix(np.eye(2), 1.0))
    assert np.allclose(qr.Q, np.vstack([np.eye(2), np.eye(2)]) / np.sqrt(2), atol=1e-15)
    assert np.allclose(qr.R, np.sqrt(2) * np.eye(2), atol=1e-15)


def test_orthogonal_columns_give_diagonal_r(rng):
    Q, _ = np.linalg.qr(crandn(rng, 6, 3))
    B = Q * np.array([2.0, 0.5, 3.0])
    R = gram_schmidt_qr(B, num_top_rows=6).R
    assert np.allclose(R, np.diag([2.0, 0.5, 3.0]), atol=1e-12)


def test_random_reconstruction(rng):
    B = crandn(rng, 6, 3)
    qr = gram_schmidt_qr(B)
    assert np.allclose(qr.Q @ qr.R, B, atol=1e-12)
    assert np.linalg.norm(qr.Q.conj().T @ qr.Q - np.eye(3)) <= 1e-10
    assert np.all(np.tril(qr.R, -1) == 0)
    d = np.diagonal(qr.R)
    assert np.all(d.real > 0) and np.all(d.imag == 0)


def test_rank_deficiency_is_reported(rng):
    h = crandn(rng, 5, 1)
    with pytest.raises(RankDeficiencyError):
        gram_schmidt_qr(np.hstack([h, 2 * h]))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 40), st.integers(1, 8), st.floats(0.01, 1.0), st.integers(0, 2 ** 31))
def test_extended_qr_identities(M, K, sigma, seed):
    K = min(K, M)
    H = crandn(np.random.default_rng(seed), M, K)
    qr = gram_schmidt_qr(extended_channel_matrix(H, sigma), num_top_rows=M)
    assert np.linalg.norm(qr.Q.conj().T @ qr.Q - np.eye(K)) <= 1e-10
    # Q2 R = sigma I and R^-1 = Q2 / sigma
    assert np.abs(qr.Q2 @ qr.R - sigma * np.eye(K)).max() <= 1e-10
    assert np.abs(qr.R @ qr.Q2 / sigma - np.eye(K)).max() <= 1e-10


def test_lmmse_identity_channel():
    assert np.allclose(lmmse_weights(np.eye(4), 1.0), 0.5 * np.eye(4), atol=1e-15)


def test_lmmse_unitary_inverse_limit(rng):
    U, _ = np.linalg.qr(crandn(rng, 5, 5))
    W = lmmse_weights(U, 1e-6)
    assert np.abs(W - U.conj().T).max() <= 1e-4


def test_lmmse_qr_matches_direct_large(rng):
    H = crandn(rng, 128, 12)
    a = lmmse_weights(H, 0.5, "qr")
    b = lmmse_weights(H, 0.5, "direct")
    assert np.linalg.norm(a - b) / np.linalg.norm(b) <= 1e-9


def test_lmmse_batched(rng):
    H = crandn(rng, 7, 16, 3)
    W = lmmse_weights(H, 0.3)
    for i in range(7):
        assert np.allclose(W[i], lmmse_weights(H[i], 0.3, "direct"), atol=1e-12)


def test_lmmse_errors(rng):
    with pytest.raises(ValueError):
        lmmse_weights(np.eye(2), 0.0, "qr")
    h = crandn(rng, 4, 1)
    with pytest.raises(np.linalg.LinAlgError):
        lmmse_weights(np.hstack([h, h]), 0.0, "direct")
    with pytest.raises(ValueError):
        lmmse_weights(np.eye(2), 1.0, "cholesky")


def test_dft_impulse_is_flat():
    x = np.zeros(64, complex)
    x[0] = 1
    assert np.allclose(np.abs(unitary_dft(x)), 1 / 8, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 11), st.integers(0, 2 ** 31))
def test_dft_round_trip_and_parseval(log_n, seed):
    x = crandn(np.random.default_rng(seed), 2 ** log_n)
    X = unitary_dft(x, "forward")
    assert np.abs(unitary_dft(X, "inverse") - x).max() <= 1e-12
    assert abs(np.vdot(x, x).real - np.vdot(X, X).real) <= 1e-12 * max(1.0, np.vdot(x, x).real)


def test_dft_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        unitary_dft(np.zeros(100))
    with pytest.raises(ValueError):
        unitary_dft(np.zeros(8), "sideways")
