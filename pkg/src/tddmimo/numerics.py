"""Complex linear-algebra kernels used by the base station.

The LMMSE equalizer ``(H^H H + s^2 I)^-1 H^H`` is computed without an explicit
inverse: the extended matrix ``B = [H; s I]`` is factored as ``B = Q R`` by
modified Gram-Schmidt and the weights follow as ``Q2 Q1^H / s``, where ``Q1`` is
the top ``M x K`` block of ``Q`` and ``Q2`` the bottom ``K x K`` block.

All functions broadcast over leading axes, so a stack of 100 sub-band
matrices is factored in one call.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "RankDeficiencyError",
    "QrPair",
    "extended_channel_matrix",
    "gram_schmidt_qr",
    "lmmse_weights",
    "unitary_dft",
]


class RankDeficiencyError(np.linalg.LinAlgError):
    """The matrix handed to the QR factorization is (numerically) rank deficient."""


class QrPair(NamedTuple):
    Q: np.ndarray
    R: np.ndarray
    num_top_rows: int

    @property
    def Q1(self) -> np.ndarray:
        return self.Q[..., : self.num_top_rows, :]

    @property
    def Q2(self) -> np.ndarray:
        return self.Q[..., self.num_top_rows:, :]


def extended_channel_matrix(Hhat, sigma: float) -> np.ndarray:
    """Stack ``sigma * I_K`` under the ``M x K`` channel estimate."""
    H = np.asarray(Hhat, dtype=np.complex128)
    K = H.shape[-1]
    bottom = np.broadcast_to(sigma * np.eye(K, dtype=np.complex128), H.shape[:-2] + (K, K))
    return np.concatenate([H, bottom], axis=-2)


def gram_schmidt_qr(B, num_top_rows: int | None = None, rtol: float = 1e-12) -> QrPair:
    """Thin QR factorization by modified Gram-Schmidt.

    Parameters
    ----------
    B : (..., n, K) complex array
        Matrix (or stack of matrices) with full column rank.
    num_top_rows : int, optional
        Row count of the ``Q1`` block; defaults to ``n - K`` which matches
        the extended channel matrix layout.
    rtol : float
        A column whose residual norm falls below ``rtol`` times its original
        norm is reported as rank deficient.

    Returns
    -------
    QrPair
        ``Q`` with orthonormal columns and upper-triangular ``R`` with a real,
        positive diagonal.
    """
    Q = np.array(B, dtype=np.complex128, copy=True)
    n, K = Q.shape[-2:]
    if num_top_rows is None:
        num_top_rows = n - K
    R = np.zeros(Q.shape[:-2] + (K, K), dtype=np.complex128)
    col_norms = np.linalg.norm(Q, axis=-2)
    for k in range(K):
        rkk = np.linalg.norm(Q[..., :, k], axis=-1)
        bad = rkk <= rtol * np.maximum(col_norms[..., k], np.finfo(float).tiny)
        if np.any(bad):
            raise RankDeficiencyError(f"column {k} is linearly dependent on earlier columns")
        R[..., k, k] = rkk
        Q[..., :, k] /= rkk[..., None]
        if k + 1 < K:
            qk = Q[..., :, k]
            proj = np.einsum("...i,...ij->...j", qk.conj(), Q[..., :, k + 1:])
            R[..., k, k + 1:] = proj
            Q[..., :, k + 1:] -= qk[..., :, None] * proj[..., None, :]
    return QrPair(Q, R, num_top_rows)


def lmmse_weights(Hhat, sigma: float, mode: str = "qr") -> np.ndarray:
    """LMMSE equalizer ``W`` (K x M) for channel estimate(s) `Hhat` (M x K).

    ``mode="qr"`` uses the extended-matrix factorization and needs
    ``sigma > 0``; ``mode="direct"`` solves the regularized normal equations
    explicitly and serves as the reference.
    """
    H = np.asarray(Hhat, dtype=np.complex128)
    if mode == "qr":
        if not sigma > 0:
            raise ValueError("qr mode needs sigma > 0")
        qr = gram_schmidt_qr(extended_channel_matrix(H, sigma), num_top_rows=H.shape[-2])
        return qr.Q2 @ np.swapaxes(qr.Q1, -1, -2).conj() / sigma
    if mode == "direct":
        K = H.shape[-1]
        Hh = np.swapaxes(H, -1, -2).conj()
        gram = Hh @ H + (sigma ** 2) * np.eye(K)
        msg = "singular normal matrix (sigma = 0 with rank-deficient channel)"
        # LU does not always trip on a numerically singular matrix
        if np.any(np.linalg.cond(gram) > 1.0 / np.finfo(float).eps):
            raise np.linalg.LinAlgError(msg)
        try:
            return np.linalg.solve(gram, Hh)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(msg) from exc
    raise ValueError(f"unknown mode {mode!r}")


def unitary_dft(x, direction: str = "forward") -> np.ndarray:
    """Unitary DFT along the last axis (length must be a power of two)."""
    arr = np.asarray(x)
    n = arr.shape[-1]
    if n <= 0 or n & (n - 1):
        raise ValueError(f"transform length {n} is not a power of two")
    if direction == "forward":
        return np.fft.fft(arr, axis=-1, norm="ortho")
    if direction == "inverse":
        return np.fft.ifft(arr, axis=-1, norm="ortho")
    raise ValueError(f"unknown direction {direction!r}")
