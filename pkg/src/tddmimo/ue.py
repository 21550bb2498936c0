"""Terminal-side processing: effective-channel estimation, MRC and BER counting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .phy import bits_per_symbol, qam_demap

__all__ = [
    "EffectiveChannelEstimate",
    "MrcResult",
    "BerCount",
    "ERASURE_LEVEL",
    "dl_effective_channel_estimate",
    "mrc_detect",
    "mrc_decompose",
    "ber_count",
]

ERASURE_LEVEL = 1e-12


@dataclass(frozen=True)
class EffectiveChannelEstimate:
    """Scalar effective channel per user and sub-band, ``h_tilde`` (K, S)."""

    per_subband: np.ndarray

    @property
    def per_subcarrier(self) -> np.ndarray:
        """Zero-hold expansion to ``(K, N_sc)``."""
        K = self.per_subband.shape[0]
        return np.repeat(self.per_subband, K, axis=1)


def dl_effective_channel_estimate(rx_pilot, pilot) -> EffectiveChannelEstimate:
    """LS estimate ``rx / p`` on every user's own pilot subcarrier.

    Both arguments have shape ``(K, S)``: entry ``(k, i)`` is user ``k``'s
    pilot subcarrier in sub-band ``i``.
    """
    p = np.asarray(pilot)
    if np.any(np.abs(np.abs(p) - 1.0) > 1e-9):
        raise ValueError("downlink pilots must have unit modulus")
    return EffectiveChannelEstimate(np.asarray(rx_pilot) / p)


class MrcResult(NamedTuple):
    soft: np.ndarray  # h_tilde^* rx
    symbols: np.ndarray  # soft / |h_tilde|^2
    bits: np.ndarray
    erased_bits: np.ndarray  # bool, same length as bits


def mrc_detect(rx_data, h_tilde, order) -> MrcResult:
    """Maximal-ratio combining of one user's data followed by hard decisions.

    `rx_data` and `h_tilde` broadcast against each other (per-subcarrier
    effective channel). Subcarriers with ``|h_tilde| < 1e-12`` are erased.
    """
    y = np.asarray(rx_data)
    h = np.broadcast_to(np.asarray(h_tilde), y.shape)
    soft = h.conj() * y
    gain = np.abs(h) ** 2
    erased = np.abs(h) < ERASURE_LEVEL
    sym = np.where(erased, 0.0, soft / np.where(erased, 1.0, gain))
    q = bits_per_symbol(order)
    bits = qam_demap(sym.ravel(), order)
    erased_bits = np.repeat(erased.ravel(), q)
    return MrcResult(soft, sym, bits, erased_bits)


def mrc_decompose(h_row_A, x, k: int):
    """Split user `k`'s MRC output into desired signal and inter-user leakage.

    `h_row_A` is the user's composite downlink row ``h_k^D A`` (length K),
    so that the noiseless received sample is ``h_row_A @ x``.
    Returns ``(desired, leakage)`` with ``|h a_k|^2 x_k`` and the rest.
    """
    g = np.asarray(h_row_A)
    x = np.asarray(x)
    h_tilde = g[k]
    desired = np.abs(h_tilde) ** 2 * x[k]
    others = np.delete(np.arange(g.size), k)
    leakage = h_tilde.conj() * (g[others] @ x[others])
    return desired, leakage


class BerCount(NamedTuple):
    errors: float
    total: int
    ber: float


def ber_count(tx_bits, rx_bits, erased=None) -> BerCount:
    """Hamming-distance error ratio; every erased bit counts as half an error."""
    tx = np.asarray(tx_bits).ravel()
    rx = np.asarray(rx_bits).ravel()
    if tx.size != rx.size:
        raise ValueError(f"length mismatch: {tx.size} vs {rx.size} bits")
    wrong = tx != rx
    if erased is not None:
        er = np.asarray(erased, dtype=bool).ravel()
        errors = float(np.count_nonzero(wrong & ~er)) + 0.5 * np.count_nonzero(er)
    else:
        errors = float(np.count_nonzero(wrong))
    total = int(tx.size)
    return BerCount(errors, total, errors / total if total else 0.0)
