"""Multipath channels, transceiver mismatch and signal propagation.

The over-the-air channel is a tapped delay line per (BS antenna, user) link:
``num_taps`` Rayleigh taps on an integer-sample delay grid with an
exponentially decaying power-delay profile of unit total energy. Delays are
shared by all antennas of one user (planar wavefront). The downlink sees the
transpose of the uplink channel; reciprocity is broken only by the
transceiver mismatch coefficients.

Unit SNR convention: a unit-power symbol on one subcarrier arrives at one BS
antenna with average power 1, so ``SNR = 1 / sigma2`` per subcarrier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sysconfig import SystemConfig, signed_bins

__all__ = [
    "NoiseSpec",
    "ChannelRealization",
    "MismatchProfile",
    "CouplingChannel",
    "UeInterference",
    "draw_channel",
    "freq_response",
    "draw_mismatch",
    "draw_coupling",
    "uplink_matrix",
    "downlink_matrix",
    "propagate_uplink",
    "propagate_downlink",
    "propagate_uplink_freq",
    "propagate_downlink_freq",
    "awgn",
    "sound_bs_pair",
    "sound_round",
    "save_channel",
    "load_channel",
]


@dataclass(frozen=True)
class NoiseSpec:
    sigma2: float = 0.0

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("noise variance must be non-negative")

    @classmethod
    def from_snr_db(cls, snr_db: float) -> "NoiseSpec":
        return cls(10.0 ** (-snr_db / 10.0))

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))


def awgn(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian noise of variance `sigma2`."""
    if sigma2 == 0:
        return np.zeros(shape, dtype=np.complex128)
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class ChannelRealization:
    """Tap gains ``(M, K, L)`` and integer delays ``(K, L)`` in samples."""

    gains: np.ndarray
    delays: np.ndarray
    seed: int | None = None
    pdp: np.ndarray | None = None

    @property
    def num_antennas(self) -> int:
        return self.gains.shape[0]

    @property
    def num_users(self) -> int:
        return self.gains.shape[1]

    @property
    def max_delay(self) -> int:
        return int(self.delays.max())


def tap_delays(cfg: SystemConfig) -> np.ndarray:
    """Integer delay grid (one sample spacing) kept strictly inside the CP."""
    limit = min(cfg.cp_lengths) - 1
    return np.minimum(np.arange(cfg.num_taps), limit)


def power_delay_profile(cfg: SystemConfig) -> np.ndarray:
    p = np.exp(-np.arange(cfg.num_taps) / cfg.pdp_decay_samples)
    return p / p.sum()


def draw_channel(seed, cfg: SystemConfig) -> ChannelRealization:
    """Draw i.i.d. Rayleigh tap gains for every (antenna, user) link."""
    rng = np.random.default_rng(seed)
    pdp = power_delay_profile(cfg)
    shape = (cfg.num_bs_antennas, cfg.num_users, cfg.num_taps)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(pdp / 2.0)
    delays = np.broadcast_to(tap_delays(cfg), (cfg.num_users, cfg.num_taps)).copy()
    return ChannelRealization(g, delays, seed, pdp)


def freq_response(ch: ChannelRealization, cfg: SystemConfig) -> np.ndarray:
    """Per-subcarrier channel matrices, shape ``(N_sc, M, K)``.

    Entry ``(n, m, k) = sum_l g[m,k,l] exp(-2j pi bin(n) d[k,l] / N_FFT)``.
    """
    bins = signed_bins(cfg).astype(float)
    phase = np.exp(-2j * np.pi * bins[None, None, :] * ch.delays[:, :, None] / cfg.fft_size)
    Hk = np.matmul(np.transpose(ch.gains, (1, 0, 2)), phase)  # (K, M, N_sc)
    return np.ascontiguousarray(np.transpose(Hk, (2, 1, 0)))


@dataclass(frozen=True)
class MismatchProfile:
    """Unit-modulus TX/RX chain coefficients.

    BS arrays are ``(M,)`` or, for frequency-dependent mismatch,
    ``(M, N_sc)``; UE arrays are ``(K,)``.
    """

    bs_tx: np.ndarray
    bs_rx: np.ndarray
    ue_tx: np.ndarray
    ue_rx: np.ndarray

    @classmethod
    def identity(cls, cfg: SystemConfig) -> "MismatchProfile":
        M, K = cfg.num_bs_antennas, cfg.num_users
        one = np.ones
        return cls(one(M, complex), one(M, complex), one(K, complex), one(K, complex))

    @property
    def per_subcarrier(self) -> bool:
        return self.bs_tx.ndim == 2

    def bs_tx_at(self, nsc: int) -> np.ndarray:
        """BS TX coefficients as ``(N_sc, M)``."""
        return _per_sc(self.bs_tx, nsc)

    def bs_rx_at(self, nsc: int) -> np.ndarray:
        return _per_sc(self.bs_rx, nsc)


def _per_sc(coeffs: np.ndarray, nsc: int) -> np.ndarray:
    if coeffs.ndim == 1:
        return np.broadcast_to(coeffs, (nsc, coeffs.size))
    return coeffs.T


def _unit_phasors(rng, shape) -> np.ndarray:
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, shape))


def draw_mismatch(seed, cfg: SystemConfig, per_subcarrier: bool = False) -> MismatchProfile:
    """Random-phase unit-modulus mismatch (all ones when disabled in `cfg`)."""
    if not cfg.mismatch_enabled:
        return MismatchProfile.identity(cfg)
    rng = np.random.default_rng(seed)
    M, K = cfg.num_bs_antennas, cfg.num_users
    bs_shape = (M, cfg.used_subcarriers) if per_subcarrier else (M,)
    return MismatchProfile(_unit_phasors(rng, bs_shape), _unit_phasors(rng, bs_shape),
                           _unit_phasors(rng, K), _unit_phasors(rng, K))


def uplink_matrix(H, mm: MismatchProfile) -> np.ndarray:
    """Effective uplink ``diag(bs_rx) H diag(ue_tx)`` per subcarrier."""
    H = np.asarray(H)
    return mm.bs_rx_at(H.shape[0])[:, :, None] * H * mm.ue_tx[None, None, :]


def downlink_matrix(H, mm: MismatchProfile) -> np.ndarray:
    """Effective downlink ``diag(ue_rx) H^T diag(bs_tx)``, shape ``(N_sc, K, M)``."""
    H = np.asarray(H)
    Ht = np.transpose(H, (0, 2, 1))
    return mm.ue_rx[None, :, None] * Ht * mm.bs_tx_at(H.shape[0])[:, None, :]


def propagate_uplink_freq(X, H, mm: MismatchProfile, sigma2: float,
                          rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-subcarrier uplink: ``X (N_sc, K, T) -> Y (N_sc, M, T)``."""
    Y = uplink_matrix(H, mm) @ np.asarray(X)
    if sigma2:
        Y = Y + awgn(Y.shape, sigma2, rng)
    return Y


def propagate_downlink_freq(X, H, mm: MismatchProfile, sigma2: float,
                            rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-subcarrier downlink: ``X (N_sc, M, T) -> Y (N_sc, K, T)``."""
    Y = downlink_matrix(H, mm) @ np.asarray(X)
    if sigma2:
        Y = Y + awgn(Y.shape, sigma2, rng)
    return Y


def _shift(x: np.ndarray, d: int) -> np.ndarray:
    if d == 0:
        return x
    out = np.zeros_like(x)
    out[..., d:] = x[..., :-d]
    return out


def _check_flat(mm: MismatchProfile):
    if mm.per_subcarrier:
        raise ValueError("frequency-dependent mismatch is only supported on the "
                         "per-subcarrier path")


def propagate_uplink(tx, ch: ChannelRealization, mm: MismatchProfile,
                     noise: NoiseSpec | float = 0.0,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Time-domain uplink: ``tx (K, T) -> rx (M, T)``.

    ``rx_m = bs_rx[m] * sum_k h_mk (*) (ue_tx[k] tx_k) + noise``; the
    convolution is causal and truncated to `T` samples.
    """
    _check_flat(mm)
    x = np.atleast_2d(np.asarray(tx, dtype=np.complex128))
    K, L = ch.delays.shape
    if x.shape[0] != K:
        raise ValueError(f"expected {K} user streams, got {x.shape[0]}")
    T = x.shape[-1]
    x = x * mm.ue_tx[:, None]
    stacked = np.empty((K, L, T), dtype=np.complex128)
    for k in range(K):
        for l in range(L):
            stacked[k, l] = _shift(x[k], int(ch.delays[k, l]))
    g = ch.gains * mm.bs_rx[:, None, None]
    rx = g.reshape(ch.num_antennas, K * L) @ stacked.reshape(K * L, T)
    sigma2 = noise.sigma2 if isinstance(noise, NoiseSpec) else float(noise)
    if sigma2:
        rx += awgn(rx.shape, sigma2, rng)
    return rx


def propagate_downlink(tx, ch: ChannelRealization, mm: MismatchProfile,
                       noise: NoiseSpec | float = 0.0,
                       rng: np.random.Generator | None = None) -> np.ndarray:
    """Time-domain downlink over the transposed channel: ``tx (M, T) -> rx (K, T)``."""
    _check_flat(mm)
    x = np.atleast_2d(np.asarray(tx, dtype=np.complex128))
    M = ch.num_antennas
    K, L = ch.delays.shape
    if x.shape[0] != M:
        raise ValueError(f"expected {M} antenna streams, got {x.shape[0]}")
    T = x.shape[-1]
    x = x * mm.bs_tx[:, None]
    per_tap = (np.transpose(ch.gains, (1, 2, 0)).reshape(K * L, M) @ x).reshape(K, L, T)
    rx = np.zeros((K, T), dtype=np.complex128)
    for k in range(K):
        for l in range(L):
            rx[k] += _shift(per_tap[k, l], int(ch.delays[k, l]))
    rx *= mm.ue_rx[:, None]
    sigma2 = noise.sigma2 if isinstance(noise, NoiseSpec) else float(noise)
    if sigma2:
        rx += awgn(rx.shape, sigma2, rng)
    return rx


# ---------------------------------------------------------------------------
# BS-to-BS coupling used for reciprocity calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingChannel:
    """Reciprocal single-tap links between BS antennas.

    ``gains[i, j] == gains[j, i]``; the link power falls off with the
    antenna-index distance so far-apart antennas hear each other at low SNR.
    """

    gains: np.ndarray
    noise_var: float = 1.0

    def snr_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(np.abs(self.gains) ** 2 / self.noise_var)


def draw_coupling(seed, cfg: SystemConfig, snr_db: float = 30.0,
                  loss_db_per_index: float = 0.5, noise_var: float = 1.0) -> CouplingChannel:
    """Symmetric coupling matrix with random phases and distance-based SNR.

    Link power is ``snr_db - loss_db_per_index * |i - j|`` dB above a unit
    noise floor; `noise_var` sets the actual sounding noise (0: noiseless).
    """
    rng = np.random.default_rng(seed)
    M = cfg.num_bs_antennas
    idx = np.arange(M)
    dist = np.abs(idx[:, None] - idx[None, :])
    power = 10.0 ** ((snr_db - loss_db_per_index * dist) / 10.0)
    phase = rng.uniform(0.0, 2.0 * np.pi, (M, M))
    phase = np.triu(phase, 1)
    phase = phase + phase.T
    gains = np.sqrt(power) * np.exp(1j * phase)
    np.fill_diagonal(gains, 0.0)
    return CouplingChannel(gains, noise_var)


@dataclass(frozen=True)
class UeInterference:
    """UEs that keep transmitting random QPSK while the BS sounds itself.

    `H_eff` is the effective uplink ``(N_sc, M, K)`` and `power` the per-UE
    transmit power relative to the coupling noise floor.
    """

    H_eff: np.ndarray
    power: float = 100.0

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        nsc, M, K = self.H_eff.shape
        bits = rng.integers(0, 2, (nsc, K, 2))
        sym = ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / np.sqrt(2)
        y = np.einsum("nmk,nk->mn", self.H_eff, sym)
        return np.sqrt(self.power) * y


def sound_bs_pair(i: int, j: int, ref_signal, coupling: CouplingChannel,
                  mm: MismatchProfile, rng: np.random.Generator | None = None,
                  interference: UeInterference | None = None) -> np.ndarray:
    """Per-subcarrier coefficient ``b_{i,j,n}`` seen at antenna j when i sounds.

    ``b = bs_rx[j] h_ij bs_tx[i] + noise / ref``.
    """
    if i == j:
        raise ValueError("an antenna cannot sound itself (i == j)")
    ref = np.asarray(ref_signal, dtype=np.complex128)
    nsc = ref.size
    tx = _per_sc(mm.bs_tx, nsc)[:, i]
    rx = _per_sc(mm.bs_rx, nsc)[:, j]
    y = rx * coupling.gains[i, j] * tx * ref
    if coupling.noise_var and rng is not None:
        y = y + awgn(nsc, coupling.noise_var, rng)
    if interference is not None:
        y = y + interference.draw(rng)[j]
    return y / ref


def sound_round(i: int, ref_signal, coupling: CouplingChannel, mm: MismatchProfile,
                rng: np.random.Generator | None = None,
                interference: UeInterference | None = None) -> np.ndarray:
    """One sounding round: antenna `i` transmits, every antenna records.

    Returns ``b[i, :, :]`` of shape ``(M, N_sc)``; the sounding antenna's own
    row keeps the initialization value 1.
    """
    ref = np.asarray(ref_signal, dtype=np.complex128)
    nsc = ref.size
    M = coupling.gains.shape[0]
    tx = _per_sc(mm.bs_tx, nsc)[:, i]  # (N_sc,)
    rx = _per_sc(mm.bs_rx, nsc).T  # (M, N_sc)
    y = rx * coupling.gains[i][:, None] * (tx * ref)[None, :]
    if coupling.noise_var and rng is not None:
        y = y + awgn((M, nsc), coupling.noise_var, rng)
    if interference is not None:
        y = y + interference.draw(rng)
    b = y / ref[None, :]
    b[i] = 1.0
    return b


# ---------------------------------------------------------------------------
# replay dumps
# ---------------------------------------------------------------------------

def save_channel(path, ch: ChannelRealization, cfg: SystemConfig | None = None) -> Path:
    """Write a realization as ``.npz``: JSON header plus gains/delays body."""
    header = {"format": "tddmimo-channel/1", "seed": ch.seed,
              "num_antennas": ch.num_antennas, "num_users": ch.num_users,
              "num_taps": int(ch.delays.shape[1])}
    if cfg is not None:
        header.update(fft_size=cfg.fft_size, sample_rate=cfg.sample_rate,
                      pdp_decay_samples=cfg.pdp_decay_samples)
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)),
                 gains=ch.gains, delays=ch.delays,
                 pdp=ch.pdp if ch.pdp is not None else np.array([]))
    return path


def load_channel(path) -> ChannelRealization:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != "tddmimo-channel/1":
            raise ValueError(f"{path}: not a channel dump")
        pdp = data["pdp"]
        return ChannelRealization(data["gains"].copy(), data["delays"].copy(),
                                  header.get("seed"), pdp.copy() if pdp.size else None)
