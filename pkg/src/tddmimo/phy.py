"""Symbol-level transmit/receive processing shared by the BS and the UEs.

Gray-mapped QAM, CP-OFDM with LTE normal-CP lengths, and a Zadoff-Chu based
primary synchronization signal (PSS) with a normalized cross-correlation
detector.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import signal

from .numerics import unitary_dft
from .sysconfig import BITS_PER_SYMBOL, SystemConfig, map_to_fft_bins, unmap_from_fft_bins

__all__ = [
    "bits_per_symbol",
    "constellation",
    "qam_map",
    "qam_demap",
    "CpLayout",
    "ofdm_modulate",
    "ofdm_demodulate",
    "modulate_slot",
    "demodulate_slot",
    "PssSequence",
    "PssDetection",
    "PSS_THRESHOLD",
    "generate_pss",
    "detect_pss",
    "write_samples",
    "read_samples",
    "pilot_values",
]

_ORDER_NAMES = {2: "BPSK", 4: "QPSK", 16: "16QAM", 64: "64QAM", 256: "256QAM"}

PSS_THRESHOLD = 0.5


def _mod_name(order) -> str:
    if isinstance(order, str):
        name = order.upper().replace("-", "").replace("_", "")
        name = "QPSK" if name == "4QAM" else name
    else:
        name = _ORDER_NAMES.get(int(order), "")
    if name not in BITS_PER_SYMBOL:
        raise ValueError(f"unsupported modulation {order!r}")
    return name


def bits_per_symbol(order) -> int:
    return BITS_PER_SYMBOL[_mod_name(order)]


def _pam_amplitudes(m: int) -> np.ndarray:
    """Gray PAM amplitude for every m-bit label (MSB = sign bit)."""
    labels = np.arange(2 ** m)
    bits = (labels[:, None] >> np.arange(m - 1, -1, -1)) & 1
    amp = np.ones(2 ** m)
    for j in range(m - 1, 0, -1):
        amp = 2.0 ** (m - j) - (1 - 2 * bits[:, j]) * amp
    return (1 - 2 * bits[:, 0]) * amp


@lru_cache(maxsize=None)
def _axis_tables(m: int):
    """Level index -> bit label table for one PAM axis with 2**m levels."""
    amps = _pam_amplitudes(m)
    levels = 2 ** m
    idx = ((amps + levels - 1) // 2).astype(int)
    labels = np.arange(levels)
    bits = ((labels[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.uint8)
    table = np.empty((levels, m), dtype=np.uint8)
    table[idx] = bits
    return table


def _scale(q: int) -> float:
    if q == 1:
        return 1.0
    L = 2 ** (q // 2)
    return 1.0 / np.sqrt(2.0 * (L * L - 1) / 3.0)


def qam_map(bits, order) -> np.ndarray:
    """Map a bit array onto unit-energy Gray-coded symbols.

    Bits are consumed in groups of ``log2(order)``; within a group even
    positions drive the in-phase axis and odd positions the quadrature axis
    (LTE convention), so QPSK ``00`` maps to ``(1+1j)/sqrt(2)``. BPSK maps
    ``0 -> +1`` and ``1 -> -1``.
    """
    q = bits_per_symbol(order)
    b = np.asarray(bits, dtype=np.int64).ravel()
    if b.size % q:
        raise ValueError(f"bit count {b.size} is not a multiple of {q}")
    groups = b.reshape(-1, q)
    if q == 1:
        return (1.0 - 2.0 * groups[:, 0]).astype(np.complex128)
    m = q // 2
    weights = 1 << np.arange(m - 1, -1, -1)
    amps = _pam_amplitudes(m)
    i_amp = amps[groups[:, 0::2] @ weights]
    q_amp = amps[groups[:, 1::2] @ weights]
    return (i_amp + 1j * q_amp) * _scale(q)


def qam_demap(symbols, order) -> np.ndarray:
    """Hard nearest-neighbour decisions back to bits (flat uint8 array)."""
    q = bits_per_symbol(order)
    s = np.asarray(symbols).ravel()
    if q == 1:
        return (s.real < 0).astype(np.uint8)
    m = q // 2
    L = 2 ** m
    table = _axis_tables(m)
    out = np.empty((s.size, q), dtype=np.uint8)
    for axis, comp in ((0, s.real), (1, s.imag)):
        idx = np.clip(np.rint((comp / _scale(q) + L - 1) / 2.0), 0, L - 1).astype(int)
        out[:, axis::2] = table[idx]
    return out.ravel()


def constellation(order) -> np.ndarray:
    """All points of a constellation, indexed by their integer bit label."""
    q = bits_per_symbol(order)
    labels = np.arange(2 ** q)
    bits = (labels[:, None] >> np.arange(q - 1, -1, -1)) & 1
    return qam_map(bits.ravel(), order)


def pilot_values(cfg: SystemConfig, seed: int = 2017) -> np.ndarray:
    """Known unit-modulus QPSK pilot symbol for every used subcarrier.

    Subcarrier ``n`` belongs to user ``n mod K``; the same sequence serves
    the uplink and the (pre-precoding) downlink pilot.
    """
    bits = np.random.default_rng(seed).integers(0, 2, 2 * cfg.used_subcarriers)
    return qam_map(bits, "QPSK")


# ---------------------------------------------------------------------------
# OFDM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CpLayout:
    """Cyclic-prefix length (samples) for each symbol of a slot."""

    cp_lengths: tuple

    @classmethod
    def for_config(cls, cfg: SystemConfig) -> "CpLayout":
        return cls(tuple(cfg.cp_lengths))

    def __getitem__(self, symbol: int) -> int:
        return self.cp_lengths[symbol % len(self.cp_lengths)]

    def offsets(self, fft_size: int) -> np.ndarray:
        """Sample index where each symbol (CP included) starts inside a slot."""
        lengths = np.asarray(self.cp_lengths) + fft_size
        return np.concatenate([[0], np.cumsum(lengths)[:-1]])


def ofdm_modulate(grid_column, cfg: SystemConfig, symbol: int = 0,
                  layout: CpLayout | None = None) -> np.ndarray:
    """IFFT one OFDM symbol and prepend its cyclic prefix."""
    layout = layout or CpLayout.for_config(cfg)
    cp = layout[symbol]
    body = unitary_dft(map_to_fft_bins(grid_column, cfg), "inverse")
    return np.concatenate([body[..., cfg.fft_size - cp:], body], axis=-1)


def ofdm_demodulate(samples, cfg: SystemConfig, symbol: int = 0,
                    layout: CpLayout | None = None) -> np.ndarray:
    """Strip the CP, FFT and return the used subcarriers."""
    layout = layout or CpLayout.for_config(cfg)
    cp = layout[symbol]
    x = np.asarray(samples)
    if x.shape[-1] < cp + cfg.fft_size:
        raise ValueError(f"need {cp + cfg.fft_size} samples, got {x.shape[-1]}")
    body = x[..., cp:cp + cfg.fft_size]
    return unmap_from_fft_bins(unitary_dft(body, "forward"), cfg)


def modulate_slot(grid, cfg: SystemConfig) -> np.ndarray:
    """Modulate a ``(..., N_s, N_sc)`` slot grid into one sample stream."""
    g = np.asarray(grid)
    parts = [ofdm_modulate(g[..., s, :], cfg, s) for s in range(g.shape[-2])]
    return np.concatenate(parts, axis=-1)


def demodulate_slot(samples, cfg: SystemConfig, start: int = 0) -> np.ndarray:
    """Inverse of :func:`modulate_slot`; `start` is the slot's first sample."""
    layout = CpLayout.for_config(cfg)
    x = np.asarray(samples)
    offs = layout.offsets(cfg.fft_size) + start
    cols = [ofdm_demodulate(x[..., o:o + layout[s] + cfg.fft_size], cfg, s, layout)
            for s, o in enumerate(offs)]
    return np.stack(cols, axis=-2)


# ---------------------------------------------------------------------------
# PSS
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PssSequence:
    values: np.ndarray  # frequency-domain ZC values (DC punctured)
    bins: np.ndarray  # signed FFT bins carrying `values`
    template: np.ndarray  # unit-energy time-domain body (no CP)

    def waveform(self, cfg: SystemConfig) -> np.ndarray:
        """Transmitted PSS OFDM symbol (first-symbol CP), unit-modulus tones."""
        freq = np.zeros(cfg.fft_size, dtype=np.complex128)
        freq[self.bins % cfg.fft_size] = self.values
        body = unitary_dft(freq, "inverse")
        cp = cfg.cp_lengths[0]
        return np.concatenate([body[-cp:], body])


class PssDetection(NamedTuple):
    peak_index: int
    peak_metric: float
    detected: bool


def generate_pss(cfg: SystemConfig, root: int = 25, length: int = 63) -> PssSequence:
    """Length-63 Zadoff-Chu PSS, centre element punctured, mapped around DC."""
    if cfg.fft_size < length + 1:
        raise ValueError("FFT too small to carry the PSS")
    n = np.arange(length)
    zc = np.exp(-1j * np.pi * root * n * (n + 1) / length)
    half = length // 2
    values = np.concatenate([zc[:half], zc[half + 1:]])
    bins = np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])
    freq = np.zeros(cfg.fft_size, dtype=np.complex128)
    freq[bins % cfg.fft_size] = values
    template = unitary_dft(freq, "inverse")
    template /= np.linalg.norm(template)
    return PssSequence(values, bins, template)


def detect_pss(rx, template, search_window: int | None = None,
               threshold: float = PSS_THRESHOLD) -> PssDetection:
    """Locate the template in `rx` by normalized cross-correlation.

    `rx` is one stream or an ``(antennas, samples)`` array; multiple antennas
    are combined non-coherently. The metric
    ``|<r_t, p>| / (||r_t|| ||p||)`` lies in [0, 1]. Only the first
    `search_window` samples are searched (default: all of `rx`).
    """
    r = np.atleast_2d(np.asarray(rx, dtype=np.complex128))
    p = np.asarray(template, dtype=np.complex128)
    if search_window is not None:
        r = r[:, :search_window]
    L = p.size
    if r.shape[-1] < L:
        raise ValueError(f"search window of {r.shape[-1]} samples is shorter than the "
                         f"{L}-sample template")
    corr = np.stack([signal.correlate(row, p, mode="valid", method="fft") for row in r])
    power = np.abs(r) ** 2
    csum = np.concatenate([np.zeros((r.shape[0], 1)), np.cumsum(power, axis=-1)], axis=-1)
    energy = (csum[:, L:] - csum[:, :-L]).sum(axis=0)
    num = (np.abs(corr) ** 2).sum(axis=0)
    denom = np.maximum(energy, np.finfo(float).tiny) * np.vdot(p, p).real
    metric = np.sqrt(np.clip(num / denom, 0.0, 1.0))
    metric[energy <= 1e-300] = 0.0
    idx = int(np.argmax(metric))
    value = float(metric[idx])
    return PssDetection(idx, value, value >= threshold)


# ---------------------------------------------------------------------------
# sample dumps: interleaved little-endian float32 I/Q
# ---------------------------------------------------------------------------

def write_samples(path, samples) -> Path:
    x = np.asarray(samples, dtype=np.complex64).ravel()
    inter = np.empty(2 * x.size, dtype="<f4")
    inter[0::2] = x.real
    inter[1::2] = x.imag
    path = Path(path)
    inter.tofile(path)
    return path


def read_samples(path) -> np.ndarray:
    inter = np.fromfile(Path(path), dtype="<f4")
    return (inter[0::2] + 1j * inter[1::2]).astype(np.complex64)
