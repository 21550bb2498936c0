"""Base-station PHY: uplink estimation, LMMSE detection, precoding, calibration.

Uplink pilots are frequency-orthogonal: within every sub-band of ``K``
consecutive subcarriers user ``k`` owns subcarrier ``k``. The least-squares
estimate from that one subcarrier is held across the whole sub-band, so all
per-sub-band quantities (estimates, LMMSE weights, precoders) are stored once
per sub-band with shape ``(S, ...)``, ``S = N_sc / K``.

The downlink physical channel is the transpose of the uplink one. Precoders
are therefore built from the complex conjugate of the uplink quantities:
MRT uses ``conj(H)`` and LMMSE uses ``W^T``, both with unit-norm columns.

Relative reciprocity calibration yields ``d[m]`` proportional to
``bs_rx[m] / bs_tx[m]``. Pre-precoding calibration divides the CSI by ``d``
before the precoder is computed; post-precoding calibration multiplies the
precoded antenna signals by ``d``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import (CouplingChannel, MismatchProfile, UeInterference, awgn,
                      sound_round)
from .numerics import lmmse_weights
from .phy import qam_map
from .sysconfig import SystemConfig

__all__ = [
    "UplinkChannelEstimate",
    "Precoder",
    "CalibrationEnvironment",
    "CalibrationTable",
    "CalibrationError",
    "ls_uplink_estimate",
    "estimate_uplink",
    "lmmse_detect",
    "mrt_precoder",
    "lmmse_precoder",
    "run_reciprocity_calibration",
    "apply_precal",
    "apply_postcal",
    "SIGMA_FLOOR",
]

# regularization used by the LMMSE kernels when the link is noiseless
SIGMA_FLOOR = 1e-6


class CalibrationError(RuntimeError):
    """Raised when an invalid calibration table is applied."""


@dataclass(frozen=True)
class UplinkChannelEstimate:
    """Zero-hold LS estimate: one ``M x K`` matrix per pilot sub-band.

    ``pilot_index[i, k]`` is the subcarrier whose pilot produced column
    ``k`` of sub-band ``i``.
    """

    per_subband: np.ndarray  # (S, M, K)
    pilot_index: np.ndarray  # (S, K)

    @property
    def num_subbands(self) -> int:
        return self.per_subband.shape[0]

    @property
    def num_users(self) -> int:
        return self.per_subband.shape[2]

    @property
    def per_subcarrier(self) -> np.ndarray:
        """Expanded ``(N_sc, M, K)`` view, identical within each sub-band."""
        return np.repeat(self.per_subband, self.num_users, axis=0)

    def with_values(self, values: np.ndarray) -> "UplinkChannelEstimate":
        return replace(self, per_subband=values)


def ls_uplink_estimate(R, P) -> np.ndarray:
    """LS estimate ``R P^*`` for received pilots `R` (M x K) and pilot matrix `P`.

    `P` must be diagonal with unit-modulus entries; leading axes broadcast.
    """
    R = np.asarray(R)
    P = np.asarray(P)
    diag = np.diagonal(P, axis1=-2, axis2=-1)
    off = P - diag[..., None] * np.eye(P.shape[-1])
    if np.any(np.abs(off) > 1e-12):
        raise ValueError("pilot matrix must be diagonal")
    if np.any(np.abs(np.abs(diag) - 1.0) > 1e-9):
        raise ValueError("pilot entries must have unit modulus")
    return R * diag.conj()[..., None, :]


def estimate_uplink(Y_pilot, pilots, cfg: SystemConfig) -> UplinkChannelEstimate:
    """Estimate every sub-band from one received uplink pilot symbol.

    Parameters
    ----------
    Y_pilot : (N_sc, M) array
        Demodulated pilot symbol at all BS antennas.
    pilots : (N_sc,) array
        Known pilot value on each subcarrier (owner ``n mod K``).
    """
    K = cfg.num_users
    S = cfg.num_subbands
    Y = np.asarray(Y_pilot)
    R = np.transpose(Y.reshape(S, K, -1), (0, 2, 1))  # column k <- subcarrier iK+k
    P = np.asarray(pilots).reshape(S, K)[..., None] * np.eye(K)
    Hhat = ls_uplink_estimate(R, P)
    index = np.arange(cfg.used_subcarriers).reshape(S, K)
    return UplinkChannelEstimate(Hhat, index)


def _as_subband_matrix(est) -> np.ndarray:
    if isinstance(est, UplinkChannelEstimate):
        return est.per_subband
    return np.asarray(est)


def lmmse_detect(y, est, sigma: float, weights=None, mode: str = "qr") -> np.ndarray:
    """Apply sub-band LMMSE weights to received data.

    `y` has shape ``(N_sc, M)`` or ``(N_sc, M, T)``; the result is
    ``(N_sc, K)`` or ``(N_sc, K, T)`` soft symbols.
    """
    H = _as_subband_matrix(est)
    S, M, K = H.shape
    W = lmmse_weights(H, sigma, mode) if weights is None else weights
    y = np.asarray(y)
    squeeze = y.ndim == 2
    if squeeze:
        y = y[..., None]
    nsc = y.shape[0]
    Yb = y.reshape(S, nsc // S, M, -1)
    s = (W[:, None] @ Yb).reshape(nsc, K, -1)
    return s[..., 0] if squeeze else s


@dataclass(frozen=True)
class Precoder:
    """Per-sub-band precoding matrices ``(S, M, K)``."""

    F: np.ndarray
    scheme: str
    rho: float

    @property
    def per_subcarrier(self) -> np.ndarray:
        return np.repeat(self.F, self.F.shape[2], axis=0)


def _normalize_columns(F: np.ndarray, rho: float, what: str) -> np.ndarray:
    norms = np.linalg.norm(F, axis=-2)  # (S, K)
    zero = norms <= 1e-300
    if np.any(zero):
        s, k = np.argwhere(zero)[0]
        raise ValueError(f"{what}: zero precoder column for user {k} in sub-band {s} "
                         f"(subcarriers {s * F.shape[2]}..{(s + 1) * F.shape[2] - 1})")
    K = F.shape[-1]
    return F / norms[..., None, :] * np.sqrt(rho / K)


def mrt_precoder(est, rho: float | None = None) -> Precoder:
    """Maximal-ratio transmission: ``conj(Hhat)`` with unit-norm columns.

    Columns are then scaled so that ``E||F x||^2 = rho`` for unit-power,
    independent user symbols (default ``rho = K``: one unit per stream).
    """
    H = _as_subband_matrix(est)
    K = H.shape[-1]
    rho = float(K if rho is None else rho)
    return Precoder(_normalize_columns(H.conj(), rho, "MRT"), "mrt", rho)


def lmmse_precoder(est, sigma: float, rho: float | None = None, weights=None) -> Precoder:
    """LMMSE precoding from the uplink LMMSE weights, ``F = W^T`` normalized."""
    H = _as_subband_matrix(est)
    K = H.shape[-1]
    rho = float(K if rho is None else rho)
    W = lmmse_weights(H, sigma, "qr") if weights is None else weights
    return Precoder(_normalize_columns(np.swapaxes(W, -1, -2), rho, "LMMSE"), "lmmse", rho)


# ---------------------------------------------------------------------------
# reciprocity calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationEnvironment:
    """Everything the BS sees while sounding itself.

    `interference`, when set, models UEs that keep transmitting during the
    procedure (they should stay silent).
    """

    coupling: CouplingChannel
    mismatch: MismatchProfile
    interference: UeInterference | None = None
    seed: object = 0


@dataclass(frozen=True)
class CalibrationTable:
    """Per-antenna, per-subcarrier calibration coefficients ``d``."""

    d: np.ndarray  # (M, N_sc)
    ref_antenna: int
    quality: np.ndarray  # (M,) coherence in [0, 1]
    valid: bool = True
    interference_detected: bool = False
    reason: str = ""
    diagnostics: dict = field(default_factory=dict, compare=False)

    @classmethod
    def identity(cls, cfg: SystemConfig, ref_antenna: int = 0) -> "CalibrationTable":
        M = cfg.num_bs_antennas
        return cls(np.ones((M, cfg.used_subcarriers), complex), ref_antenna, np.ones(M))

    def write_text(self, path) -> Path:
        """CSV export: antenna, subcarrier, real, imag, quality."""
        path = Path(path)
        M, nsc = self.d.shape
        with open(path, "w", newline="") as fh:
            fh.write(f"# ref_antenna={self.ref_antenna} valid={int(self.valid)} "
                     f"interference={int(self.interference_detected)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["antenna", "subcarrier", "real", "imag", "quality"])
            for m in range(M):
                q = f"{self.quality[m]:.9f}"
                for n in range(nsc):
                    v = self.d[m, n]
                    w.writerow([m, n, f"{v.real:.12e}", f"{v.imag:.12e}", q])
        return path

    @classmethod
    def read_text(cls, path) -> "CalibrationTable":
        with open(path) as fh:
            header = dict(tok.split("=") for tok in fh.readline()[1:].split())
            rows = list(csv.DictReader(fh))
        M = max(int(r["antenna"]) for r in rows) + 1
        nsc = max(int(r["subcarrier"]) for r in rows) + 1
        d = np.empty((M, nsc), complex)
        q = np.empty(M)
        for r in rows:
            m, n = int(r["antenna"]), int(r["subcarrier"])
            d[m, n] = float(r["real"]) + 1j * float(r["imag"])
            q[m] = float(r["quality"])
        return cls(d, int(header["ref_antenna"]), q, bool(int(header["valid"])),
                   bool(int(header["interference"])))


def run_reciprocity_calibration(env: CalibrationEnvironment, m_ref: int, cfg: SystemConfig,
                                interference_threshold: float = 2.0,
                                quality_threshold: float = 0.1) -> CalibrationTable:
    """Relative reciprocity calibration against reference antenna `m_ref`.

    Every antenna sounds once while all others record ``b[i, j, n]``. Before
    each round the array listens without sounding; mean received power above
    `interference_threshold` times the noise floor marks the table invalid.
    For each antenna ``i`` the coefficient is the subcarrier average of
    ``b[m_ref, i, n] / b[i, m_ref, n]`` (weighted by ``|b[i, m_ref, n]|^2``),
    normalized to unit modulus. The quality metric is the coherence of that
    average; any antenna below `quality_threshold` invalidates the table.
    """
    M = cfg.num_bs_antennas
    nsc = cfg.used_subcarriers
    if M < 2:
        raise ValueError("calibration needs at least two BS antennas")
    if not 0 <= m_ref < M:
        raise IndexError(f"reference antenna {m_ref} out of range")
    rng = np.random.default_rng(env.seed)
    ref = qam_map(rng.integers(0, 2, 2 * nsc), "QPSK")
    noise_var = env.coupling.noise_var
    forward = np.empty((M, nsc), complex)  # b[m_ref, i, :]
    backward = np.empty((M, nsc), complex)  # b[i, m_ref, :]
    listen_power = np.zeros(M)
    for i in range(M):
        idle = awgn((M, nsc), noise_var, rng) if noise_var else np.zeros((M, nsc), complex)
        if env.interference is not None:
            idle = idle + env.interference.draw(rng)
        listen_power = np.maximum(listen_power, np.mean(np.abs(idle) ** 2, axis=1))
        row = sound_round(i, ref, env.coupling, env.mismatch, rng, env.interference)
        backward[i] = row[m_ref]
        if i == m_ref:
            forward[:] = row
    cross = forward * backward.conj()
    num = cross.sum(axis=1)
    den = np.abs(cross).sum(axis=1)
    quality = np.where(den > 0, np.abs(num) / np.where(den > 0, den, 1.0), 0.0)
    coeff = np.where(np.abs(num) > 0, num / np.where(np.abs(num) > 0, np.abs(num), 1.0), 1.0)
    coeff[m_ref] = 1.0
    quality[m_ref] = 1.0
    d = np.repeat(coeff[:, None], nsc, axis=1)

    floor = noise_var if noise_var else 1.0
    interference = bool(np.any(listen_power > interference_threshold * floor))
    reasons = []
    if interference:
        reasons.append("energy detected while the array was silent")
    weak = np.flatnonzero(quality < quality_threshold)
    if weak.size:
        reasons.append(f"{weak.size} antenna(s) below quality {quality_threshold}: "
                       + ",".join(map(str, weak[:8])) + ("..." if weak.size > 8 else ""))
    return CalibrationTable(d, m_ref, quality, not reasons, interference, "; ".join(reasons),
                            {"listen_power": listen_power, "weak_antennas": weak})


def _table_per_subband(table: CalibrationTable, est: UplinkChannelEstimate) -> np.ndarray:
    # d at the pilot subcarrier of every estimate column: (S, M, K)
    return np.transpose(table.d[:, est.pilot_index], (1, 0, 2))


def apply_precal(est: UplinkChannelEstimate, table: CalibrationTable,
                 allow_invalid: bool = False) -> UplinkChannelEstimate:
    """CSI used for precoding: every entry ``(m, k)`` divided by ``d[m]``.

    The estimate used for uplink detection is not modified.
    """
    if not table.valid and not allow_invalid:
        raise CalibrationError(f"calibration table is invalid: {table.reason}")
    return est.with_values(est.per_subband / _table_per_subband(table, est))


def apply_postcal(precoder: Precoder, table: CalibrationTable,
                  allow_invalid: bool = False) -> Precoder:
    """Multiply each antenna's precoded signal by its calibration coefficient."""
    if not table.valid and not allow_invalid:
        raise CalibrationError(f"calibration table is invalid: {table.reason}")
    S, M, K = precoder.F.shape
    d_sub = table.d[:, ::K][:, :S].T  # (S, M)
    return replace(precoder, F=precoder.F * d_sub[:, :, None])
