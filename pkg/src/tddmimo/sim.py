"""Slot and frame orchestration, Monte-Carlo sweeps and figures of merit.

A data slot runs in the fixed symbol order of the slot pattern: uplink pilot,
LS estimate, uplink data, LMMSE detection, precoder computation, downlink
pilot, downlink data, then per-UE effective-channel estimation and MRC. The
channel is static within a slot.

Two propagation paths are available. ``mode="freq"`` applies the
per-subcarrier channel matrices directly; ``mode="time"`` runs the full
CP-OFDM transmitter, the tapped-delay-line channel and the receiver FFT. The
two agree to round-off because every tap delay lies inside the cyclic prefix.

Seeds
-----
Every random draw comes from ``SeedSequence([seed, trial, stream, ...])``.
The stream ids are listed in :data:`STREAMS`; noise seeds additionally carry
the SNR index and the slot index, channel seeds the slot index. Trials are
therefore independent of execution order, and all SNR points of one trial
share the same channels, mismatch, calibration and bits.
"""

from __future__ import annotations

import configparser
import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import __version__
from .bs import (SIGMA_FLOOR, CalibrationEnvironment, CalibrationTable, apply_postcal,
                 apply_precal, estimate_uplink, lmmse_detect, lmmse_precoder, mrt_precoder,
                 run_reciprocity_calibration)
from .channel import (ChannelRealization, MismatchProfile, UeInterference, awgn,
                      downlink_matrix, draw_channel, draw_coupling, draw_mismatch,
                      freq_response, propagate_downlink, propagate_downlink_freq,
                      propagate_uplink, propagate_uplink_freq, uplink_matrix)
from .dataflow import (RoutingAudit, SubsystemTopology, combine_all, gather_partition,
                       scatter_partition, split_all)
from .numerics import lmmse_weights, unitary_dft
from .phy import (bits_per_symbol, demodulate_slot, detect_pss, generate_pss,
                  modulate_slot, pilot_values, qam_demap, qam_map)
from .sysconfig import (SymbolRole, SystemConfig, build_frame_schedule,
                        config_from_mapping, map_to_fft_bins, validate_config)
from .ue import ber_count, dl_effective_channel_estimate, mrc_detect

__all__ = [
    "STREAMS",
    "ScenarioSpec",
    "SlotResult",
    "SimReport",
    "draw_slot_bits",
    "run_slot",
    "run_frame",
    "sweep_snr",
    "rate_report",
    "channel_stats",
    "calibration_study",
    "CalibrationStudy",
    "emit_report",
    "load_scenario",
    "pss_timing_trial",
    "binomial_ci",
    "seed_for",
]

STREAMS = {"channel": 0, "mismatch": 1, "calibration": 2, "bits": 3, "noise": 4, "pss": 5}
DIRECTIONS = ("ul", "dl")


def seed_for(master: int, trial: int, stream: str, *extra: int) -> np.random.SeedSequence:
    """Counter-based seed for one random stream of one trial."""
    return np.random.SeedSequence([int(master), int(trial), STREAMS[stream], *map(int, extra)])


def binomial_ci(errors, total, z: float = 1.96):
    """Normal-approximation confidence interval for a bit error ratio."""
    errors = np.asarray(errors, dtype=float)
    total = np.asarray(total, dtype=float)
    p = np.divide(errors, total, out=np.zeros_like(errors), where=total > 0)
    half = z * np.sqrt(np.divide(p * (1 - p), total, out=np.zeros_like(p), where=total > 0))
    return np.clip(p - half, 0.0, 1.0), np.clip(p + half, 0.0, 1.0)


# ---------------------------------------------------------------------------
# one slot
# ---------------------------------------------------------------------------

def _modulations(cfg: SystemConfig) -> tuple:
    if cfg.per_user_modulation is None:
        return ("QPSK",) * cfg.num_users
    return tuple(cfg.per_user_modulation)


def _symbol_indices(cfg: SystemConfig, role: SymbolRole) -> list:
    return [i for i, r in enumerate(cfg.slot_pattern) if r is role]


def draw_slot_bits(cfg: SystemConfig, rng: np.random.Generator) -> dict:
    """Random payload for one slot: ``{"ul": [...], "dl": [...]}`` per user.

    User ``k`` carries ``bits_k * N_sc`` bits per data symbol of each direction.
    """
    n_ul = len(_symbol_indices(cfg, SymbolRole.UL_DATA))
    n_dl = len(_symbol_indices(cfg, SymbolRole.DL_DATA))
    out = {}
    for key, n in (("ul", n_ul), ("dl", n_dl)):
        out[key] = [rng.integers(0, 2, bits_per_symbol(m) * cfg.used_subcarriers * n,
                                 dtype=np.uint8)
                    for m in _modulations(cfg)]
    return out


def _user_symbols(bits_per_user, cfg: SystemConfig, n_sym: int) -> np.ndarray:
    """Stack per-user bit arrays into a ``(N_sc, K, T)`` symbol block."""
    X = np.empty((cfg.used_subcarriers, cfg.num_users, n_sym), complex)
    for k, (b, m) in enumerate(zip(bits_per_user, _modulations(cfg))):
        # symbol t occupies the t-th run of N_sc constellation points
        X[:, k, :] = qam_map(b, m).reshape(n_sym, cfg.used_subcarriers).T
    return X


def _demap_user(soft, order) -> np.ndarray:
    """Hard decisions for ``(N_sc, T)`` soft symbols, symbol-major order."""
    return qam_demap(np.asarray(soft).T.ravel(), order)


class SlotResult(NamedTuple):
    ul_bits: list  # decoded bits per user
    dl_bits: list
    dl_erased: list  # erased-bit masks per user
    errors: np.ndarray  # (2, K) bit errors (ul, dl)
    totals: np.ndarray  # (2, K)
    instrumentation: dict


def _composite(Hd, F_sc) -> np.ndarray:
    """Noiseless downlink gain ``H_D F`` per subcarrier, ``(N_sc, K, K)``."""
    return Hd @ F_sc


class _Link:
    """Propagation for one slot in either the frequency or the time domain."""

    def __init__(self, cfg, channel, mismatch, sigma2, rng, mode):
        self.cfg, self.ch, self.mm = cfg, channel, mismatch
        self.sigma2, self.rng, self.mode = sigma2, rng, mode
        if isinstance(channel, ChannelRealization):
            self.H = freq_response(channel, cfg)
        else:
            if mode == "time":
                raise ValueError("time-domain mode needs a ChannelRealization")
            self.H = np.asarray(channel)

    def _grid(self, symbols: dict, rows: int) -> np.ndarray:
        # (rows, N_s, N_sc) slot grid holding the given {symbol index: (N_sc, rows)}
        g = np.zeros((rows, self.cfg.symbols_per_slot, self.cfg.used_subcarriers), complex)
        for i, col in symbols.items():
            g[:, i, :] = col.T
        return g

    def uplink(self, symbols: dict) -> dict:
        """``{symbol index: X (N_sc, K)}`` -> ``{symbol index: Y (N_sc, M)}``."""
        if self.mode == "freq":
            idx = sorted(symbols)
            X = np.stack([symbols[i] for i in idx], axis=-1)
            Y = propagate_uplink_freq(X, self.H, self.mm, self.sigma2, self.rng)
            return {i: Y[..., t] for t, i in enumerate(idx)}
        tx = modulate_slot(self._grid(symbols, self.cfg.num_users), self.cfg)
        rx = propagate_uplink(tx, self.ch, self.mm, self.sigma2, self.rng)
        grid = demodulate_slot(rx, self.cfg)  # (M, N_s, N_sc)
        return {i: grid[:, i, :].T for i in symbols}

    def downlink(self, symbols: dict) -> dict:
        """``{symbol index: X (N_sc, M)}`` -> ``{symbol index: Y (N_sc, K)}``."""
        if self.mode == "freq":
            idx = sorted(symbols)
            X = np.stack([symbols[i] for i in idx], axis=-1)
            Y = propagate_downlink_freq(X, self.H, self.mm, self.sigma2, self.rng)
            return {i: Y[..., t] for t, i in enumerate(idx)}
        tx = modulate_slot(self._grid(symbols, self.cfg.num_bs_antennas), self.cfg)
        rx = propagate_downlink(tx, self.ch, self.mm, self.sigma2, self.rng)
        grid = demodulate_slot(rx, self.cfg)  # (K, N_s, N_sc)
        return {i: grid[:, i, :].T for i in symbols}


def _route(Y_sc_m: np.ndarray, sym: int, topo: SubsystemTopology, audit: RoutingAudit):
    """Carry one ``(N_sc, M)`` symbol through combiners, processors and splitters."""
    inbox = combine_all(Y_sc_m.T, sym, topo, audit)
    chunks = []
    for p, items in inbox.items():
        block = gather_partition(items, topo.num_antennas)
        chunks.extend(scatter_partition(block, p, sym, topo))
    return split_all(chunks, topo, audit).T


def run_slot(cfg: SystemConfig, channel, mismatch: MismatchProfile | None = None,
             caltable: CalibrationTable | None = None, tx_bits: dict | None = None, *,
             snr_db: float | None = None, precoder: str = "lmmse", mode: str = "freq",
             rng: np.random.Generator | None = None, route: bool = False,
             allow_invalid_calibration: bool = False, pilots=None) -> SlotResult:
    """Run one TDD data slot end to end.

    Parameters
    ----------
    cfg : SystemConfig
        ``cfg.calibration_mode`` selects off / precal / postcal.
    channel : ChannelRealization or (N_sc, M, K) array
        Physical uplink channel; the downlink uses its transpose. Raw
        frequency responses are only accepted in ``mode="freq"``.
    mismatch : MismatchProfile, optional
        Transceiver coefficients (identity when omitted).
    caltable : CalibrationTable, optional
        Result of the calibration run at initialization; required unless
        calibration is off.
    tx_bits : dict, optional
        Payload as produced by :func:`draw_slot_bits`; drawn from `rng` when
        omitted.
    snr_db : float, optional
        Per-subcarrier SNR; ``None`` means noiseless.
    precoder : {"lmmse", "mrt"}
    route : bool
        Pass every uplink and downlink symbol through the subsystem dataflow
        and record the routing audit.
    """
    cfg = validate_config(cfg)
    M, K, nsc = cfg.num_bs_antennas, cfg.num_users, cfg.used_subcarriers
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    mm = mismatch if mismatch is not None else MismatchProfile.identity(cfg)
    if tx_bits is None:
        tx_bits = draw_slot_bits(cfg, rng)
    sigma2 = 0.0 if snr_db is None else 10.0 ** (-snr_db / 10.0)
    sigma = max(np.sqrt(sigma2), SIGMA_FLOOR)
    pilots = pilot_values(cfg) if pilots is None else np.asarray(pilots)
    mods = _modulations(cfg)
    link = _Link(cfg, channel, mm, sigma2, rng, mode)
    topo = SubsystemTopology.from_config(cfg).check(cfg) if route else None
    audit = RoutingAudit() if route else None

    i_ulp = _symbol_indices(cfg, SymbolRole.UL_PILOT)[0]
    i_uld = _symbol_indices(cfg, SymbolRole.UL_DATA)
    i_dlp = _symbol_indices(cfg, SymbolRole.DL_PILOT)[0]
    i_dld = _symbol_indices(cfg, SymbolRole.DL_DATA)

    # uplink: pilot and data symbols share one transmission
    owner = np.arange(nsc) % K
    Xp = np.zeros((nsc, K), complex)
    Xp[np.arange(nsc), owner] = pilots
    Xd = _user_symbols(tx_bits["ul"], cfg, len(i_uld))
    ul_tx = {i_ulp: Xp, **{i: Xd[..., t] for t, i in enumerate(i_uld)}}
    ul_rx = link.uplink(ul_tx)
    if route:
        ul_rx = {i: _route(y, i, topo, audit) for i, y in ul_rx.items()}

    est = estimate_uplink(ul_rx[i_ulp], pilots, cfg)
    W = lmmse_weights(est.per_subband, sigma, "qr")
    Yd = np.stack([ul_rx[i] for i in i_uld], axis=-1)
    S_hat = lmmse_detect(Yd, est, sigma, weights=W)  # (N_sc, K, T)
    ul_bits = [_demap_user(S_hat[:, k, :], mods[k]) for k in range(K)]

    # precoder (calibration applied according to the configured mode)
    mode_cal = cfg.calibration_mode
    if mode_cal != "off" and caltable is None:
        raise ValueError(f"calibration_mode={mode_cal!r} needs a calibration table")
    csi = est
    if mode_cal == "precal":
        csi = apply_precal(est, caltable, allow_invalid_calibration)
    if precoder == "mrt":
        prec = mrt_precoder(csi)
    elif precoder == "lmmse":
        prec = lmmse_precoder(csi, sigma, weights=W if csi is est else None)
    else:
        raise ValueError(f"unknown precoder {precoder!r}")
    if mode_cal == "postcal":
        prec = apply_postcal(prec, caltable, allow_invalid_calibration)
    F = prec.per_subcarrier  # (N_sc, M, K)

    # downlink pilot: subcarrier n carries only its owner's precoded pilot
    Xdp = F[np.arange(nsc), :, owner] * pilots[:, None]  # (N_sc, M)
    s_dl = _user_symbols(tx_bits["dl"], cfg, len(i_dld))  # (N_sc, K, T)
    Xdd = F @ s_dl  # (N_sc, M, T)
    dl_tx = {i_dlp: Xdp, **{i: Xdd[..., t] for t, i in enumerate(i_dld)}}
    if route:
        dl_tx = {i: _route(x, i, topo, audit) for i, x in dl_tx.items()}
    dl_rx = link.downlink(dl_tx)

    S = cfg.num_subbands
    own = np.arange(nsc).reshape(S, K)  # own[i, k]: user k's pilot in sub-band i
    rx_p = dl_rx[i_dlp][own, np.arange(K)].T  # (K, S)
    heff = dl_effective_channel_estimate(rx_p, pilots[own].T).per_subcarrier  # (K, N_sc)
    Ydd = np.stack([dl_rx[i] for i in i_dld], axis=-1)  # (N_sc, K, T)
    dl_bits, dl_erased = [], []
    for k in range(K):
        res = mrc_detect(Ydd[:, k, :], heff[k][:, None], mods[k])
        dl_bits.append(_demap_user(res.symbols, mods[k]))
        dl_erased.append(res.erased_bits.reshape(nsc, -1, bits_per_symbol(mods[k]))
                         .transpose(1, 0, 2).ravel())

    errors = np.zeros((2, K))
    totals = np.zeros((2, K), dtype=np.int64)
    for k in range(K):
        u = ber_count(tx_bits["ul"][k], ul_bits[k])
        d = ber_count(tx_bits["dl"][k], dl_bits[k], dl_erased[k])
        errors[:, k] = u.errors, d.errors
        totals[:, k] = u.total, d.total

    G = _composite(downlink_matrix(link.H, mm), F)  # (N_sc, K, K)
    desired = np.abs(np.diagonal(G, axis1=1, axis2=2)) ** 2
    leak = (np.abs(G) ** 2).sum(axis=2) - desired
    instr = {
        "sigma2": sigma2,
        "estimate": est,
        "precoder": prec,
        "effective_channel": heff,
        "ul_soft": S_hat,
        "dl_leakage_ratio": leak.sum(axis=0) / np.maximum(desired.sum(axis=0), 1e-300),
    }
    if route:
        instr["routing_audit"] = audit
    return SlotResult(ul_bits, dl_bits, dl_erased, errors, totals, instr)


# ---------------------------------------------------------------------------
# timing acquisition
# ---------------------------------------------------------------------------

def pss_timing_trial(cfg: SystemConfig, offset: int, snr_db: float | None,
                     rng: np.random.Generator, buffer_len: int | None = None,
                     pss=None) -> tuple:
    """Place the PSS symbol at `offset` in a noisy buffer and detect it.

    SNR is per time sample: average PSS sample power over noise variance.
    Returns ``(PssDetection, true start of the PSS body)``.
    """
    pss = pss or generate_pss(cfg)
    wave = pss.waveform(cfg)
    n = buffer_len or (offset + wave.size + cfg.fft_size)
    rx = np.zeros(n, complex)
    rx[offset:offset + wave.size] = wave[: n - offset]
    if snr_db is not None:
        p = np.mean(np.abs(wave) ** 2)
        rx = rx + awgn(n, p * 10.0 ** (-snr_db / 10.0), rng)
    det = detect_pss(rx, pss.template)
    return det, offset + cfg.cp_lengths[0]


# ---------------------------------------------------------------------------
# frames and sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    """What to simulate and how many trials per SNR point.

    One trial is one radio frame: every data slot draws a fresh channel,
    while mismatch and calibration are drawn once per trial.
    `slots_per_frame` limits the number of data slots per trial (default:
    all data slots of the frame schedule).
    """

    cfg: SystemConfig = field(default_factory=SystemConfig)
    snr_db: tuple = (0.0, 4.0, 8.0)
    frames: int = 1
    precoder: str = "lmmse"
    calibration_mode: str | None = None
    per_user_modulation: tuple | None = None
    seed: int = 0
    slots_per_frame: int | None = None
    mode: str = "freq"
    calibration_ref: int | None = None
    coupling_snr_db: float = 30.0

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if len(self.snr_db) == 0:
            raise ValueError("SNR list must not be empty")
        if self.precoder not in ("lmmse", "mrt"):
            raise ValueError(f"unknown precoder {self.precoder!r}")
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))

    @property
    def system(self) -> SystemConfig:
        """The config with the scenario's overrides applied."""
        changes = {}
        if self.calibration_mode is not None:
            changes["calibration_mode"] = self.calibration_mode
        if self.per_user_modulation is not None:
            changes["per_user_modulation"] = tuple(self.per_user_modulation)
        return validate_config(self.cfg.replace(**changes) if changes else self.cfg)

    @property
    def num_slots(self) -> int:
        n = len(build_frame_schedule(self.cfg).data_slots())
        return n if self.slots_per_frame is None else min(n, self.slots_per_frame)


@dataclass
class SimReport:
    """Monte-Carlo result; ``errors`` and ``totals`` are ``(n_snr, 2, K)``."""

    spec: ScenarioSpec
    snr_db: tuple
    errors: np.ndarray
    totals: np.ndarray
    rates: dict = field(default_factory=dict)
    calibration: list = field(default_factory=list)
    channel_stats: dict | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def ber(self) -> np.ndarray:
        return np.divide(self.errors, self.totals, out=np.zeros_like(self.errors),
                         where=self.totals > 0)

    @property
    def ci(self):
        return binomial_ci(self.errors, self.totals)

    def ber_of(self, direction: str, users=None) -> np.ndarray:
        """Pooled BER over `users` per SNR point for one direction."""
        d = DIRECTIONS.index(direction)
        sel = slice(None) if users is None else list(users)
        e = self.errors[:, d, sel].sum(axis=-1)
        t = self.totals[:, d, sel].sum(axis=-1)
        return np.divide(e, t, out=np.zeros_like(e), where=t > 0)

    def pooled_ci(self, direction: str, users=None):
        d = DIRECTIONS.index(direction)
        sel = slice(None) if users is None else list(users)
        return binomial_ci(self.errors[:, d, sel].sum(axis=-1),
                           self.totals[:, d, sel].sum(axis=-1))

    def rows(self):
        """BER table rows ``(snr_db, direction, user, ber, ci_low, ci_high)``."""
        lo, hi = self.ci
        ber = self.ber
        for i, snr in enumerate(self.snr_db):
            for d, name in enumerate(DIRECTIONS):
                for k in range(self.errors.shape[2]):
                    yield snr, name, k, ber[i, d, k], lo[i, d, k], hi[i, d, k]


def _trial_calibration(spec: ScenarioSpec, cfg: SystemConfig, mm: MismatchProfile,
                       trial: int):
    if cfg.calibration_mode == "off":
        return None
    cs = seed_for(spec.seed, trial, "calibration")
    c_seed, s_seed = cs.spawn(2)
    coupling = draw_coupling(c_seed, cfg, snr_db=spec.coupling_snr_db)
    ref = cfg.num_bs_antennas // 2 if spec.calibration_ref is None else spec.calibration_ref
    env = CalibrationEnvironment(coupling, mm, None, s_seed)
    return run_reciprocity_calibration(env, ref, cfg)


def run_frame(spec: ScenarioSpec, trial: int) -> dict:
    """Run one trial (one frame) at every SNR point of `spec`.

    Returns ``{"errors": (n_snr, 2, K), "totals": ..., "calibration": table}``.
    """
    cfg = spec.system
    K = cfg.num_users
    mm = draw_mismatch(seed_for(spec.seed, trial, "mismatch"), cfg)
    table = _trial_calibration(spec, cfg, mm, trial)
    errors = np.zeros((len(spec.snr_db), 2, K))
    totals = np.zeros((len(spec.snr_db), 2, K), dtype=np.int64)
    for slot in range(spec.num_slots):
        ch = draw_channel(seed_for(spec.seed, trial, "channel", slot), cfg)
        bits = draw_slot_bits(cfg, np.random.default_rng(seed_for(spec.seed, trial, "bits", slot)))
        for i, snr in enumerate(spec.snr_db):
            rng = np.random.default_rng(seed_for(spec.seed, trial, "noise", i, slot))
            res = run_slot(cfg, ch, mm, table, bits, snr_db=snr, precoder=spec.precoder,
                           mode=spec.mode, rng=rng, allow_invalid_calibration=True)
            errors[i] += res.errors
            totals[i] += res.totals
    return {"errors": errors, "totals": totals, "calibration": table}


def _run_frame_star(args):
    return run_frame(*args)


def sweep_snr(spec: ScenarioSpec, workers: int = 1) -> SimReport:
    """Monte-Carlo BER sweep; deterministic for a fixed ``spec.seed``.

    Trials are independent and may run on `workers` processes; results are
    reduced in trial order so the report does not depend on scheduling.
    """
    t0 = time.perf_counter()
    cfg = spec.system
    jobs = [(spec, t) for t in range(spec.frames)]
    if workers > 1 and spec.frames > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_frame_star, jobs))
    else:
        results = [_run_frame_star(j) for j in jobs]
    errors = sum(r["errors"] for r in results)
    totals = sum(r["totals"] for r in results)
    cal = []
    for t, r in enumerate(results):
        tab = r["calibration"]
        if tab is not None:
            cal.append({"trial": t, "ref_antenna": tab.ref_antenna, "valid": tab.valid,
                        "min_quality": float(tab.quality.min()), "reason": tab.reason})
    meta = {"seed": spec.seed, "version": __version__, "frames": spec.frames,
            "slots_per_frame": spec.num_slots, "precoder": spec.precoder,
            "calibration_mode": cfg.calibration_mode, "mode": spec.mode,
            "runtime_s": time.perf_counter() - t0}
    return SimReport(spec, spec.snr_db, errors, totals,
                     rates=rate_report(_modulations(cfg), cfg), calibration=cal,
                     metadata=meta)


# ---------------------------------------------------------------------------
# figures of merit
# ---------------------------------------------------------------------------

def rate_report(modulations: Sequence[str], cfg: SystemConfig | None = None) -> dict:
    """Peak rate, spectral efficiency and schedule-aware rate.

    The peak rate counts every OFDM symbol as data:
    ``sum_k bits_k * N_sc * symbol_rate``.
    """
    cfg = cfg or SystemConfig()
    bits = sum(bits_per_symbol(m) for m in modulations)
    peak = bits * cfg.used_subcarriers * cfg.symbol_rate
    sched = build_frame_schedule(cfg)
    return {"peak_rate": peak,
            "spectral_efficiency": peak / cfg.bandwidth,
            "scheduled_rate": peak * sched.data_symbols / sched.total_symbols}


def _normalized(R: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.abs(np.diagonal(R)).clip(1e-300))
    return R / np.outer(d, d)


def channel_stats(estimates, cfg: SystemConfig) -> dict:
    """Correlation matrices and impulse responses from uplink estimates.

    `estimates` is one or more per-subcarrier responses ``(N_sc, M, K)``
    (or :class:`~tddmimo.bs.UplinkChannelEstimate` objects). Correlations are
    averaged over all subcarriers and slots and normalized to a unit
    diagonal. Impulse responses ``(K, M, N_FFT)`` are the unitary inverse
    DFT of the mean-slot responses mapped onto the FFT grid.
    """
    if not isinstance(estimates, (list, tuple)):
        estimates = [estimates]
    Hs = [e.per_subcarrier if hasattr(e, "per_subcarrier") else np.asarray(e) for e in estimates]
    if not Hs:
        raise ValueError("need at least one slot of estimates")
    bs = sum(np.einsum("nmk,nlk->ml", H, H.conj()) for H in Hs)
    ue = sum(np.einsum("nmk,nml->kl", H.conj(), H) for H in Hs)
    last = np.transpose(Hs[-1], (2, 1, 0))  # (K, M, N_sc)
    impulse = unitary_dft(map_to_fft_bins(last, cfg), "inverse")
    return {"bs_correlation": _normalized(bs), "ue_correlation": _normalized(ue),
            "impulse_response": impulse, "num_samples": sum(H.shape[0] for H in Hs)}


@dataclass
class CalibrationStudy:
    tables: dict
    dl_ber: dict
    errors: dict
    totals: dict
    snr_db: float

    def inflation(self, scenario: str) -> float:
        a = self.dl_ber["A"]
        return np.inf if a == 0 else self.dl_ber[scenario] / a


def calibration_study(spec: ScenarioSpec, snr_db: float = 10.0,
                      interference_power: float = 100.0, edge_coupling_snr_db: float = 0.0) -> CalibrationStudy:
    """Contrast a clean calibration with two failure modes.

    * ``A``: silent UEs, reference antenna in the middle of the array.
    * ``B_interference``: UEs keep transmitting during sounding.
    * ``B_edge``: reference at the array edge with a weak coupling budget.

    The same trials (channels, mismatch, bits, noise) are then run with each
    table applied with Pre-Cal, invalid tables included.
    """
    cfg = spec.system.replace(calibration_mode="precal")
    if not cfg.mismatch_enabled:
        raise ValueError("calibration study needs mismatch enabled")
    M = cfg.num_bs_antennas
    tables = {k: [] for k in ("A", "B_interference", "B_edge")}
    errors = {k: 0.0 for k in tables}
    totals = {k: 0 for k in tables}
    for trial in range(spec.frames):
        mm = draw_mismatch(seed_for(spec.seed, trial, "mismatch"), cfg)
        c_seed, s_seed = seed_for(spec.seed, trial, "calibration").spawn(2)
        coupling = draw_coupling(c_seed, cfg, snr_db=spec.coupling_snr_db)
        weak = draw_coupling(c_seed, cfg, snr_db=edge_coupling_snr_db)
        H0 = freq_response(draw_channel(seed_for(spec.seed, trial, "channel", 0), cfg), cfg)
        intf = UeInterference(uplink_matrix(H0, mm), interference_power)
        envs = {"A": (CalibrationEnvironment(coupling, mm, None, s_seed), M // 2),
                "B_interference": (CalibrationEnvironment(coupling, mm, intf, s_seed), M // 2),
                "B_edge": (CalibrationEnvironment(weak, mm, None, s_seed), 0)}
        trial_tables = {k: run_reciprocity_calibration(env, ref, cfg)
                        for k, (env, ref) in envs.items()}
        for k, tab in trial_tables.items():
            tables[k].append(tab)
        for slot in range(spec.num_slots):
            ch = draw_channel(seed_for(spec.seed, trial, "channel", slot), cfg)
            bits = draw_slot_bits(cfg, np.random.default_rng(seed_for(spec.seed, trial, "bits", slot)))
            for k, tab in trial_tables.items():
                rng = np.random.default_rng(seed_for(spec.seed, trial, "noise", 0, slot))
                res = run_slot(cfg, ch, mm, tab, bits, snr_db=snr_db, precoder=spec.precoder,
                               rng=rng, allow_invalid_calibration=True)
                errors[k] += res.errors[1].sum()
                totals[k] += int(res.totals[1].sum())
    ber = {k: errors[k] / totals[k] for k in tables}
    return CalibrationStudy(tables, ber, errors, totals, snr_db)


# ---------------------------------------------------------------------------
# report files and scenario files
# ---------------------------------------------------------------------------

BER_COLUMNS = ("snr_db", "direction", "user", "ber", "ci_low", "ci_high")


def emit_report(report: SimReport | None, path, plots: bool = False) -> list:
    """Write ``ber.csv`` and ``summary.txt`` (plus PNG plots if requested).

    ``report=None`` (an empty sweep) writes a header-only table.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        ber_path = out / "ber.csv"
        with open(ber_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BER_COLUMNS)
            if report is not None:
                for snr, d, k, b, lo, hi in report.rows():
                    w.writerow([f"{snr:g}", d, k, f"{b:.6e}", f"{lo:.6e}", f"{hi:.6e}"])
        summary = out / "summary.txt"
        summary.write_text(_summary_text(report))
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    files = [ber_path, summary]
    if plots and report is not None:
        files.append(_plot_ber(report, out / "ber.png"))
    return files


def _summary_text(report: SimReport | None) -> str:
    if report is None:
        return "empty sweep\n"
    lines = [f"tddmimo {report.metadata.get('version', __version__)}",
             f"seed {report.spec.seed}"]
    cfg = report.spec.system
    lines.append(f"M={cfg.num_bs_antennas} K={cfg.num_users} N_sc={cfg.used_subcarriers} "
                 f"precoder={report.spec.precoder} calibration={cfg.calibration_mode} "
                 f"frames={report.spec.frames} slots_per_frame={report.spec.num_slots}")
    r = report.rates
    lines.append(f"peak_rate_bps {r['peak_rate']:.6g}")
    lines.append(f"spectral_efficiency_bps_hz {r['spectral_efficiency']:.6g}")
    lines.append(f"scheduled_rate_bps {r['scheduled_rate']:.6g}")
    for d in DIRECTIONS:
        ber = report.ber_of(d)
        lines.append(f"{d}_pooled_ber " + " ".join(f"{s:g}:{b:.3e}"
                                                   for s, b in zip(report.snr_db, ber)))
    for c in report.calibration:
        lines.append(f"calibration trial={c['trial']} ref={c['ref_antenna']} "
                     f"valid={int(c['valid'])} min_quality={c['min_quality']:.4f}")
    return "\n".join(lines) + "\n"


def _plot_ber(report: SimReport, path: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    ber = report.ber
    for d, ax in enumerate(axes):
        for k in range(ber.shape[2]):
            ax.semilogy(report.snr_db, np.maximum(ber[:, d, k], 1e-7), marker="o", lw=1,
                        label=f"UE{k}")
        ax.set_title(DIRECTIONS[d].upper())
        ax.set_xlabel("SNR (dB)")
        ax.grid(True, which="both", alpha=0.3)
    axes[0].set_ylabel("BER")
    axes[1].legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


_SCENARIO_FIELDS = {"snr_db", "frames", "precoder", "calibration_mode", "seed",
                    "slots_per_frame", "mode", "calibration_ref", "coupling_snr_db"}


def load_scenario(path, seed: int | None = None) -> ScenarioSpec:
    """Read an INI scenario: ``[system]`` for the config, ``[scenario]`` for the sweep."""
    parser = configparser.ConfigParser()
    if not parser.read(Path(path)):
        raise FileNotFoundError(path)
    cfg = config_from_mapping(dict(parser["system"]) if parser.has_section("system") else {})
    sc = dict(parser["scenario"]) if parser.has_section("scenario") else {}
    unknown = sorted(set(sc) - _SCENARIO_FIELDS)
    if unknown:
        raise ValueError("unknown scenario field(s): " + ", ".join(unknown))
    kw = {}
    if "snr_db" in sc:
        kw["snr_db"] = tuple(float(v) for v in sc["snr_db"].replace(",", " ").split())
    for name in ("frames", "seed", "slots_per_frame", "calibration_ref"):
        if name in sc:
            kw[name] = int(sc[name])
    for name in ("precoder", "calibration_mode", "mode"):
        if name in sc:
            kw[name] = sc[name].strip()
    if "coupling_snr_db" in sc:
        kw["coupling_snr_db"] = float(sc["coupling_snr_db"])
    if seed is not None:
        kw["seed"] = seed
    return ScenarioSpec(cfg=cfg, **kw)
