"""Fast invariant suite behind ``tddmimo self-test``.

Each check returns ``(name, passed, detail)``. The checks use small
configurations so the whole suite runs in a few seconds.
"""

from __future__ import annotations

import numpy as np

from .bs import CalibrationEnvironment, run_reciprocity_calibration
from .channel import (CouplingChannel, draw_channel, draw_mismatch, propagate_uplink,
                      propagate_uplink_freq, freq_response)
from .dataflow import RoutingAudit, SubsystemTopology, combine_all, split_all, throughput_report
from .numerics import lmmse_weights
from .phy import demodulate_slot, detect_pss, generate_pss, modulate_slot
from .sim import rate_report, run_slot
from .sysconfig import SystemConfig

__all__ = ["CHECKS", "run_self_test"]


def _rates():
    a = rate_report(["QPSK"] * 8)["peak_rate"]
    b = rate_report(["QPSK"] * 6 + ["16QAM"] * 2)["spectral_efficiency"]
    c = rate_report(["256QAM"] * 12)["spectral_efficiency"]
    return (a, b, c) == (268_800_000, 16.8, 80.64), f"{a} bit/s, {b} and {c} bit/s/Hz"


def _throughput():
    t = throughput_report(SubsystemTopology(), SystemConfig())
    ok = (t["per_chain"], t["per_subsystem"], t["total"]) == (50_400_000, 806_400_000,
                                                              6_451_200_000)
    return ok, f"{t['per_chain'] / 1e6} / {t['per_subsystem'] / 1e6} / {t['total'] / 1e6} MB/s"


def _lmmse():
    rng = np.random.default_rng(0)
    worst = 0.0
    for M, K in ((8, 2), (32, 6), (64, 12)):
        H = (rng.standard_normal((M, K)) + 1j * rng.standard_normal((M, K))) / np.sqrt(2)
        sigma = rng.uniform(0.01, 1.0)
        a = lmmse_weights(H, sigma, "qr")
        b = lmmse_weights(H, sigma, "direct")
        worst = max(worst, np.linalg.norm(a - b) / np.linalg.norm(b))
    return worst <= 1e-9, f"max relative difference {worst:.2e}"


def _clean_slot():
    cfg = SystemConfig(num_bs_antennas=32, num_users=4, fft_size=256, used_subcarriers=144,
                       bandwidth=2_500_000, sample_rate=3_840_000, num_subsystems=2,
                       mismatch_enabled=False, calibration_mode="off", num_taps=1,
                       per_user_modulation=("BPSK", "16QAM", "64QAM", "256QAM"))
    res = run_slot(cfg, draw_channel(1, cfg), rng=np.random.default_rng(1), route=True)
    ok = res.errors.sum() == 0 and res.instrumentation["routing_audit"].conserved()
    return ok, f"{res.errors.sum():g} bit errors"


def _calibration():
    cfg = SystemConfig(num_bs_antennas=16, num_users=4, fft_size=256, used_subcarriers=144,
                       bandwidth=2_500_000, sample_rate=3_840_000, num_subsystems=1)
    mm = draw_mismatch(3, cfg)
    rng = np.random.default_rng(4)
    ph = np.triu(rng.uniform(0, 2 * np.pi, (16, 16)), 1)
    gains = np.exp(1j * (ph + ph.T))
    np.fill_diagonal(gains, 0)
    tab = run_reciprocity_calibration(
        CalibrationEnvironment(CouplingChannel(gains, 0.0), mm), 8, cfg)
    r = tab.d[:, 0] * mm.bs_tx / mm.bs_rx
    dev = float(np.abs(r - r[0]).max())
    return dev <= 1e-9 and tab.valid, f"max deviation {dev:.2e}"


def _pss():
    cfg = SystemConfig()
    pss = generate_pss(cfg)
    hits = 0
    for off in (0, 500, 9000, 20000):
        rx = np.zeros(cfg.slot_length * 2, complex)
        rx[off:off + cfg.fft_size] = pss.template
        hits += detect_pss(rx, pss.template).peak_index == off
    return hits == 4, f"{hits}/4 offsets exact"


def _dataflow():
    cfg = SystemConfig()
    topo = SubsystemTopology.from_config(cfg)
    rng = np.random.default_rng(5)
    g = rng.standard_normal((128, 1200)) + 1j * rng.standard_normal((128, 1200))
    audit = RoutingAudit()
    inbox = combine_all(g, 0, topo, audit)
    out = split_all([c for items in inbox.values() for c in items], topo, audit)
    return bool(np.array_equal(out, g) and audit.conserved()), f"{len(audit.lines)} chunk moves"


def _ofdm():
    cfg = SystemConfig(num_bs_antennas=16, num_users=4, num_subsystems=1)
    rng = np.random.default_rng(6)
    grid = rng.standard_normal((4, 7, 1200)) + 1j * rng.standard_normal((4, 7, 1200))
    rt = float(np.abs(demodulate_slot(modulate_slot(grid, cfg), cfg) - grid).max())
    ch = draw_channel(7, cfg)
    mm = draw_mismatch(8, cfg)
    ytime = demodulate_slot(propagate_uplink(modulate_slot(grid, cfg), ch, mm), cfg)
    yfreq = propagate_uplink_freq(np.transpose(grid, (2, 0, 1)), freq_response(ch, cfg), mm, 0.0)
    dual = float(np.abs(np.transpose(ytime, (2, 0, 1)) - yfreq).max())
    return rt <= 1e-12 and dual <= 1e-9, f"round trip {rt:.1e}, dual path {dual:.1e}"


CHECKS = {
    "rate arithmetic": _rates,
    "throughput accounting": _throughput,
    "QR-LMMSE equivalence": _lmmse,
    "clean pipeline": _clean_slot,
    "calibration invariant": _calibration,
    "PSS timing": _pss,
    "dataflow permutation": _dataflow,
    "OFDM round trip / dual path": _ofdm,
}


def run_self_test(stream=None) -> bool:
    """Run every check, print one line each, return True if all pass."""
    ok_all = True
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= bool(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}", file=stream)
    return ok_all
