"""Command-line entry point: ``tddmimo {run,calibrate-study,rate,stats,self-test}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .channel import draw_channel, freq_response
from .sim import (ScenarioSpec, calibration_study, channel_stats, emit_report, load_scenario,
                  rate_report, seed_for, sweep_snr)
from .sysconfig import SystemConfig
from .dataflow import SubsystemTopology, throughput_report


def _spec(args) -> ScenarioSpec:
    if args.scenario:
        return load_scenario(args.scenario, seed=args.seed)
    return ScenarioSpec(seed=args.seed or 0)


def cmd_run(args) -> int:
    spec = _spec(args)
    report = sweep_snr(spec, workers=args.workers)
    files = emit_report(report, args.out, plots=args.plots)
    for f in files:
        print(f)
    return 0


def cmd_calibrate_study(args) -> int:
    spec = _spec(args)
    study = calibration_study(spec, snr_db=args.snr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"snr_db {study.snr_db:g}"]
    for name, tabs in study.tables.items():
        tab = tabs[0]
        tab.write_text(out / f"calibration_{name}.csv")
        mag = np.abs(tab.d)
        lines.append(f"{name} valid={int(tab.valid)} interference={int(tab.interference_detected)} "
                     f"min_quality={tab.quality.min():.4f} |d| spread={mag.max() - mag.min():.2e} "
                     f"dl_ber={study.dl_ber[name]:.4e} reason={tab.reason or '-'}")
    (out / "calibration_study.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_rate(args) -> int:
    cfg = SystemConfig()
    mods = args.modulation or ["QPSK"] * 8
    r = rate_report(mods, cfg)
    t = throughput_report(SubsystemTopology.from_config(cfg), cfg)
    print(f"users {len(mods)}: {' '.join(mods)}")
    print(f"peak_rate {r['peak_rate'] / 1e6:g} Mbit/s")
    print(f"spectral_efficiency {r['spectral_efficiency']:g} bit/s/Hz")
    print(f"scheduled_rate {r['scheduled_rate'] / 1e6:g} Mbit/s")
    print(f"throughput per_chain {t['per_chain'] / 1e6:g} MB/s, per_subsystem "
          f"{t['per_subsystem'] / 1e6:g} MB/s, total {t['total'] / 1e6:g} MB/s")
    return 0


def cmd_stats(args) -> int:
    spec = _spec(args)
    cfg = spec.system
    Hs = [freq_response(draw_channel(seed_for(spec.seed, 0, "channel", s), cfg), cfg)
          for s in range(args.slots)]
    st = channel_stats(Hs, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "ue_correlation.csv", np.abs(st["ue_correlation"]), delimiter=",", fmt="%.6f")
    np.savetxt(out / "bs_correlation.csv", np.abs(st["bs_correlation"]), delimiter=",", fmt="%.6f")
    pdp = (np.abs(st["impulse_response"]) ** 2).mean(axis=(0, 1))
    np.savetxt(out / "impulse_power.csv", pdp / pdp.sum(), delimiter=",", fmt="%.6e")
    ue = np.abs(st["ue_correlation"])
    print(f"samples {st['num_samples']}, max off-diagonal UE correlation "
          f"{(ue - np.diag(np.diag(ue))).max():.4f}")
    return 0


def cmd_self_test(args) -> int:
    from .selftest import run_self_test
    return 0 if run_self_test() else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tddmimo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("scenario", nargs="?", help="INI scenario file ([system], [scenario])")
        sp.add_argument("--seed", type=int, default=None, help="master seed override")
        sp.add_argument("--out", default=out_default, help="output directory")

    r = sub.add_parser("run", help="Monte-Carlo BER sweep")
    common(r, "results")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--plots", action="store_true", help="also write ber.png")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("calibrate-study", help="valid vs invalid calibration")
    common(c, "calibration")
    c.add_argument("--snr", type=float, default=10.0)
    c.set_defaults(func=cmd_calibrate_study)

    t = sub.add_parser("rate", help="peak rate, spectral efficiency, throughput")
    t.add_argument("modulation", nargs="*", help="one modulation per user (default 8 x QPSK)")
    t.set_defaults(func=cmd_rate)

    s = sub.add_parser("stats", help="channel correlation and impulse response")
    common(s, "stats")
    s.add_argument("--slots", type=int, default=4)
    s.set_defaults(func=cmd_stats)

    st = sub.add_parser("self-test", help="fast invariant suite; nonzero exit on failure")
    st.set_defaults(func=cmd_self_test)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
