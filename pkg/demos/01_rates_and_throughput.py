"""Peak rate, spectral efficiency and the raw baseband data volume.

The peak rate counts every OFDM symbol as payload; the scheduled rate
accounts for the pilot, guard and sync symbols of the frame.
"""

from tddmimo.dataflow import SubsystemTopology, throughput_report
from tddmimo.sim import rate_report
from tddmimo.sysconfig import SystemConfig, build_frame_schedule

cfg = SystemConfig()
for mods in (["QPSK"] * 8, ["QPSK"] * 6 + ["16QAM"] * 2, ["256QAM"] * 12):
    r = rate_report(mods, cfg)
    print(f"{len(mods):2d} users {mods[-1]:>6}: peak {r['peak_rate'] / 1e6:7.1f} Mbit/s, "
          f"{r['spectral_efficiency']:6.2f} bit/s/Hz, scheduled {r['scheduled_rate'] / 1e6:6.1f} Mbit/s")

sched = build_frame_schedule(cfg)
print(f"frame: {sched.data_symbols} of {sched.total_symbols} symbols carry data")

t = throughput_report(SubsystemTopology.from_config(cfg), cfg)
print(f"per RF chain {t['per_chain'] / 1e6} MB/s, per subsystem {t['per_subsystem'] / 1e6} MB/s, "
      f"total {t['total'] / 1e9:.2f} GB/s")
