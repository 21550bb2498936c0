"""BER versus SNR for MRT and LMMSE precoding, with and without calibration.

A short sweep (4 data slots per point); raise ``slots_per_frame`` or
``frames`` for smoother curves.
"""

import sys

from tddmimo.sim import ScenarioSpec, emit_report, sweep_snr

out = sys.argv[1] if len(sys.argv) > 1 else "demo_ber"
snr = (0.0, 4.0, 8.0)
print("precoder  calibration  " + "  ".join(f"DL@{s:g}dB" for s in snr) + "   UL@0dB")
for prec in ("mrt", "lmmse"):
    for cal in ("off", "precal"):
        rep = sweep_snr(ScenarioSpec(snr_db=snr, precoder=prec, calibration_mode=cal,
                                     slots_per_frame=4, seed=1))
        dl = "  ".join(f"{b:8.1e}" for b in rep.ber_of("dl"))
        print(f"{prec:8s}  {cal:11s}  {dl}  {rep.ber_of('ul')[0]:8.1e}")
emit_report(rep, out)
print(f"last sweep written to {out}/")
