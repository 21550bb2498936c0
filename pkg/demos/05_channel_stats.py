"""Correlation and impulse response of the tapped-delay-line channel."""

import numpy as np

from tddmimo.channel import draw_channel, freq_response
from tddmimo.sim import channel_stats
from tddmimo.sysconfig import SystemConfig

cfg = SystemConfig(num_bs_antennas=64, num_subsystems=4)
Hs = [freq_response(draw_channel(s, cfg), cfg) for s in range(10)]
st = channel_stats(Hs, cfg)

ue = np.abs(st["ue_correlation"])
print(f"{st['num_samples']} subcarrier samples")
print(f"UE correlation: diagonal 1, largest off-diagonal {(ue - np.eye(len(ue))).max():.3f}")

pdp = (np.abs(st["impulse_response"]) ** 2).mean(axis=(0, 1))
pdp /= pdp.sum()
for lag in range(-2, 8):
    print(f"lag {lag:+d}: {10 * np.log10(pdp[lag]):6.1f} dB " + "#" * int(40 * pdp[lag]))
