"""Link-level model of a TDD multi-user massive MIMO OFDM system.

Modules
-------
sysconfig  numerology, frame schedule, pilot and sub-band mapping
numerics   Gram-Schmidt QR and LMMSE kernels, unitary DFT
channel    multipath channels, transceiver mismatch, propagation
phy        QAM, CP-OFDM, PSS
bs         uplink estimation and detection, precoding, reciprocity calibration
ue         effective-channel estimation, MRC, BER counting
dataflow   subsystem combiner / splitter routing and throughput accounting
sim        slots, frames, Monte-Carlo sweeps, figures of merit, reports
"""

__version__ = "0.1.0"

from .sysconfig import SystemConfig, validate_config  # noqa: E402

__all__ = ["SystemConfig", "validate_config", "__version__"]
