"""Cross-layer simulator for a header-only-verification transport protocol.

Modules:
    config     experiment parameters, file loading, validation
    integrity  one's-complement checksum, CRC-32, sync detection
    framing    frame build and layer-by-layer receive verification
    channel    SNR/BER analytics, bit-flip channel, Gray-QAM/AWGN simulator
    lossmodel  closed-form per-layer and cross-layer loss probabilities
    features   quantization, cross-image interleaving, erasure fill
    simulator  Monte Carlo loss/latency/burst engines
    cli        experiment runner and CSV/plot writer
"""

__version__ = "0.1.0"

from .config import (BurstSchedule, ConfigError, LatencyParams,  # noqa: F401
                     SimulationConfig, StackConfig, load_config)
from .framing import AppHeader, DropCause, Frame  # noqa: F401
from .integrity import PseudoHeader, SitpHeader  # noqa: F401
