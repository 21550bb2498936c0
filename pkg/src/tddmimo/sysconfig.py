"""System numerology, TDD frame scheduling and pilot / sub-band resource mapping.

Every other module consumes the objects defined here. A :class:`SystemConfig`
is immutable once constructed; :func:`validate_config` checks it and returns it
unchanged.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "BITS_PER_SYMBOL",
    "ConfigError",
    "SymbolRole",
    "DEFAULT_SLOT_PATTERN",
    "SystemConfig",
    "Subframe",
    "FrameSchedule",
    "validate_config",
    "build_frame_schedule",
    "pilot_subcarriers",
    "subband_of",
    "fft_bin_indices",
    "signed_bins",
    "map_to_fft_bins",
    "unmap_from_fft_bins",
    "config_from_mapping",
    "load_system_config",
]

BITS_PER_SYMBOL = {"BPSK": 1, "QPSK": 2, "16QAM": 4, "64QAM": 6, "256QAM": 8}

CALIBRATION_MODES = ("off", "precal", "postcal")


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants."""


class SymbolRole(enum.Enum):
    SYNC = "Sync"
    UL_PILOT = "UlPilot"
    UL_DATA = "UlData"
    GUARD = "Guard"
    DL_PILOT = "DlPilot"
    DL_DATA = "DlData"


DEFAULT_SLOT_PATTERN = (
    SymbolRole.UL_PILOT,
    SymbolRole.UL_DATA,
    SymbolRole.UL_DATA,
    SymbolRole.GUARD,
    SymbolRole.DL_PILOT,
    SymbolRole.DL_DATA,
    SymbolRole.GUARD,
)


def _normalize_modulation(name: str) -> str:
    key = str(name).upper().replace("-", "").replace("_", "").strip()
    if key == "4QAM":
        key = "QPSK"
    return key


@dataclass(frozen=True)
class SystemConfig:
    """Numerology and switches of one TDD massive-MIMO cell.

    Defaults reproduce the 128-antenna, 12-user, 20 MHz LTE-like setup.
    ``per_user_modulation=None`` means QPSK for every user.

    The channel parameters (``num_taps``, ``pdp_decay_samples``) describe the
    tapped-delay-line substitute used in place of a full SCM channel.
    """

    num_bs_antennas: int = 128
    num_users: int = 12
    fft_size: int = 2048
    used_subcarriers: int = 1200
    bandwidth: int = 20_000_000
    sample_rate: int = 30_720_000
    symbols_per_slot: int = 7
    cp_scheme: str = "normal"
    per_user_modulation: tuple | None = None
    num_subband_processors: int = 4
    num_subsystems: int = 8
    rng_seed: int = 0
    mismatch_enabled: bool = True
    calibration_mode: str = "precal"
    slot_pattern: tuple = DEFAULT_SLOT_PATTERN
    num_taps: int = 6
    pdp_decay_samples: float = 1.0

    def __post_init__(self):
        mods = self.per_user_modulation
        if mods is None:
            mods = ("QPSK",) * max(int(self.num_users), 0)
        elif isinstance(mods, str):
            mods = tuple(m for m in mods.replace(",", " ").split())
        object.__setattr__(self, "per_user_modulation",
                           tuple(_normalize_modulation(m) for m in mods))
        pattern = tuple(r if isinstance(r, SymbolRole) else SymbolRole(r)
                        for r in self.slot_pattern)
        object.__setattr__(self, "slot_pattern", pattern)

    # derived quantities
    @property
    def M(self) -> int:
        return self.num_bs_antennas

    @property
    def K(self) -> int:
        return self.num_users

    @property
    def num_subbands(self) -> int:
        return self.used_subcarriers // self.num_users

    @property
    def subcarrier_spacing(self) -> float:
        return self.sample_rate / self.fft_size

    @property
    def cp_lengths(self) -> tuple:
        """Normal-CP sample counts for each symbol of a slot (160/144 at 2048)."""
        first = 160 * self.fft_size // 2048
        other = 144 * self.fft_size // 2048
        return (first,) + (other,) * (self.symbols_per_slot - 1)

    @property
    def slot_length(self) -> int:
        return sum(self.cp_lengths) + self.symbols_per_slot * self.fft_size

    @property
    def frame_length(self) -> int:
        return 20 * self.slot_length

    @property
    def symbol_rate(self) -> int:
        """OFDM symbols per second on one subcarrier (2 slots per ms)."""
        return self.symbols_per_slot * 2000

    @property
    def antennas_per_subsystem(self) -> int:
        return self.num_bs_antennas // self.num_subsystems

    @property
    def bits_per_symbol(self) -> tuple:
        return tuple(BITS_PER_SYMBOL[m] for m in self.per_user_modulation)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _pattern_violations(pattern: Sequence[SymbolRole]) -> list:
    problems = []
    seen = set()
    for role in pattern:
        if role is SymbolRole.SYNC:
            problems.append("slot pattern may not contain Sync symbols")
        if role is SymbolRole.UL_DATA and SymbolRole.UL_PILOT not in seen:
            problems.append("UlData appears before any UlPilot in the slot")
        if role is SymbolRole.DL_DATA and SymbolRole.DL_PILOT not in seen:
            problems.append("DlData appears before any DlPilot in the slot")
        if role is SymbolRole.DL_PILOT and SymbolRole.UL_PILOT not in seen:
            problems.append("DlPilot appears before any UlPilot in the slot")
        seen.add(role)
    return sorted(set(problems))


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Check every invariant of `cfg` and return it unchanged.

    Raises
    ------
    ConfigError
        Listing every violated invariant, one per line.
    """
    M, K = cfg.num_bs_antennas, cfg.num_users
    nsc, nfft = cfg.used_subcarriers, cfg.fft_size
    problems = []
    if K < 1:
        problems.append("K must be at least 1")
    if M < K:
        problems.append("M must be >= K")
    if K >= 1 and nsc % K:
        problems.append("K does not divide N_sc")
    if nsc >= nfft:
        problems.append("N_sc must be smaller than N_FFT")
    if nsc <= 0 or nsc % 2:
        problems.append("N_sc must be positive and even")
    if not _is_pow2(nfft):
        problems.append("N_FFT must be a power of two")
    if cfg.symbols_per_slot < 1:
        problems.append("N_s must be at least 1")
    if cfg.cp_scheme != "normal":
        problems.append("only the normal CP scheme is supported")
    if cfg.num_subband_processors < 1 or nsc % cfg.num_subband_processors:
        problems.append("num_subband_processors does not divide N_sc")
    if cfg.num_subsystems < 1 or M % cfg.num_subsystems:
        problems.append("num_subsystems does not divide M")
    else:
        per = M // cfg.num_subsystems
        if per > 1 and per % 2:
            problems.append("antennas per subsystem (M/num_subsystems) must be even")
    if len(cfg.per_user_modulation) != K:
        problems.append("per_user_modulation must have one entry per user")
    bad = sorted({m for m in cfg.per_user_modulation if m not in BITS_PER_SYMBOL})
    if bad:
        problems.append("unsupported modulation(s): " + ", ".join(bad))
    if cfg.calibration_mode not in CALIBRATION_MODES:
        problems.append("calibration_mode must be one of " + ", ".join(CALIBRATION_MODES))
    if len(cfg.slot_pattern) != cfg.symbols_per_slot:
        problems.append("slot pattern length must equal N_s")
    problems.extend(_pattern_violations(cfg.slot_pattern))
    if cfg.num_taps < 1:
        problems.append("num_taps must be at least 1")
    if cfg.pdp_decay_samples <= 0:
        problems.append("pdp_decay_samples must be positive")
    if cfg.sample_rate <= 0 or cfg.bandwidth <= 0:
        problems.append("sample_rate and bandwidth must be positive")
    if problems:
        raise ConfigError("invalid SystemConfig:\n  " + "\n  ".join(problems))
    return cfg


@dataclass(frozen=True)
class Subframe:
    index: int
    is_sync: bool
    slots: tuple  # 2 tuples of SymbolRole


@dataclass(frozen=True)
class FrameSchedule:
    """Symbol roles of one 10 ms radio frame (10 subframes x 2 slots)."""

    subframes: tuple

    def role(self, subframe: int, slot: int, symbol: int) -> SymbolRole:
        return self.subframes[subframe].slots[slot][symbol]

    def roles(self):
        """Flat iterator of (subframe, slot, symbol, role)."""
        for sf in self.subframes:
            for s, slot in enumerate(sf.slots):
                for i, role in enumerate(slot):
                    yield sf.index, s, i, role

    def count(self, *roles: SymbolRole) -> int:
        return sum(1 for *_, r in self.roles() if r in roles)

    @property
    def total_symbols(self) -> int:
        return sum(len(slot) for sf in self.subframes for slot in sf.slots)

    @property
    def data_symbols(self) -> int:
        return self.count(SymbolRole.UL_DATA, SymbolRole.DL_DATA)

    def data_slots(self):
        """(subframe, slot) pairs that carry traffic."""
        return [(sf.index, s) for sf in self.subframes if not sf.is_sync
                for s in range(len(sf.slots))]


def build_frame_schedule(cfg: SystemConfig) -> FrameSchedule:
    sync = (SymbolRole.SYNC,) * cfg.symbols_per_slot
    subframes = [Subframe(0, True, (sync, sync))]
    for i in range(1, 10):
        subframes.append(Subframe(i, False, (cfg.slot_pattern, cfg.slot_pattern)))
    return FrameSchedule(tuple(subframes))


def pilot_subcarriers(k: int, cfg: SystemConfig) -> np.ndarray:
    """Subcarriers carrying user `k`'s pilot: ``{n : n mod K == k}``."""
    if not 0 <= k < cfg.num_users:
        raise IndexError(f"user index {k} out of range [0, {cfg.num_users})")
    return np.arange(k, cfg.used_subcarriers, cfg.num_users)


def subband_of(n, cfg: SystemConfig):
    """Pilot sub-band holding subcarrier `n` (``n // K``); accepts arrays."""
    arr = np.asarray(n)
    if np.any(arr < 0) or np.any(arr >= cfg.used_subcarriers):
        raise IndexError(f"subcarrier index out of range [0, {cfg.used_subcarriers})")
    out = arr // cfg.num_users
    return int(out) if out.ndim == 0 else out


def signed_bins(cfg: SystemConfig) -> np.ndarray:
    """Signed frequency bin of every used subcarrier (DC excluded)."""
    half = cfg.used_subcarriers // 2
    n = np.arange(cfg.used_subcarriers)
    return np.where(n < half, n - half, n - half + 1)


def fft_bin_indices(cfg: SystemConfig) -> np.ndarray:
    """FFT array index (0..N_FFT-1) of every used subcarrier."""
    return signed_bins(cfg) % cfg.fft_size


def map_to_fft_bins(grid_column, cfg: SystemConfig) -> np.ndarray:
    """Place `N_sc` used-subcarrier values into an `N_FFT` bin vector.

    Lower half of the used band goes to negative bins, upper half to
    bins +1.., DC and guard bins are zero. Leading axes are preserved.
    """
    x = np.asarray(grid_column)
    if x.shape[-1] != cfg.used_subcarriers:
        raise ValueError(f"expected {cfg.used_subcarriers} values on the last axis, "
                         f"got {x.shape[-1]}")
    out = np.zeros(x.shape[:-1] + (cfg.fft_size,), dtype=np.result_type(x, np.complex128))
    out[..., fft_bin_indices(cfg)] = x
    return out


def unmap_from_fft_bins(bins, cfg: SystemConfig) -> np.ndarray:
    x = np.asarray(bins)
    if x.shape[-1] != cfg.fft_size:
        raise ValueError(f"expected {cfg.fft_size} bins on the last axis, got {x.shape[-1]}")
    return x[..., fft_bin_indices(cfg)]


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

_INT_FIELDS = {"num_bs_antennas", "num_users", "fft_size", "used_subcarriers", "bandwidth",
               "sample_rate", "symbols_per_slot", "num_subband_processors",
               "num_subsystems", "rng_seed", "num_taps"}
_FLOAT_FIELDS = {"pdp_decay_samples"}
_BOOL_FIELDS = {"mismatch_enabled"}


def _parse_value(name: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if name in _INT_FIELDS:
        return int(float(raw))
    if name in _FLOAT_FIELDS:
        return float(raw)
    if name in _BOOL_FIELDS:
        return raw.lower() in ("1", "true", "yes", "on")
    if name == "per_user_modulation":
        return tuple(m for m in raw.replace(",", " ").split())
    if name == "slot_pattern":
        return tuple(SymbolRole(r) for r in raw.replace(",", " ").split())
    return raw


def config_from_mapping(values: Mapping, **overrides) -> SystemConfig:
    """Build a validated config from string or typed values; `overrides` win."""
    names = {f.name for f in dataclasses.fields(SystemConfig)}
    merged = dict(values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(merged) - names)
    if unknown:
        raise ConfigError("unknown SystemConfig field(s): " + ", ".join(unknown))
    return validate_config(SystemConfig(**{k: _parse_value(k, v) for k, v in merged.items()}))


def load_system_config(path, **overrides) -> SystemConfig:
    """Read the ``[system]`` section of an INI-style scenario file."""
    parser = configparser.ConfigParser()
    if not parser.read(Path(path)):
        raise FileNotFoundError(path)
    section = dict(parser["system"]) if parser.has_section("system") else {}
    return config_from_mapping(section, **overrides)
