"""Message-level model of the distributed BS data plane.

The array is split into subsystems of 16 antennas. On the uplink each
subsystem's combiner cuts every antenna's whole-band symbol into
``num_subband_processors`` contiguous partitions and sends partition ``p`` to
processor ``p``. On the downlink each subsystem's splitter collects the
precoded partitions back from all processors and reassembles the whole band
per antenna. No timing is modelled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .sysconfig import SystemConfig

__all__ = [
    "SubsystemTopology",
    "DataChunk",
    "RoutingAudit",
    "RoutingError",
    "combine",
    "combine_all",
    "gather_partition",
    "scatter_partition",
    "split",
    "split_all",
    "throughput_report",
]


class RoutingError(KeyError):
    pass


@dataclass(frozen=True)
class SubsystemTopology:
    num_subsystems: int = 8
    antennas_per_subsystem: int = 16
    num_subband_processors: int = 4
    bytes_per_sample: int = 3  # 12-bit I + 12-bit Q
    symbol_rate: int = 14_000

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "SubsystemTopology":
        return cls(cfg.num_subsystems, cfg.antennas_per_subsystem,
                   cfg.num_subband_processors, 3, cfg.symbol_rate)

    @property
    def num_antennas(self) -> int:
        return self.num_subsystems * self.antennas_per_subsystem

    def partition_bounds(self, nsc: int, p: int) -> tuple:
        width = nsc // self.num_subband_processors
        return p * width, (p + 1) * width

    def check(self, cfg: SystemConfig) -> "SubsystemTopology":
        if self.num_antennas != cfg.num_bs_antennas:
            raise ValueError("num_subsystems x antennas_per_subsystem must equal M")
        if cfg.used_subcarriers % self.num_subband_processors:
            raise ValueError("num_subband_processors must divide N_sc")
        return self


class DataChunk(NamedTuple):
    subsystem: int
    antenna: int  # global antenna index
    partition: int
    symbol: int
    payload: np.ndarray

    def address(self) -> str:
        return (f"subsystem={self.subsystem} antenna={self.antenna} "
                f"partition={self.partition} symbol={self.symbol} n={len(self.payload)}")


class RoutingAudit:
    """Text log with one line per routed chunk, used for conservation checks."""

    def __init__(self):
        self.lines: list = []
        self.samples_in = 0
        self.samples_out = 0

    def record(self, stage: str, chunk: DataChunk):
        self.lines.append(f"{stage} {chunk.address()}")
        if stage == "combine":
            self.samples_in += len(chunk.payload)
        elif stage == "split":
            self.samples_out += len(chunk.payload)

    def conserved(self) -> bool:
        return self.samples_in == self.samples_out

    def text(self) -> str:
        return "\n".join(self.lines) + ("\n" if self.lines else "")


def combine(subsystem: int, antenna_grids, symbol: int, topo: SubsystemTopology,
            audit: RoutingAudit | None = None) -> list:
    """Cut one subsystem's antenna symbols into processor-addressed chunks.

    `antenna_grids` is an ``(antennas_per_subsystem, N_sc)`` array or a
    mapping from local antenna index to its ``N_sc`` vector; every antenna
    must be present.
    """
    A = topo.antennas_per_subsystem
    if isinstance(antenna_grids, Mapping):
        missing = [a for a in range(A) if a not in antenna_grids]
        if missing:
            raise RoutingError(f"subsystem {subsystem}: missing antenna stream(s) {missing}")
        rows = [np.asarray(antenna_grids[a]) for a in range(A)]
    else:
        grid = np.asarray(antenna_grids)
        if grid.shape[0] != A:
            raise RoutingError(f"subsystem {subsystem}: expected {A} antenna streams, "
                               f"got {grid.shape[0]}")
        rows = list(grid)
    nsc = rows[0].shape[-1]
    chunks = []
    for p in range(topo.num_subband_processors):
        lo, hi = topo.partition_bounds(nsc, p)
        for a, row in enumerate(rows):
            chunk = DataChunk(subsystem, subsystem * A + a, p, symbol, row[lo:hi].copy())
            chunks.append(chunk)
            if audit is not None:
                audit.record("combine", chunk)
    return chunks


def combine_all(grid, symbol: int, topo: SubsystemTopology,
                audit: RoutingAudit | None = None) -> dict:
    """Run every subsystem's combiner on an ``(M, N_sc)`` symbol; chunks by processor."""
    grid = np.asarray(grid)
    A = topo.antennas_per_subsystem
    inbox = {p: [] for p in range(topo.num_subband_processors)}
    for s in range(topo.num_subsystems):
        for chunk in combine(s, grid[s * A:(s + 1) * A], symbol, topo, audit):
            inbox[chunk.partition].append(chunk)
    return inbox


def gather_partition(chunks: Iterable[DataChunk], num_antennas: int) -> np.ndarray:
    """Stack one processor's chunks into an ``(M, N_sc / P)`` block by antenna."""
    chunks = sorted(chunks, key=lambda c: c.antenna)
    if [c.antenna for c in chunks] != list(range(num_antennas)):
        raise RoutingError("processor inbox does not hold exactly one chunk per antenna")
    return np.stack([c.payload for c in chunks])


def scatter_partition(block, partition: int, symbol: int, topo: SubsystemTopology) -> list:
    """Address a processor's ``(M, N_sc / P)`` output block back to the subsystems."""
    block = np.asarray(block)
    A = topo.antennas_per_subsystem
    return [DataChunk(m // A, m, partition, symbol, block[m].copy())
            for m in range(block.shape[0])]


def split(subsystem: int, chunks: Iterable[DataChunk], topo: SubsystemTopology,
          audit: RoutingAudit | None = None) -> np.ndarray:
    """Reassemble a subsystem's whole-band antenna grids from processor chunks."""
    A = topo.antennas_per_subsystem
    P = topo.num_subband_processors
    table = {}
    for c in chunks:
        if c.subsystem != subsystem:
            raise RoutingError(f"chunk for subsystem {c.subsystem} delivered to {subsystem}")
        table[(c.antenna, c.partition)] = c
    rows = []
    for a in range(A):
        antenna = subsystem * A + a
        parts = []
        for p in range(P):
            if (antenna, p) not in table:
                raise RoutingError(f"missing partition: subsystem={subsystem} "
                                   f"antenna={antenna} partition={p}")
            chunk = table[(antenna, p)]
            if audit is not None:
                audit.record("split", chunk)
            parts.append(chunk.payload)
        rows.append(np.concatenate(parts))
    return np.stack(rows)


def split_all(chunks: Iterable[DataChunk], topo: SubsystemTopology,
              audit: RoutingAudit | None = None) -> np.ndarray:
    """Run every subsystem's splitter; returns the ``(M, N_sc)`` symbol."""
    by_sub = {s: [] for s in range(topo.num_subsystems)}
    for c in chunks:
        by_sub[c.subsystem].append(c)
    return np.concatenate([split(s, by_sub[s], topo, audit)
                           for s in range(topo.num_subsystems)])


def throughput_report(topo: SubsystemTopology, cfg: SystemConfig) -> dict:
    """Raw baseband throughput in bytes/s per RF chain, subsystem and in total."""
    per_chain = cfg.used_subcarriers * topo.symbol_rate * topo.bytes_per_sample
    per_subsystem = topo.antennas_per_subsystem * per_chain
    return {"per_chain": per_chain, "per_subsystem": per_subsystem,
            "total": topo.num_subsystems * per_subsystem}
