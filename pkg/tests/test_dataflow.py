import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tddmimo.dataflow import (RoutingAudit, RoutingError, SubsystemTopology, combine,
                              combine_all, gather_partition, scatter_partition, split,
                              split_all, throughput_report)
from tddmimo.sysconfig import SystemConfig

from conftest import crandn


def _round_trip(grid, topo, audit=None):
    inbox = combine_all(grid, 0, topo, audit)
    chunks = []
    for p, items in inbox.items():
        chunks += scatter_partition(gather_partition(items, topo.num_antennas), p, 0, topo)
    return split_all(chunks, topo, audit)


def test_single_subsystem_single_processor(rng):
    topo = SubsystemTopology(1, 4, 1)
    g = crandn(rng, 4, 12)
    inbox = combine_all(g, 0, topo)
    assert list(inbox) == [0] and len(inbox[0]) == 4
    assert np.array_equal(gather_partition(inbox[0], 4), g)
    assert np.array_equal(_round_trip(g, topo), g)


def test_processor_partitions(rng):
    topo = SubsystemTopology()
    g = crandn(rng, 128, 1200)
    audit = RoutingAudit()
    inbox = combine_all(g, 3, topo, audit)
    assert sum(len(v) for v in inbox.values()) == 512
    assert len(audit.lines) == 512
    block = gather_partition(inbox[2], 128)
    assert np.array_equal(block, g[:, 600:900])
    assert topo.partition_bounds(1200, 2) == (600, 900)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([(1, 2, 1), (2, 4, 2), (4, 2, 3), (8, 16, 4)]), st.integers(0, 2 ** 31))
def test_round_trip_is_identity(shape, seed):
    S, A, P = shape
    topo = SubsystemTopology(S, A, P)
    g = crandn(np.random.default_rng(seed), S * A, 12 * P)
    audit = RoutingAudit()
    out = _round_trip(g, topo, audit)
    assert np.array_equal(out, g)
    assert audit.conserved() and audit.samples_in == g.size


def test_missing_partition_named(rng):
    topo = SubsystemTopology(2, 2, 3)
    inbox = combine_all(crandn(rng, 4, 9), 0, topo)
    chunks = [c for items in inbox.values() for c in items
              if not (c.antenna == 3 and c.partition == 1)]
    with pytest.raises(RoutingError, match="subsystem=1 antenna=3 partition=1"):
        split_all(chunks, topo)


def test_missing_antenna_stream(rng):
    topo = SubsystemTopology(1, 3, 1)
    with pytest.raises(RoutingError, match=r"\[1\]"):
        combine(0, {0: crandn(rng, 4), 2: crandn(rng, 4)}, 0, topo)


def test_misdelivered_chunk(rng):
    topo = SubsystemTopology(2, 1, 1)
    chunks = combine(1, crandn(rng, 1, 4), 0, topo)
    with pytest.raises(RoutingError):
        split(0, chunks, topo)


def test_topology_check():
    cfg = SystemConfig()
    SubsystemTopology.from_config(cfg).check(cfg)
    with pytest.raises(ValueError):
        SubsystemTopology(4, 16, 4).check(cfg)
    with pytest.raises(ValueError):
        SubsystemTopology(8, 16, 7).check(cfg)


def test_throughput_report():
    t = throughput_report(SubsystemTopology(), SystemConfig())
    assert t["per_chain"] == 50_400_000
    assert t["per_subsystem"] == 806_400_000
    assert t["total"] == 6_451_200_000
