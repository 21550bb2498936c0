import numpy as np
import pytest

from tddmimo.sysconfig import SystemConfig


def small_config(**changes):
    """32 antennas, 4 users, 144 of 256 subcarriers: fast but structurally complete."""
    base = dict(num_bs_antennas=32, num_users=4, fft_size=256, used_subcarriers=144,
                bandwidth=2_500_000, sample_rate=3_840_000, num_subsystems=2)
    base.update(changes)
    return SystemConfig(**base)


@pytest.fixture
def cfg():
    return SystemConfig()


@pytest.fixture
def small_cfg():
    return small_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 13):
        terminalreporter.write_line(mod.RESULTS.get(n, f"criterion {n}: not run"))
