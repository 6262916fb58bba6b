import numpy as np
import pytest

from airmec import (SystemConfig, Topology, DEFAULT_TOPOLOGY, IrsConfig,
                    gen_scenario, make_dt_state)


@pytest.fixture
def tiny_config():
    """Desk-size instance that keeps solver calls fast."""
    return SystemConfig(K_a=2, K_o=2, M1=2, M2=2, N=2, seed=7)


@pytest.fixture
def tiny_scenario(tiny_config):
    channels = gen_scenario(tiny_config, DEFAULT_TOPOLOGY)
    rng = np.random.default_rng(123)
    irs = IrsConfig.random(tiny_config.N, rng)
    dt = make_dt_state(tiny_config)
    return tiny_config, channels, irs, dt


def random_composites(rng, K_a, K_o, M1, M2, scale=1.0):
    """Ad-hoc composite channels for formula-level tests."""
    from airmec.sysmodel import Composites
    def cn(shape):
        return scale * (rng.standard_normal(shape)
                        + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return Composites(cn((K_a, M1)), cn((K_o, M1)), cn((M2, M1)))
