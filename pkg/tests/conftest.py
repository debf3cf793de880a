import numpy as np
import pytest

from jadce.system_model import SystemConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    return SystemConfig(N=6, M=4, T=5, q_s=0.5, adc_bits=2, snr_db=10.0)
