import numpy as np
import pytest

from isacal.core import WaveformConfig, draw_impairments
from isacal.scenario import preset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_wf():
    """Small waveform for fast unit tests."""
    return WaveformConfig(num_subcarriers=16, subcarrier_spacing=240e3,
                          wavelength=5e-3, tx_power=0.1, num_antennas=8)


@pytest.fixture
def small_config():
    """Desk preset shrunk for fast unit tests."""
    cfg = preset("desk")
    cfg.waveform = WaveformConfig(num_subcarriers=16, subcarrier_spacing=240e3,
                                  wavelength=5e-3, tx_power=0.1, num_antennas=8)
    cfg.sensing.n_theta = 61
    cfg.train.batch = 8
    cfg.train.iterations = 3
    cfg.eval.n_test = 100
    cfg.eval.n_calib = 1000
    cfg.__post_init__()
    return cfg


@pytest.fixture
def arrays(small_wf, rng):
    tx = draw_impairments(small_wf.num_antennas, small_wf.wavelength, rng)
    rx = draw_impairments(small_wf.num_antennas, small_wf.wavelength, rng)
    return tx, rx
