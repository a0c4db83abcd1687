import numpy as np
import pytest

from wheeldyn.analytical import RobotParams
from wheeldyn.datagen import OracleConfig, collect

HIDDEN = RobotParams(tau_s=0.15, tau_w=0.15, slip_gain_s=0.9,
                     slip_gain_w=1.1, cmd_latency=0.04)


@pytest.fixture(scope="session")
def clean_ds():
    """Noise-free 120 s collection from the hidden oracle.

    Exactly realizable by the formulated family, so model-vs-data residuals
    isolate implementation error from modeling error.
    """
    return collect(OracleConfig(true_params=HIDDEN, seed=5), 120.0)


@pytest.fixture(scope="session")
def noisy_ds():
    """60 s collection with wheel slip noise and 1 mm capture noise."""
    cfg = OracleConfig(true_params=HIDDEN, slip_noise_std=0.03,
                       pose_noise_std=0.001, seed=3)
    return collect(cfg, 60.0)


@pytest.fixture(scope="session")
def hidden_params():
    return HIDDEN
