import numpy as np
import pytest

from impz.forward_model import ForwardModelConfig
from impz.inverse_model import InverseModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_inv_cfg():
    return InverseModelConfig(gru_hidden=2, lpa_channels=2, dilation_set=(1, 2),
                              upsample_factor=2, regression_hidden=2)


@pytest.fixture
def tiny_fwd_cfg():
    return ForwardModelConfig(feat_channels=2, feat_kernel=3,
                              wavelet_kernel_length=7, downsample_stride=2)
