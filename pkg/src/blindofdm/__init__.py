"""Blind channel estimation for doubly selective OFDM links with ReLU networks."""

from .channel import (
    BemVarianceTable,
    CeBemRealization,
    ChannelMatrices,
    bem_variances,
    build_matrices,
    channel_taps,
    sample_bem,
    scattering_profiles,
)
from .dataset import DatasetSpec, LabeledSample, SampleSet, build_sample, generate
from .estimator import ChannelEstimate, estimate, testing_mse, time_domain_mse
from .nn import ReluNetwork, TrainConfig, fit, forward, init_network, train_step
from .ofdm import (
    ConfigError,
    OfdmConfig,
    channel_filter,
    dft_matrix,
    ofdm_modulate_with_cp,
    post_dft_receive,
    qpsk_symbols,
)

__version__ = "0.1.0"

__all__ = [
    "BemVarianceTable",
    "CeBemRealization",
    "ChannelMatrices",
    "bem_variances",
    "build_matrices",
    "channel_taps",
    "sample_bem",
    "scattering_profiles",
    "DatasetSpec",
    "LabeledSample",
    "SampleSet",
    "build_sample",
    "generate",
    "ChannelEstimate",
    "estimate",
    "testing_mse",
    "time_domain_mse",
    "ReluNetwork",
    "TrainConfig",
    "fit",
    "forward",
    "init_network",
    "train_step",
    "ConfigError",
    "OfdmConfig",
    "channel_filter",
    "dft_matrix",
    "ofdm_modulate_with_cp",
    "post_dft_receive",
    "qpsk_symbols",
]
