"""Annealed Langevin samplers for linear inverse problems.

The package covers the full pipeline: observation models over finite
alphabets (``model``), annealing schedules with spectral pre-conditioning
(``schedule``), posterior score functions (``score``), splitting integrators
for first-, second- and third-order Langevin dynamics (``sampler``),
symbol detection with classical baselines (``detect``, ``estimators``),
empirical checks of the stationary law (``verify``) and a config-driven
command line (``cli``).
"""

from .exceptions import ConfigError, DegenerateNoiseError, DivergenceError
from .model import (
    ChannelSpec,
    Constellation,
    ForwardModel,
    apply_forward,
    complex_to_real,
    exponential_correlation,
    make_constellation,
    real_to_complex,
    sample_channel,
    sigma0_from_snr,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelSpec",
    "ConfigError",
    "Constellation",
    "DegenerateNoiseError",
    "DivergenceError",
    "ForwardModel",
    "apply_forward",
    "complex_to_real",
    "exponential_correlation",
    "make_constellation",
    "real_to_complex",
    "sample_channel",
    "sigma0_from_snr",
    "__version__",
]
