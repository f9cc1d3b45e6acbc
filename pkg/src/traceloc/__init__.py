"""Weakly supervised relative indoor localization from WiFi fingerprint traces.

A simulated indoor field with a GPR-interpolated radio map feeds a paired-trace
synthesizer (fingerprint traces + stepwise displacement traces). Two autoencoders
sharing one latent space are trained so that latent addition and subtraction
mirror physical motion, enabling relative-displacement prediction between two
fingerprint traces and a few-shot absolute-localization extension.
"""

__version__ = "0.1.0"

from traceloc.exceptions import (
    ConfigError,
    DataIntegrityError,
    FitError,
    TraceLocError,
    TrainingDivergedError,
)

__all__ = [
    "__version__",
    "TraceLocError",
    "ConfigError",
    "DataIntegrityError",
    "FitError",
    "TrainingDivergedError",
]
