"""Dual-branch convolutional-Transformer EEG decoder, built from scratch.

Subpackages: autodiff engine (`autodiff`, `optim`, `gradcheck`),
Euclidean alignment (`align`), the decoder itself (`model`), trial-set
I/O and splits (`dataio`), metrics (`metrics`), and the run harness
(`runner`, `cli`).
"""

from .model import Model, ModelConfig, parameter_count, table_config

__all__ = ["Model", "ModelConfig", "parameter_count", "table_config"]
__version__ = "0.1.0"
