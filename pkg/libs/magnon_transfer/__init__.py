"""Simulation and analysis of hybrid magnon-photon to phonon quantum state transfer."""

from .errors import ConfigError, NumericalError, TransferError

__all__ = ["ConfigError", "NumericalError", "TransferError"]
