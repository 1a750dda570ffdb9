from __future__ import annotations

from typing import Optional


class TransferError(Exception):
    """Base class for every error raised by the magnon_transfer package."""


class ConfigError(TransferError, ValueError):
    pass


class CutoffError(ConfigError):
    def __init__(self, message: str, required_cutoff: Optional[int] = None) -> None:
        super().__init__(message)
        self.required_cutoff = required_cutoff


class MemoryBudgetError(ConfigError):
    pass


class NumericalError(TransferError, RuntimeError):
    pass


class SingularControlError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class StepRefinementError(NumericalError):
    def __init__(self, message: str, n_steps: int, delta: float) -> None:
        super().__init__(message)
        self.n_steps = n_steps
        self.delta = delta


class SweepPointError(NumericalError):
    def __init__(self, message: str, gamma: float, eta: float) -> None:
        super().__init__(f"sweep point (gamma={gamma:.6g}, eta={eta:.6g}): {message}")
        self.gamma = gamma
        self.eta = eta
