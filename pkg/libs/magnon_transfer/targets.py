from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Tuple, Union

import numpy as np

from .errors import ConfigError, CutoffError, NumericalError
from .fock import DensityMatrix, HilbertSpace, StateVector, mode_m_coefficients

_NORM_TOLERANCE = 1e-9
_SUPPORT_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """Initial mode-m superposition sum_k C_k |k>, reused as the target on mode b."""

    coeffs: Mapping[int, complex]

    def __post_init__(self) -> None:
        cleaned: Dict[int, complex] = {}
        for k, value in self.coeffs.items():
            if int(k) < 0:
                raise ConfigError(f"negative Fock level {k} in target")
            cleaned[int(k)] = complex(value)
        weight = sum(abs(c) ** 2 for c in cleaned.values())
        if abs(weight - 1.0) > _NORM_TOLERANCE:
            raise ConfigError(f"target coefficients not normalized: sum |C_k|^2 = {weight:.12g}")
        object.__setattr__(self, "coeffs", dict(sorted(cleaned.items())))

    @classmethod
    def fock(cls, k: int) -> "TargetSpec":
        return cls({int(k): 1.0})

    @classmethod
    def from_state(cls, state: StateVector) -> "TargetSpec":
        coeffs = {k: c for k, c in mode_m_coefficients(state).items() if abs(c) > 0}
        return cls(coeffs)

    @classmethod
    def from_density(cls, rho: DensityMatrix) -> "TargetSpec":
        """Support of a density matrix living on |k, 0>; only the weights |C_k|^2 are recovered."""
        space = rho.space
        weights = rho.diagonal()
        _, n_b = space.levels
        if np.any(np.abs(weights[n_b > 0]) > 1e-12):
            raise NumericalError("density matrix has phonon population; expected mode b in vacuum")
        coeffs = {
            k: complex(np.sqrt(max(weights[space.index_of(k, 0)], 0.0)))
            for k in range(space.n_max_m + 1)
            if weights[space.index_of(k, 0)] > _SUPPORT_FLOOR
        }
        total = sum(abs(c) ** 2 for c in coeffs.values())
        return cls({k: c / np.sqrt(total) for k, c in coeffs.items()})

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(k for k, c in self.coeffs.items() if abs(c) > 0)

    @property
    def mean_excitation(self) -> float:
        return float(sum(k * abs(c) ** 2 for k, c in self.coeffs.items()))

    def weights(self) -> Dict[int, float]:
        return {k: abs(c) ** 2 for k, c in self.coeffs.items() if abs(c) > 0}

    def indices(self, space: HilbertSpace) -> np.ndarray:
        """Basis indices of |0, k> for every k in the support."""
        top = max(self.support)
        if top > space.n_max_b:
            raise CutoffError(f"target level {top} beyond phonon cutoff {space.n_max_b}", required_cutoff=top)
        return np.array([space.index_of(0, k) for k in self.support], dtype=int)


def population(state: Union[StateVector, DensityMatrix], target: TargetSpec) -> float:
    """Target-state population sum_{C_k != 0} |<0k|psi>|^2, phase-insensitive."""
    indices = target.indices(state.space)
    if isinstance(state, StateVector):
        return float(np.sum(np.abs(state.amplitudes[indices]) ** 2))
    return float(np.sum(np.real(np.diag(state.entries)[indices])))
