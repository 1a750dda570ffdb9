"""Truncated two-mode Fock space, bosonic ladder operators and initial-state constructors.

Basis order is row-major: ``index_of(n_m, n_b) = n_m * (n_max_b + 1) + n_b``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, CutoffError, MemoryBudgetError, NumericalError

MODES = ("m", "b")

TAIL_TOLERANCE = 1e-10
FOCK_HEADROOM = 3
_DEFAULT_MAX_OPERATOR_MB = 512
_MAX_CAT_CUTOFF = 4000


def max_operator_bytes() -> int:
    raw = os.getenv("MAGNON_TRANSFER_MAX_OPERATOR_MB", str(_DEFAULT_MAX_OPERATOR_MB))
    try:
        megabytes = float(raw)
    except ValueError as exc:
        raise MemoryBudgetError(f"Unsupported MAGNON_TRANSFER_MAX_OPERATOR_MB: {raw}") from exc
    return int(megabytes * 1024 * 1024)


@dataclass(frozen=True)
class HilbertSpace:
    n_max_m: int
    n_max_b: int

    @property
    def dim(self) -> int:
        return (self.n_max_m + 1) * (self.n_max_b + 1)

    def index_of(self, n_m: int, n_b: int) -> int:
        if not (0 <= n_m <= self.n_max_m and 0 <= n_b <= self.n_max_b):
            raise CutoffError(
                f"Fock level ({n_m}, {n_b}) outside cutoffs ({self.n_max_m}, {self.n_max_b})",
                required_cutoff=max(n_m, n_b),
            )
        return n_m * (self.n_max_b + 1) + n_b

    @cached_property
    def levels(self) -> Tuple[np.ndarray, np.ndarray]:
        n_m, n_b = np.divmod(np.arange(self.dim), self.n_max_b + 1)
        return n_m, n_b

    @cached_property
    def total_excitation(self) -> np.ndarray:
        n_m, n_b = self.levels
        return n_m + n_b

    def excitation_block(self, N: int) -> np.ndarray:
        return np.flatnonzero(self.total_excitation == N)

    def is_complete_block(self, N: int) -> bool:
        return 0 <= N <= min(self.n_max_m, self.n_max_b)

    def vacuum(self) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=complex)
        vec[0] = 1.0
        return vec


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    space: HilbertSpace

    def __post_init__(self) -> None:
        amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if amplitudes.shape != (self.space.dim,):
            raise NumericalError(f"state has shape {amplitudes.shape}, expected ({self.space.dim},)")
        drift = abs(float(np.linalg.norm(amplitudes)) - 1.0)
        if drift > 1e-9:
            raise NumericalError(f"state not normalized: | |psi| - 1 | = {drift:.3e}")
        object.__setattr__(self, "amplitudes", amplitudes)

    def amplitude(self, n_m: int, n_b: int) -> complex:
        return complex(self.amplitudes[self.space.index_of(n_m, n_b)])

    def mean_excitation(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2 * self.space.total_excitation))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    entries: np.ndarray
    space: HilbertSpace
    hermitian_flag: bool = False

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=complex)
        dim = self.space.dim
        if entries.shape != (dim, dim):
            raise NumericalError(f"operator has shape {entries.shape}, expected ({dim}, {dim})")
        if self.hermitian_flag:
            deviation = hermiticity_deviation(entries)
            if deviation >= 1e-12:
                raise NumericalError(f"operator flagged Hermitian deviates by {deviation:.3e}")
        object.__setattr__(self, "entries", entries)

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T, self.space, self.hermitian_flag)

    def apply(self, state: StateVector) -> np.ndarray:
        return self.entries @ state.amplitudes

    def expectation(self, state: StateVector) -> complex:
        return complex(np.vdot(state.amplitudes, self.entries @ state.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray
    space: HilbertSpace
    validate: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=complex)
        dim = self.space.dim
        if entries.shape != (dim, dim):
            raise NumericalError(f"density matrix has shape {entries.shape}, expected ({dim}, {dim})")
        if self.validate:
            deviation = hermiticity_deviation(entries)
            if deviation >= 1e-10:
                raise NumericalError(f"density matrix not Hermitian: deviation {deviation:.3e}")
            trace_drift = abs(complex(np.trace(entries)) - 1.0)
            if trace_drift > 1e-8:
                raise NumericalError(f"density matrix trace drift {trace_drift:.3e}")
            lowest = float(np.linalg.eigvalsh(0.5 * (entries + entries.conj().T))[0])
            if lowest < -1e-8:
                raise NumericalError(f"density matrix has negative eigenvalue {lowest:.3e}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        psi = state.amplitudes
        return cls(np.outer(psi, psi.conj()), state.space)

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.entries))


def hermiticity_deviation(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(matrix - matrix.conj().T)))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def build_space(n_max_m: int, n_max_b: int) -> HilbertSpace:
    if int(n_max_m) != n_max_m or int(n_max_b) != n_max_b:
        raise CutoffError(f"cutoffs must be integers, got ({n_max_m}, {n_max_b})")
    if n_max_m < 0 or n_max_b < 0:
        raise CutoffError(f"cutoffs must be >= 0, got ({n_max_m}, {n_max_b})")
    space = HilbertSpace(int(n_max_m), int(n_max_b))
    needed = space.dim * space.dim * np.dtype(complex).itemsize
    limit = max_operator_bytes()
    if needed > limit:
        raise MemoryBudgetError(
            f"dense operators on dim={space.dim} need {needed} bytes, above the limit of {limit} bytes "
            "(raise MAGNON_TRANSFER_MAX_OPERATOR_MB)"
        )
    return space


def _single_mode_lowering(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ConfigError(f"unsupported mode {mode!r}, expected one of {MODES}")


def annihilation_op(space: HilbertSpace, mode: str) -> OperatorMatrix:
    _check_mode(mode)
    if mode == "m":
        entries = np.kron(_single_mode_lowering(space.n_max_m), np.eye(space.n_max_b + 1))
    else:
        entries = np.kron(np.eye(space.n_max_m + 1), _single_mode_lowering(space.n_max_b))
    return OperatorMatrix(entries, space)


def creation_op(space: HilbertSpace, mode: str) -> OperatorMatrix:
    return annihilation_op(space, mode).dag()


def number_op(space: HilbertSpace, mode: str) -> OperatorMatrix:
    _check_mode(mode)
    n_m, n_b = space.levels
    counts = n_m if mode == "m" else n_b
    return OperatorMatrix(np.diag(counts.astype(complex)), space, hermitian_flag=True)


def fock_product_state(space: HilbertSpace, k_m: int, k_b: int) -> StateVector:
    vec = np.zeros(space.dim, dtype=complex)
    vec[space.index_of(k_m, k_b)] = 1.0
    return StateVector(vec, space)


def coherent_amplitudes(zeta: complex, n_max: int) -> np.ndarray:
    """Glauber coherent-state amplitudes e^{-|z|^2/2} z^n / sqrt(n!) for n = 0..n_max."""
    zeta = complex(zeta)
    levels = np.arange(n_max + 1)
    if zeta == 0:
        out = np.zeros(n_max + 1, dtype=complex)
        out[0] = 1.0
        return out
    radius = abs(zeta)
    log_mag = -0.5 * radius**2 + levels * math.log(radius) - 0.5 * gammaln(levels + 1)
    return np.exp(log_mag) * np.exp(1j * levels * np.angle(zeta))


def even_cat_amplitudes(zeta: complex, n_max: int) -> np.ndarray:
    zeta = complex(zeta)
    norm = 1.0 / math.sqrt(2.0 + 2.0 * math.exp(-2.0 * abs(zeta) ** 2))
    out = 2.0 * norm * coherent_amplitudes(zeta, n_max)
    out[1::2] = 0.0
    return out


def cat_tail_mass(zeta: complex, n_max: int) -> float:
    kept = float(np.sum(np.abs(even_cat_amplitudes(zeta, n_max)) ** 2))
    return max(0.0, 1.0 - kept)


def required_cat_cutoff(zeta: complex, tolerance: float = TAIL_TOLERANCE) -> int:
    probabilities = np.abs(even_cat_amplitudes(zeta, _MAX_CAT_CUTOFF)) ** 2
    tails = 1.0 - np.cumsum(probabilities)
    hits = np.flatnonzero(tails < tolerance)
    if hits.size == 0:
        raise CutoffError(f"cat amplitude |zeta|={abs(zeta):.3g} needs a cutoff above {_MAX_CAT_CUTOFF}")
    return int(hits[0])


def choose_cutoff(*, fock_levels: Iterable[int] = (), zeta: Optional[complex] = None, headroom: int = 0) -> int:
    """Smallest per-mode cutoff that holds the initial state (tail mass < 1e-10 for cats)."""
    levels = [int(k) for k in fock_levels]
    if zeta is not None:
        base = required_cat_cutoff(zeta)
    elif levels:
        base = max(levels) + FOCK_HEADROOM
    else:
        raise CutoffError("cutoff chooser needs Fock levels or a cat amplitude")
    return base + max(0, int(headroom))


def cat_state(space: HilbertSpace, zeta: complex, mode: str = "m") -> StateVector:
    _check_mode(mode)
    n_max = space.n_max_m if mode == "m" else space.n_max_b
    tail = cat_tail_mass(zeta, n_max)
    if tail >= TAIL_TOLERANCE:
        required = required_cat_cutoff(zeta)
        raise CutoffError(
            f"cat state zeta={complex(zeta):.6g} loses {tail:.3e} of its weight beyond cutoff {n_max}; "
            f"cutoff {required} required",
            required_cutoff=required,
        )
    amplitudes = even_cat_amplitudes(zeta, n_max)
    amplitudes = amplitudes / np.linalg.norm(amplitudes)
    vec = np.zeros(space.dim, dtype=complex)
    for n, value in enumerate(amplitudes):
        if value == 0:
            continue
        index = space.index_of(n, 0) if mode == "m" else space.index_of(0, n)
        vec[index] = value
    return StateVector(vec, space)


def superposed_initial(space: HilbertSpace, coeffs: Mapping[int, complex]) -> StateVector:
    if not coeffs:
        raise ConfigError("superposition needs at least one coefficient")
    weight = sum(abs(complex(c)) ** 2 for c in coeffs.values())
    if abs(weight - 1.0) > 1e-9:
        raise ConfigError(f"superposition coefficients not normalized: sum |C_k|^2 = {weight:.12g}")
    vec = np.zeros(space.dim, dtype=complex)
    for k, value in coeffs.items():
        if int(k) < 0:
            raise ConfigError(f"negative Fock level {k} in superposition")
        vec[space.index_of(int(k), 0)] = complex(value)
    return StateVector(vec, space)


def mode_m_coefficients(state: StateVector) -> Dict[int, complex]:
    """C_k of a state of the form (sum_k C_k |k>_m)|0>_b."""
    space = state.space
    n_m, n_b = space.levels
    if np.any(np.abs(state.amplitudes[n_b > 0]) > 1e-12):
        raise NumericalError("state has phonon excitations; expected mode b in vacuum")
    return {int(k): complex(state.amplitudes[space.index_of(int(k), 0)]) for k in range(space.n_max_m + 1)}


def hybrid_mode_ops(space: HilbertSpace, theta: float) -> Tuple[OperatorMatrix, OperatorMatrix]:
    m = annihilation_op(space, "m").entries
    b = annihilation_op(space, "b").entries
    c, s = math.cos(theta), math.sin(theta)
    return OperatorMatrix(c * m + s * b, space), OperatorMatrix(s * m - c * b, space)


def _ladder_vector(a_dag: np.ndarray, b_dag: np.ndarray, p: int, q: int, space: HilbertSpace) -> np.ndarray:
    vec = space.vacuum()
    for _ in range(q):
        vec = b_dag @ vec
    for _ in range(p):
        vec = a_dag @ vec
    return vec


def _check_block(space: HilbertSpace, N: int, n: int) -> None:
    if not space.is_complete_block(N):
        raise CutoffError(
            f"excitation number N={N} exceeds cutoffs ({space.n_max_m}, {space.n_max_b})",
            required_cutoff=N,
        )
    if not 0 <= n <= N:
        raise ConfigError(f"eigenstate index n={n} outside [0, N={N}]")


def fixed_N_eigenstate(space: HilbertSpace, theta: float, N: int, n: int) -> StateVector:
    """(A^dag)^{N-n} (B^dag)^n |0> / sqrt((N-n)! n!), phases as constructed."""
    _check_block(space, N, n)
    a_op, b_op = hybrid_mode_ops(space, theta)
    a_dag, b_dag = a_op.entries.conj().T, b_op.entries.conj().T
    scale = 1.0 / math.sqrt(math.factorial(N - n) * math.factorial(n))
    return StateVector(scale * _ladder_vector(a_dag, b_dag, N - n, n, space), space)


def fixed_N_eigenstate_derivative(space: HilbertSpace, theta: float, N: int, n: int) -> np.ndarray:
    """d/dtheta of fixed_N_eigenstate, using dA^dag/dtheta = -B^dag and dB^dag/dtheta = A^dag."""
    _check_block(space, N, n)
    a_op, b_op = hybrid_mode_ops(space, theta)
    a_dag, b_dag = a_op.entries.conj().T, b_op.entries.conj().T
    p, q = N - n, n
    scale = 1.0 / math.sqrt(math.factorial(p) * math.factorial(q))
    out = np.zeros(space.dim, dtype=complex)
    if p > 0:
        out -= p * _ladder_vector(a_dag, b_dag, p - 1, q + 1, space)
    if q > 0:
        out += q * _ladder_vector(a_dag, b_dag, p + 1, q - 1, space)
    return scale * out
