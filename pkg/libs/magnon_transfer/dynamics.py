"""Hamiltonians of the hybrid-mode/phonon pair and their propagation.

Unitary runs use a midpoint exponential stepper (each step exactly unitary up to rounding);
RWA runs can be split into fixed-excitation blocks. Open-system runs integrate the Lindblad
master equation with classical RK4 in matrix form.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import constants, linalg
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from .errors import ConfigError, NumericalError, StepRefinementError
from .fock import (
    DensityMatrix,
    HilbertSpace,
    OperatorMatrix,
    StateVector,
    annihilation_op,
    hermiticity_deviation,
)
from .observability import get_logger
from .protocols import ControlSample, LRParams, PulseSchedule, lr_invariant_op
from .targets import TargetSpec

logger = get_logger(__name__)

MIN_STEPS = 100
DEFAULT_STEPS = 2000
NORM_DRIFT_LIMIT = 1e-8
TRACE_DRIFT_LIMIT = 1e-6
NEGATIVITY_LIMIT = -1e-6
HERMITICITY_LIMIT = 1e-12


class Frame(str, Enum):
    RWA = "rwa"
    COUNTER_ROTATING = "counter_rotating"


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    schedule: PulseSchedule
    gamma: float = 0.0
    eta: float = 0.0
    frame: Frame = Frame.RWA
    omega_b_over_Omega: Optional[float] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gamma) and math.isfinite(self.eta)):
            raise ConfigError(f"systematic errors must be finite, got gamma={self.gamma}, eta={self.eta}")
        if self.frame == Frame.COUNTER_ROTATING:
            ratio = self.omega_b_over_Omega
            if ratio is None or not ratio > 0:
                raise ConfigError(f"counter-rotating frame needs omega_b_over_Omega > 0, got {ratio}")

    @property
    def T(self) -> float:
        return self.schedule.T

    @property
    def omega_b(self) -> float:
        return float(self.omega_b_over_Omega or 0.0) * self.schedule.omega

    def with_errors(self, gamma: float, eta: float) -> "HamiltonianSpec":
        return dataclasses.replace(self, gamma=float(gamma), eta=float(eta))


def thermal_occupation(omega: float, temperature: float) -> float:
    """Bose-Einstein occupation of a mode at angular frequency omega (rad/s) and temperature (K)."""
    if not omega > 0:
        raise ConfigError(f"mode frequency must be > 0, got {omega}")
    if temperature < 0:
        raise ConfigError(f"temperature must be >= 0, got {temperature}")
    if temperature == 0:
        return 0.0
    exponent = constants.hbar * omega / (constants.k * temperature)
    return float(1.0 / math.expm1(exponent))


@dataclass(frozen=True)
class LindbladSpec:
    """Dissipator rates in units of Omega and thermal occupations of both modes."""

    kappa_m: float
    kappa_b: float
    n_bar_m: float = 0.0
    n_bar_b: float = 0.0

    def __post_init__(self) -> None:
        for name in ("kappa_m", "kappa_b", "n_bar_m", "n_bar_b"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")

    @classmethod
    def from_bath(
        cls,
        *,
        kappa_m: float,
        kappa_b: float,
        omega_m: float,
        omega_b: float,
        omega: float,
        temperature: float,
    ) -> "LindbladSpec":
        """kappa_* in 1/s, omega_* and omega (= Omega) in rad/s."""
        if not omega > 0:
            raise ConfigError(f"Omega must be > 0, got {omega}")
        return cls(
            kappa_m=kappa_m / omega,
            kappa_b=kappa_b / omega,
            n_bar_m=thermal_occupation(omega_m, temperature),
            n_bar_b=thermal_occupation(omega_b, temperature),
        )

    def jump_terms(self) -> List[Tuple[float, str, bool]]:
        """(rate, mode, raising) for every nonzero dissipator."""
        terms = [
            (self.kappa_m * (self.n_bar_m + 1.0), "m", False),
            (self.kappa_m * self.n_bar_m, "m", True),
            (self.kappa_b * (self.n_bar_b + 1.0), "b", False),
            (self.kappa_b * self.n_bar_b, "b", True),
        ]
        return [term for term in terms if term[0] > 0]


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    populations: np.ndarray
    final_state: Union[StateVector, DensityMatrix]
    norm_drifts: np.ndarray
    excitation: np.ndarray
    n_steps: int
    states: Optional[List[np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise NumericalError("trajectory times must be strictly increasing")
        if np.any(self.populations > 1.0 + 1e-8) or np.any(self.populations < -1e-8):
            raise NumericalError(
                f"population left [0, 1]: range [{self.populations.min():.3e}, {self.populations.max():.3e}]"
            )

    @property
    def final_population(self) -> float:
        return float(self.populations[-1])

    @property
    def norm_drift(self) -> float:
        return float(np.max(self.norm_drifts))

    @property
    def excitation_drift(self) -> float:
        return float(np.max(np.abs(self.excitation - self.excitation[0])))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"t": self.times, "population": self.populations, "norm_drift": self.norm_drifts, "excitation": self.excitation}
        )


@dataclass(frozen=True, eq=False)
class _ModeOperators:
    hop: np.ndarray
    imbalance: np.ndarray
    n_m: np.ndarray
    n_b: np.ndarray
    m: np.ndarray
    b: np.ndarray


@lru_cache(maxsize=16)
def _mode_operators(space: HilbertSpace) -> _ModeOperators:
    m = annihilation_op(space, "m").entries
    b = annihilation_op(space, "b").entries
    n_m, n_b = space.levels
    ops = _ModeOperators(
        hop=m.conj().T @ b,
        imbalance=(n_m - n_b).astype(float),
        n_m=n_m.astype(float),
        n_b=n_b.astype(float),
        m=m,
        b=b,
    )
    for item in dataclasses.fields(ops):
        getattr(ops, item.name).setflags(write=False)
    return ops


def hop_coefficient(sample: ControlSample, gamma: float = 0.0) -> complex:
    """Coefficient of m^dag b; the coupling error scales the counterdiabatic rate with the bare coupling."""
    return (1.0 + gamma) * (complex(sample.g_real, -sample.g_imag) - 1j * sample.theta_dot)


def pair_coefficients(sample: ControlSample, gamma: float = 0.0) -> Tuple[complex, complex]:
    """(m^dag b, m^dag b^dag) coefficients in the lab-like frame.

    The complex coupling enters as g_real + i g_imag and the counterdiabatic
    rate only dresses the excitation-conserving pair.
    """
    coupling = (1.0 + gamma) * complex(sample.g_real, sample.g_imag)
    return coupling - 1j * (1.0 + gamma) * sample.theta_dot, coupling


def build_hamiltonian(space: HilbertSpace, spec: HamiltonianSpec, t: float) -> OperatorMatrix:
    """(1+eta) H_Delta + (1+gamma) (H_g + H_CD) in the frame rotating with the modes."""
    sample = spec.schedule.sample(t)
    ops = _mode_operators(space)
    c = hop_coefficient(sample, spec.gamma)
    entries = np.diag(0.5 * (1.0 + spec.eta) * sample.delta * ops.imbalance).astype(complex)
    entries += c * ops.hop + np.conj(c) * ops.hop.conj().T
    return OperatorMatrix(entries, space, hermitian_flag=True)


def build_cr_hamiltonian(space: HilbertSpace, spec: HamiltonianSpec, t: float) -> OperatorMatrix:
    """Hamiltonian keeping the m^dag b^dag pair-creation terms, with omega_b = ratio * Omega."""
    if spec.frame != Frame.COUNTER_ROTATING:
        raise ConfigError("counter-rotating Hamiltonian needs frame=counter_rotating")
    sample = spec.schedule.sample(t)
    ops = _mode_operators(space)
    omega_b = spec.omega_b
    hop, pair = pair_coefficients(sample, spec.gamma)
    energies = (omega_b + (1.0 + spec.eta) * sample.delta) * ops.n_m + omega_b * ops.n_b
    entries = np.diag(energies).astype(complex)
    creation = ops.m.conj().T @ ops.b.conj().T
    entries += hop * ops.hop + pair * creation
    entries += np.conj(hop) * ops.hop.conj().T + np.conj(pair) * creation.conj().T
    return OperatorMatrix(entries, space, hermitian_flag=True)


def hamiltonian(space: HilbertSpace, spec: HamiltonianSpec, t: float) -> OperatorMatrix:
    if spec.frame == Frame.COUNTER_ROTATING:
        return build_cr_hamiltonian(space, spec, t)
    return build_hamiltonian(space, spec, t)


def _unitary_step(h: np.ndarray, dt: float) -> np.ndarray:
    energies, vectors = linalg.eigh(h)
    return (vectors * np.exp(-1j * dt * energies)) @ vectors.conj().T


@dataclass(frozen=True, eq=False)
class _Block:
    indices: np.ndarray
    imbalance: np.ndarray
    hop: np.ndarray


@lru_cache(maxsize=16)
def _excitation_blocks(space: HilbertSpace) -> Dict[int, _Block]:
    """m^dag b restricted to each fixed-excitation block, built from the level index map."""
    n_m, n_b = space.levels
    blocks: Dict[int, _Block] = {}
    for N in np.unique(space.total_excitation):
        indices = space.excitation_block(int(N))
        levels_m, levels_b = n_m[indices], n_b[indices]
        position = {int(level): pos for pos, level in enumerate(levels_m)}
        hop = np.zeros((indices.size, indices.size), dtype=complex)
        for col, (km, kb) in enumerate(zip(levels_m, levels_b)):
            row = position.get(int(km) + 1)
            if kb > 0 and row is not None:
                hop[row, col] = math.sqrt((km + 1) * kb)
        blocks[int(N)] = _Block(indices, (levels_m - levels_b).astype(float), hop)
    return blocks


def _block_hamiltonian(block: _Block, sample: ControlSample, spec: HamiltonianSpec) -> np.ndarray:
    c = hop_coefficient(sample, spec.gamma)
    h = np.diag(0.5 * (1.0 + spec.eta) * sample.delta * block.imbalance).astype(complex)
    h += c * block.hop + np.conj(c) * block.hop.conj().T
    deviation = hermiticity_deviation(h)
    if deviation >= HERMITICITY_LIMIT:
        raise NumericalError(f"block Hamiltonian deviates from Hermitian by {deviation:.3e}")
    return h


def _use_blocks(spec: HamiltonianSpec, block_mode: Optional[bool]) -> bool:
    if block_mode and spec.frame == Frame.COUNTER_ROTATING:
        raise ConfigError("block mode needs excitation conservation; not available with counter-rotating terms")
    if block_mode is None:
        return spec.frame == Frame.RWA
    return bool(block_mode)


def propagate_schrodinger(
    spec: HamiltonianSpec,
    psi0: StateVector,
    n_steps: int = DEFAULT_STEPS,
    *,
    target: Optional[TargetSpec] = None,
    block_mode: Optional[bool] = None,
    keep_states: bool = False,
) -> Trajectory:
    """Midpoint-exponential propagation of psi0 over [0, T]; P is recorded after every step."""
    if n_steps < MIN_STEPS:
        raise ConfigError(f"n_steps must be >= {MIN_STEPS}, got {n_steps}")
    space = psi0.space
    target = target or TargetSpec.from_state(psi0)
    target_indices = target.indices(space)
    excitation_levels = space.total_excitation.astype(float)

    times = np.linspace(0.0, spec.T, int(n_steps) + 1)
    dt = times[1] - times[0]
    psi = psi0.amplitudes.copy()
    populations = np.empty(times.size)
    drifts = np.empty(times.size)
    excitation = np.empty(times.size)
    states: Optional[List[np.ndarray]] = [psi.copy()] if keep_states else None

    def record(step: int) -> None:
        weights = np.abs(psi) ** 2
        populations[step] = np.sum(weights[target_indices])
        drifts[step] = abs(math.sqrt(float(np.sum(weights))) - 1.0)
        excitation[step] = float(np.dot(weights, excitation_levels))

    record(0)
    if _use_blocks(spec, block_mode):
        blocks = _excitation_blocks(space)
        active = [block for block in blocks.values() if np.any(np.abs(psi[block.indices]) > 0)]
        for step in range(1, times.size):
            sample = spec.schedule.sample(times[step - 1] + 0.5 * dt)
            for block in active:
                psi[block.indices] = _unitary_step(_block_hamiltonian(block, sample, spec), dt) @ psi[block.indices]
            record(step)
            if states is not None:
                states.append(psi.copy())
    else:
        for step in range(1, times.size):
            h = hamiltonian(space, spec, times[step - 1] + 0.5 * dt).entries
            psi = _unitary_step(h, dt) @ psi
            record(step)
            if states is not None:
                states.append(psi.copy())

    norm_drift = float(np.max(drifts))
    if norm_drift > NORM_DRIFT_LIMIT:
        raise NumericalError(f"norm drift {norm_drift:.3e} exceeds {NORM_DRIFT_LIMIT:.0e}")
    # rounding only; the stepper is unitary
    psi = psi / np.linalg.norm(psi)
    trajectory = Trajectory(
        times=times,
        populations=populations,
        final_state=StateVector(psi, space),
        norm_drifts=drifts,
        excitation=excitation,
        n_steps=int(n_steps),
        states=states,
    )
    logger.debug(
        "propagation_done",
        extra={
            "protocol": spec.schedule.protocol_tag.value,
            "frame": spec.frame.value,
            "gamma": spec.gamma,
            "eta": spec.eta,
            "n_steps": int(n_steps),
            "population": trajectory.final_population,
            "norm_drift": norm_drift,
        },
    )
    return trajectory


def propagate_converged(
    spec: HamiltonianSpec,
    psi0: StateVector,
    n_steps: int = DEFAULT_STEPS,
    tol: float = 1e-7,
    *,
    max_attempts: int = 6,
    target: Optional[TargetSpec] = None,
    block_mode: Optional[bool] = None,
) -> Trajectory:
    """Double n_steps until the final population moves by less than tol; returns the finer run."""
    progress = {"trajectory": propagate_schrodinger(spec, psi0, n_steps, target=target, block_mode=block_mode)}

    @retry(stop=stop_after_attempt(max_attempts), retry=retry_if_exception_type(StepRefinementError), reraise=True)
    def refine() -> Trajectory:
        coarse = progress["trajectory"]
        fine = propagate_schrodinger(spec, psi0, 2 * coarse.n_steps, target=target, block_mode=block_mode)
        progress["trajectory"] = fine
        delta = abs(fine.final_population - coarse.final_population)
        if delta >= tol:
            logger.info("step_refinement", extra={"n_steps": fine.n_steps, "delta": delta})
            raise StepRefinementError(
                f"population changed by {delta:.3e} going to {fine.n_steps} steps", n_steps=fine.n_steps, delta=delta
            )
        return fine

    return refine()


def propagate_lindblad(
    spec: HamiltonianSpec,
    lindblad: LindbladSpec,
    rho0: DensityMatrix,
    n_steps: int = DEFAULT_STEPS,
    *,
    target: Optional[TargetSpec] = None,
    check_every: int = 100,
) -> Trajectory:
    """RK4 integration of d rho/dt = -i[H, rho] + sum_j rate_j D[L_j] rho."""
    if n_steps < MIN_STEPS:
        raise ConfigError(f"n_steps must be >= {MIN_STEPS}, got {n_steps}")
    space = rho0.space
    target = target or TargetSpec.from_density(rho0)
    target_indices = target.indices(space)
    ops = _mode_operators(space)
    excitation_levels = space.total_excitation.astype(float)

    jumps: List[Tuple[float, np.ndarray]] = []
    loss = np.zeros((space.dim, space.dim), dtype=complex)
    for rate, mode, raising in lindblad.jump_terms():
        lowering = ops.m if mode == "m" else ops.b
        op = lowering.conj().T if raising else lowering
        jumps.append((rate, op))
        loss += rate * (op.conj().T @ op)

    def generator(h: np.ndarray, rho: np.ndarray) -> np.ndarray:
        h_eff = h - 0.5j * loss
        out = -1j * (h_eff @ rho - rho @ h_eff.conj().T)
        for rate, op in jumps:
            out += rate * (op @ rho @ op.conj().T)
        return out

    times = np.linspace(0.0, spec.T, int(n_steps) + 1)
    dt = times[1] - times[0]
    rho = rho0.entries.copy()
    populations = np.empty(times.size)
    drifts = np.empty(times.size)
    excitation = np.empty(times.size)

    def record(step: int) -> None:
        diagonal = np.real(np.diag(rho))
        populations[step] = np.sum(diagonal[target_indices])
        drifts[step] = abs(complex(np.trace(rho)) - 1.0)
        excitation[step] = float(np.dot(diagonal, excitation_levels))
        if drifts[step] > TRACE_DRIFT_LIMIT:
            raise NumericalError(f"trace drift {drifts[step]:.3e} at t={times[step]:.6g}")

    def check_positivity(step: int) -> None:
        lowest = float(linalg.eigvalsh(rho)[0])
        if lowest < NEGATIVITY_LIMIT:
            raise NumericalError(f"density matrix eigenvalue {lowest:.3e} at t={times[step]:.6g}")

    h_next = hamiltonian(space, spec, 0.0).entries
    record(0)
    for step in range(1, times.size):
        t = times[step - 1]
        h_start = h_next
        h_mid = hamiltonian(space, spec, t + 0.5 * dt).entries
        h_next = hamiltonian(space, spec, times[step]).entries
        k1 = generator(h_start, rho)
        k2 = generator(h_mid, rho + 0.5 * dt * k1)
        k3 = generator(h_mid, rho + 0.5 * dt * k2)
        k4 = generator(h_next, rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        record(step)
        if step % check_every == 0 or step == times.size - 1:
            check_positivity(step)

    trajectory = Trajectory(
        times=times,
        populations=populations,
        final_state=DensityMatrix(rho, space, validate=False),
        norm_drifts=drifts,
        excitation=excitation,
        n_steps=int(n_steps),
    )
    logger.debug(
        "lindblad_done",
        extra={
            "protocol": spec.schedule.protocol_tag.value,
            "kappa_m": lindblad.kappa_m,
            "kappa_b": lindblad.kappa_b,
            "n_bar_b": lindblad.n_bar_b,
            "population": trajectory.final_population,
            "trace_drift": trajectory.norm_drift,
        },
    )
    return trajectory


def lr_invariant_residual(space: HilbertSpace, spec: HamiltonianSpec, params: LRParams, t: float) -> float:
    """Largest entry of dI/dt + i[H, I] on the excitation blocks the cutoff holds completely.

    dI/dt is the centered difference of the invariant with the step of the LR parameters.
    """
    step = params.fd_step
    later = lr_invariant_op(space, params.beta(t + step), params.alpha(t + step)).entries
    earlier = lr_invariant_op(space, params.beta(t - step), params.alpha(t - step)).entries
    invariant = lr_invariant_op(space, params.beta(t), params.alpha(t)).entries
    h = hamiltonian(space, spec, t).entries
    residual = (later - earlier) / (2.0 * step) + 1j * (h @ invariant - invariant @ h)
    complete = np.flatnonzero(space.total_excitation <= min(space.n_max_m, space.n_max_b))
    return float(np.max(np.abs(residual[np.ix_(complete, complete)])))
