"""Transfer metrics: closed-form pi-pulse results, error sensitivities, phase predictions and error sweeps."""

from __future__ import annotations

import contextvars
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .dynamics import DEFAULT_STEPS, HamiltonianSpec, propagate_schrodinger
from .errors import ConfigError, NumericalError, SweepPointError, TransferError
from .fock import FOCK_HEADROOM, HilbertSpace, StateVector, build_space, superposed_initial
from .models import Sensitivity
from .observability import get_logger
from .protocols import (
    LRParams,
    ProtocolTag,
    PulseSchedule,
    lr_total_phase,
    quad_checked,
)
from .targets import TargetSpec

logger = get_logger(__name__)

SENSITIVITY_POINTS = (0.02, 0.04, 0.06)
FIT_RESIDUAL_LIMIT = 1e-5
FIT_STABILITY = 0.05
_SMALL_Q = 1e-3
_ON_MANIFOLD = 1.0 - 1e-6
_PERTURBATIVE_LIMIT = 0.1


def pi_pulse_population_analytic(target: TargetSpec, gamma: float) -> float:
    factor = math.cos(0.5 * math.pi * gamma) ** 2
    return float(sum(weight * factor**k for k, weight in target.weights().items()))


def pi_pulse_sensitivity_analytic(target: TargetSpec) -> float:
    return 0.25 * math.pi**2 * target.mean_excitation


def default_space(target: TargetSpec, headroom: int = 0) -> HilbertSpace:
    cutoff = max(target.support) + FOCK_HEADROOM + max(0, int(headroom))
    return build_space(cutoff, cutoff)


def initial_from_target(target: TargetSpec, space: Optional[HilbertSpace] = None) -> StateVector:
    """The mode-m state sum_k C_k |k, 0> that a target describes."""
    return superposed_initial(space or default_space(target), target.coeffs)


def _fit_even(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float, float]:
    """Least-squares q x^2 + r x^4 through the symmetric drop; returns (q, r, max residual)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    design = np.column_stack([x**2, x**4])
    (q, r), *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.max(np.abs(design @ np.array([q, r]) - y)))
    return float(q), float(r), residual


def _scaled(spec: HamiltonianSpec, which: str, x: float) -> HamiltonianSpec:
    if which == "gamma":
        return spec.with_errors(x, spec.eta)
    return spec.with_errors(spec.gamma, x)


def sensitivity_numeric(
    spec: HamiltonianSpec,
    target: TargetSpec,
    which: str,
    *,
    space: Optional[HilbertSpace] = None,
    n_steps: int = DEFAULT_STEPS,
    points: Sequence[float] = SENSITIVITY_POINTS,
) -> Sensitivity:
    """q = -dP(T)/d(x^2) at zero error from the even part of P over +/- points."""
    if which not in ("gamma", "eta"):
        raise ConfigError(f"Unsupported error parameter: {which}")
    psi0 = initial_from_target(target, space)

    def final_population(x: float) -> float:
        return propagate_schrodinger(_scaled(spec, which, x), psi0, n_steps, target=target).final_population

    p_zero = final_population(0.0)
    if p_zero < _ON_MANIFOLD:
        logger.warning("sensitivity_off_manifold", extra={"which": which, "p_zero": p_zero})

    cache: Dict[float, float] = {}

    def drop(x: float) -> float:
        if x not in cache:
            cache[x] = p_zero - 0.5 * (final_population(x) + final_population(-x))
        return cache[x]

    xs = [float(x) for x in points]
    q, _, residual = _fit_even(xs, [drop(x) for x in xs])
    if residual > FIT_RESIDUAL_LIMIT:
        raise NumericalError(f"{which} sensitivity fit residual {residual:.3e} above {FIT_RESIDUAL_LIMIT:.0e}")

    halved = [0.5 * x for x in xs]
    q_half, _, _ = _fit_even(halved, [drop(x) for x in halved])
    allowed = FIT_STABILITY * abs(q) if abs(q) >= _SMALL_Q else _SMALL_Q
    stable = abs(q - q_half) <= allowed
    if not stable:
        logger.warning("sensitivity_fit_unstable", extra={"which": which, "q": q, "q_half_range": q_half})

    populations = [p_zero - cache[x] for x in xs]
    return Sensitivity(
        which=which,
        q=q,
        q_half_range=q_half,
        residual=residual,
        stable=stable,
        p_zero=p_zero,
        x_values=xs,
        populations=populations,
    )


def _complex_integral(real: Any, imag: Any, T: float) -> complex:
    return complex(quad_checked(real, 0.0, T), quad_checked(imag, 0.0, T))


def sensitivity_analytic_lr(params: LRParams, N: int, T: Optional[float] = None) -> Tuple[float, float]:
    """(q_g, q_delta) from the second-order overlap integrals of an invariant-based schedule."""
    T = params.T if T is None else float(T)

    def weight(t: float, amplitude: float) -> complex:
        return amplitude * complex(math.cos(2.0 * params.kappa_at(t)), -math.sin(2.0 * params.kappa_at(t)))

    def coupling_term(t: float) -> float:
        return params.d_beta(t) * math.sin(params.beta(t)) ** 2

    def detuning_term(t: float) -> float:
        beta = params.beta(t)
        return math.sin(beta) * (0.5 * params.d_alpha(t) + params.d_kappa(t) * math.cos(beta))

    overlap_g = _complex_integral(
        lambda t: weight(t, coupling_term(t)).real, lambda t: weight(t, coupling_term(t)).imag, T
    )
    overlap_delta = _complex_integral(
        lambda t: weight(t, detuning_term(t)).real, lambda t: weight(t, detuning_term(t)).imag, T
    )
    return N * abs(overlap_g) ** 2, N * abs(overlap_delta) ** 2


def perturbative_population_lr(params: LRParams, N: int, gamma: float, eta: float) -> float:
    if abs(gamma) > _PERTURBATIVE_LIMIT or abs(eta) > _PERTURBATIVE_LIMIT:
        logger.warning("perturbative_range_exceeded", extra={"gamma": gamma, "eta": eta})
    q_g, q_delta = sensitivity_analytic_lr(params, N)
    return 1.0 - gamma**2 * q_g - eta**2 * q_delta


def tqd_dynamic_phase(schedule: PulseSchedule) -> float:
    """chi(T), the integral of the hybrid-mode frequency sqrt(Delta^2 + 4|g|^2) / 2."""

    def frequency(t: float) -> float:
        sample = schedule.sample(t)
        return 0.5 * math.sqrt(sample.delta**2 + 4.0 * abs(sample.g) ** 2)

    return quad_checked(frequency, 0.0, schedule.T)


def phase_per_excitation(schedule: PulseSchedule) -> Optional[float]:
    """Phase acquired per transferred excitation, or None where no closed form exists."""
    tag = schedule.protocol_tag
    if tag == ProtocolTag.PI_PULSE:
        return 0.5 * math.pi
    if tag == ProtocolTag.TQD:
        return tqd_dynamic_phase(schedule) if schedule.metadata.get("include_cd") else None
    if schedule.lr_params is not None:
        return lr_total_phase(schedule.lr_params, 1)
    return None


def final_amplitudes(state: StateVector, target: TargetSpec) -> Dict[int, complex]:
    """Amplitudes on |0, k> for every k in the target support."""
    return {k: state.amplitude(0, k) for k in target.support}


def predicted_amplitudes(target: TargetSpec, phase: float) -> Dict[int, complex]:
    return {k: c * complex(math.cos(k * phase), -math.sin(k * phase)) for k, c in target.coeffs.items() if abs(c) > 0}


def error_axis(low: float, high: float, resolution: int) -> np.ndarray:
    if not (math.isfinite(low) and math.isfinite(high)):
        raise ConfigError(f"error range must be finite, got [{low}, {high}]")
    if low > high:
        raise ConfigError(f"error range needs low <= high, got [{low}, {high}]")
    if resolution < 3:
        raise ConfigError(f"sweep resolution must be >= 3, got {resolution}")
    return np.linspace(low, high, int(resolution))


@dataclass(frozen=True, eq=False)
class SweepGrid:
    gamma_values: np.ndarray
    eta_values: np.ndarray
    populations: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        expected = (self.gamma_values.size, self.eta_values.size)
        if self.populations.shape != expected:
            raise NumericalError(f"sweep populations have shape {self.populations.shape}, expected {expected}")
        if np.any(self.populations > 1.0 + 1e-8) or np.any(self.populations < -1e-8):
            raise NumericalError("sweep population outside [0, 1]")

    def at(self, gamma: float, eta: float) -> float:
        i = int(np.argmin(np.abs(self.gamma_values - gamma)))
        j = int(np.argmin(np.abs(self.eta_values - eta)))
        return float(self.populations[i, j])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.populations, index=self.gamma_values, columns=self.eta_values)
        frame.index.name = "gamma"
        return frame


def sweep_threads() -> int:
    raw = os.getenv("MAGNON_TRANSFER_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigError(f"Unsupported MAGNON_TRANSFER_THREADS: {raw}") from exc
    if threads < 1:
        raise ConfigError(f"MAGNON_TRANSFER_THREADS must be >= 1, got {threads}")
    return threads


def sweep_error_grid(
    spec: HamiltonianSpec,
    target: TargetSpec,
    gamma_range: Tuple[float, float] = (-0.2, 0.2),
    eta_range: Tuple[float, float] = (-0.2, 0.2),
    resolution: int = 41,
    *,
    gamma_values: Optional[Sequence[float]] = None,
    eta_values: Optional[Sequence[float]] = None,
    space: Optional[HilbertSpace] = None,
    n_steps: int = DEFAULT_STEPS,
    threads: Optional[int] = None,
) -> SweepGrid:
    """P(T) over a (gamma, eta) grid; explicit value lists override the ranges."""
    gammas = np.asarray(gamma_values, dtype=float) if gamma_values is not None else error_axis(*gamma_range, resolution)
    etas = np.asarray(eta_values, dtype=float) if eta_values is not None else error_axis(*eta_range, resolution)
    if gammas.size == 0 or etas.size == 0:
        raise ConfigError("sweep needs at least one gamma and one eta value")
    psi0 = initial_from_target(target, space)
    workers = threads or sweep_threads()

    def point(i: int, j: int) -> float:
        gamma, eta = float(gammas[i]), float(etas[j])
        try:
            run = propagate_schrodinger(spec.with_errors(gamma, eta), psi0, n_steps, target=target)
        except TransferError as exc:
            raise SweepPointError(str(exc), gamma, eta) from exc
        return run.final_population

    jobs = [(i, j) for i in range(gammas.size) for j in range(etas.size)]
    populations = np.empty((gammas.size, etas.size))
    logger.info(
        "sweep_start",
        extra={"protocol": spec.schedule.protocol_tag.value, "points": len(jobs), "threads": workers},
    )
    if workers == 1:
        for i, j in jobs:
            populations[i, j] = point(i, j)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {(i, j): pool.submit(contextvars.copy_context().run, point, i, j) for i, j in jobs}
            for (i, j), future in futures.items():
                populations[i, j] = future.result()

    metadata: Dict[str, Any] = {"protocol": spec.schedule.protocol_tag.value, "T": spec.T, "n_steps": int(n_steps)}
    metadata.update({key: value for key, value in spec.schedule.metadata.items() if isinstance(value, (str, int, float, bool))})
    grid = SweepGrid(gammas, etas, populations, metadata)
    logger.info(
        "sweep_done",
        extra={"protocol": metadata["protocol"], "min_population": float(populations.min()), "max_population": float(populations.max())},
    )
    return grid

