"""Control schedules for the pi-pulse, transitionless driving (TQD) and invariant-based (LR) protocols.

All times are in units of 1/Omega and all rates in units of Omega, with Omega = pi / T.
The m^dag b coefficient of the RWA Hamiltonian built from a sample is g_real - i g_imag - i theta_dot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import quad

from .errors import ConfigError, NumericalError, QuadratureError, SingularControlError
from .fock import (
    HilbertSpace,
    OperatorMatrix,
    annihilation_op,
    fixed_N_eigenstate,
    fixed_N_eigenstate_derivative,
)

ScalarFn = Callable[[float], float]

SCHEDULE_COLUMNS = ("t", "delta", "g_real", "g_imag", "theta_dot")
THETA_SHAPES = ("linear", "quadratic")
BETA_SHAPES = ("linear", "sine_ramp")
_BOUNDARY_TOLERANCE = 1e-9
_FD_RELATIVE_STEP = 1e-6


class ProtocolTag(str, Enum):
    PI_PULSE = "pi_pulse"
    TQD = "tqd"
    LR = "lr"
    LR_OPTIMIZED = "lr_optimized"
    HOLD = "hold"


@dataclass(frozen=True)
class ControlSample:
    t: float
    delta: float
    g_real: float
    g_imag: float
    theta_dot: float = 0.0

    def __post_init__(self) -> None:
        values = (self.t, self.delta, self.g_real, self.g_imag, self.theta_dot)
        if not all(math.isfinite(v) for v in values):
            raise NumericalError(f"non-finite control sample at t={self.t}: {values}")

    @property
    def g(self) -> complex:
        return complex(self.g_real, self.g_imag)

    def as_row(self) -> Tuple[float, float, float, float, float]:
        return (self.t, self.delta, self.g_real, self.g_imag, self.theta_dot)


@dataclass(frozen=True, eq=False)
class PulseSchedule:
    T: float
    sampler: Callable[[float], ControlSample]
    protocol_tag: ProtocolTag
    metadata: Dict[str, Any] = field(default_factory=dict)
    lr_params: Optional["LRParams"] = None

    @property
    def omega(self) -> float:
        return math.pi / self.T

    def sample(self, t: float) -> ControlSample:
        slack = 1e-12 * self.T
        if t < -slack or t > self.T + slack:
            raise ConfigError(f"time {t} outside schedule window [0, {self.T}]")
        return self.sampler(min(max(float(t), 0.0), self.T))

    def sample_times(self, n_samples: int) -> np.ndarray:
        if n_samples < 2:
            raise ConfigError(f"need at least 2 schedule samples, got {n_samples}")
        return np.linspace(0.0, self.T, int(n_samples))

    def to_frame(self, n_samples: int = 201) -> pd.DataFrame:
        rows = [self.sample(t).as_row() for t in self.sample_times(n_samples)]
        return pd.DataFrame(rows, columns=list(SCHEDULE_COLUMNS))


def _require_positive_duration(T: float) -> float:
    if not (math.isfinite(T) and T > 0):
        raise ConfigError(f"schedule duration must be > 0, got {T}")
    return float(T)


def quad_checked(fn: ScalarFn, a: float, b: float, *, tolerance: float = 1e-10) -> float:
    """scipy quad that raises instead of returning a flagged estimate."""
    if a == b:
        return 0.0
    result = quad(fn, a, b, epsabs=1e-13, epsrel=1e-12, limit=400, full_output=1)
    value, abserr = result[0], result[1]
    if len(result) > 3 or not math.isfinite(value) or abserr > tolerance:
        message = result[3] if len(result) > 3 else "error estimate too large"
        raise QuadratureError(f"quadrature on [{a}, {b}] failed: {message} (abserr={abserr:.3e})")
    return float(value)


def _central_difference(fn: ScalarFn, t: float, step: float) -> float:
    return (fn(t + step) - fn(t - step)) / (2.0 * step)


def pi_pulse_schedule(T: float) -> PulseSchedule:
    T = _require_positive_duration(T)
    coupling = math.pi / (2.0 * T)

    def sampler(t: float) -> ControlSample:
        return ControlSample(t=t, delta=0.0, g_real=coupling, g_imag=0.0)

    return PulseSchedule(T, sampler, ProtocolTag.PI_PULSE, {"pulse_area": math.pi / 2})


def hold_schedule(T: float, delta: float = 0.0, g_real: float = 0.0, g_imag: float = 0.0) -> PulseSchedule:
    T = _require_positive_duration(T)

    def sampler(t: float) -> ControlSample:
        return ControlSample(t=t, delta=delta, g_real=g_real, g_imag=g_imag)

    return PulseSchedule(T, sampler, ProtocolTag.HOLD, {"delta": delta, "g_real": g_real, "g_imag": g_imag})


def tqd_theta(t: float, T: float, shape: str) -> Tuple[float, float]:
    """Mixing angle theta(t) and its rate for the supported shapes."""
    if shape == "linear":
        return 0.5 * math.pi * (t / T), 0.5 * math.pi / T
    if shape == "quadratic":
        return 0.5 * math.pi * (t / T) ** 2, math.pi * t / T**2
    raise ConfigError(f"Unsupported theta shape: {shape}")


def tqd_schedule(T: float, theta_shape: str = "linear", include_cd: bool = True) -> PulseSchedule:
    T = _require_positive_duration(T)
    if theta_shape not in THETA_SHAPES:
        raise ConfigError(f"Unsupported theta shape: {theta_shape}")
    omega = math.pi / T

    def sampler(t: float) -> ControlSample:
        theta, theta_rate = tqd_theta(t, T, theta_shape)
        return ControlSample(
            t=t,
            delta=2.0 * omega * math.cos(2.0 * theta),
            g_real=omega * math.sin(2.0 * theta),
            g_imag=0.0,
            theta_dot=theta_rate if include_cd else 0.0,
        )

    return PulseSchedule(T, sampler, ProtocolTag.TQD, {"theta_shape": theta_shape, "include_cd": include_cd})


def theta_dot_from_controls(delta: float, g: float, delta_dot: float, g_dot: float) -> float:
    denominator = delta**2 + 4.0 * g**2
    if denominator <= 0.0:
        raise SingularControlError("theta rate undefined where delta = g = 0")
    return (g_dot * delta - delta_dot * g) / denominator


@dataclass(frozen=True, eq=False)
class BetaShape:
    name: str
    value: ScalarFn
    derivative: ScalarFn


def linear_beta(T: float) -> BetaShape:
    T = _require_positive_duration(T)
    return BetaShape("linear", lambda t: math.pi * t / T, lambda t: math.pi / T)


def sine_ramp_beta(T: float) -> BetaShape:
    """beta = pi (t/T - sin(2 pi t/T) / (2 pi)); switches on and off with zero slope."""
    T = _require_positive_duration(T)
    return BetaShape(
        "sine_ramp",
        lambda t: math.pi * (t / T - math.sin(2.0 * math.pi * t / T) / (2.0 * math.pi)),
        lambda t: (math.pi / T) * (1.0 - math.cos(2.0 * math.pi * t / T)),
    )


def beta_shape_by_name(name: str, T: float) -> BetaShape:
    if name == "linear":
        return linear_beta(T)
    if name == "sine_ramp":
        return sine_ramp_beta(T)
    raise ConfigError(f"Unsupported beta shape: {name}")


@dataclass(frozen=True, eq=False)
class LRParams:
    """Invariant angles beta, alpha and the per-excitation phase kappa as functions of time.

    Missing derivatives fall back to centered differences with step T * 1e-6. kappa may be
    omitted when kappa_dot is given; it is then integrated from kappa(0) = 0.
    """

    T: float
    beta: ScalarFn
    alpha: ScalarFn
    kappa: Optional[ScalarFn] = None
    beta_dot: Optional[ScalarFn] = None
    alpha_dot: Optional[ScalarFn] = None
    kappa_dot: Optional[ScalarFn] = None
    label: str = "custom"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        _require_positive_duration(self.T)
        if self.kappa is None and self.kappa_dot is None:
            raise ConfigError("LR parameters need kappa or kappa_dot")

    @property
    def fd_step(self) -> float:
        return self.T * _FD_RELATIVE_STEP

    def d_beta(self, t: float) -> float:
        if self.beta_dot is not None:
            return self.beta_dot(t)
        return _central_difference(self.beta, t, self.fd_step)

    def d_alpha(self, t: float) -> float:
        if self.alpha_dot is not None:
            return self.alpha_dot(t)
        return _central_difference(self.alpha, t, self.fd_step)

    def d_kappa(self, t: float) -> float:
        if self.kappa_dot is not None:
            return self.kappa_dot(t)
        return _central_difference(self.kappa, t, self.fd_step)

    def kappa_at(self, t: float) -> float:
        if self.kappa is not None:
            return self.kappa(t)
        return quad_checked(self.kappa_dot, 0.0, t)

    def check_boundaries(self) -> None:
        start, end = self.beta(0.0), self.beta(self.T)
        if abs(start) > _BOUNDARY_TOLERANCE or abs(end - math.pi) > _BOUNDARY_TOLERANCE:
            raise ConfigError(f"LR boundary conditions beta(0)=0, beta(T)=pi violated: ({start}, {end})")


def optimized_lr_params(T: float, j: int = 1, beta_shape: Optional[BetaShape] = None) -> LRParams:
    """kappa = j (beta - sin 2beta / 2), alpha = -(4j/3) sin^3 beta."""
    if int(j) != j or j == 0:
        raise ConfigError(f"optimized protocol needs a nonzero integer j, got {j}")
    shape = beta_shape or linear_beta(T)
    beta, beta_dot = shape.value, shape.derivative

    return LRParams(
        T=T,
        beta=beta,
        alpha=lambda t: -(4.0 * j / 3.0) * math.sin(beta(t)) ** 3,
        kappa=lambda t: j * (beta(t) - 0.5 * math.sin(2.0 * beta(t))),
        beta_dot=beta_dot,
        alpha_dot=lambda t: -4.0 * j * math.sin(beta(t)) ** 2 * math.cos(beta(t)) * beta_dot(t),
        kappa_dot=lambda t: 2.0 * j * math.sin(beta(t)) ** 2 * beta_dot(t),
        label="optimized",
        metadata={"j": int(j), "beta_shape": shape.name},
    )


def fig3_lr_params(T: float) -> LRParams:
    params = optimized_lr_params(T, 1, linear_beta(T))
    return LRParams(
        T=params.T,
        beta=params.beta,
        alpha=params.alpha,
        kappa=params.kappa,
        beta_dot=params.beta_dot,
        alpha_dot=params.alpha_dot,
        kappa_dot=params.kappa_dot,
        label="fig3",
        metadata={"beta": "pi t/T", "alpha": "-(4/3) sin^3 beta", "kappa": "beta - sin(2 beta)/2"},
    )


def pi_pulse_lr_params(T: float) -> LRParams:
    """The flat pi pulse seen as an invariant-based protocol: beta = pi t/T, alpha = -pi/2, kappa = 0."""
    shape = linear_beta(T)
    return LRParams(
        T=T,
        beta=shape.value,
        alpha=lambda t: -0.5 * math.pi,
        kappa=lambda t: 0.0,
        beta_dot=shape.derivative,
        alpha_dot=lambda t: 0.0,
        kappa_dot=lambda t: 0.0,
        label="pi_pulse",
    )


def lr_controls(beta: float, beta_dot: float, alpha: float, alpha_dot: float, kappa_dot: float) -> Tuple[float, float, float]:
    """(g_R, g_I, Delta) that keep the invariant with angles (beta, alpha) and phase rate kappa_dot."""
    g_real = kappa_dot * math.cos(alpha) * math.sin(beta) - 0.5 * beta_dot * math.sin(alpha)
    g_imag = kappa_dot * math.sin(alpha) * math.sin(beta) + 0.5 * beta_dot * math.cos(alpha)
    delta = alpha_dot + 2.0 * kappa_dot * math.cos(beta)
    return g_real, g_imag, delta


def lr_schedule(T: float, params: LRParams) -> PulseSchedule:
    T = _require_positive_duration(T)
    params.check_boundaries()

    def sampler(t: float) -> ControlSample:
        beta_dot, alpha_dot, kappa_dot = params.d_beta(t), params.d_alpha(t), params.d_kappa(t)
        if not all(math.isfinite(v) for v in (beta_dot, alpha_dot, kappa_dot)):
            raise NumericalError(f"non-finite LR derivative at t={t}")
        g_real, g_imag, delta = lr_controls(params.beta(t), beta_dot, params.alpha(t), alpha_dot, kappa_dot)
        return ControlSample(t=t, delta=delta, g_real=g_real, g_imag=g_imag)

    return PulseSchedule(T, sampler, ProtocolTag.LR, {"params": params.label, **params.metadata}, lr_params=params)


def lr_optimized_schedule(T: float, j: int = 1, beta_shape: Optional[BetaShape] = None) -> PulseSchedule:
    T = _require_positive_duration(T)
    shape = beta_shape or linear_beta(T)
    params = optimized_lr_params(T, j, shape)
    params.check_boundaries()

    def sampler(t: float) -> ControlSample:
        beta, beta_dot = shape.value(t), shape.derivative(t)
        s = math.sin(beta)
        twist = (4.0 * j / 3.0) * s**3
        kappa_dot = 2.0 * j * beta_dot * s**2
        return ControlSample(
            t=t,
            delta=0.0,
            g_real=kappa_dot * s * math.cos(twist) + 0.5 * beta_dot * math.sin(twist),
            g_imag=-kappa_dot * s * math.sin(twist) + 0.5 * beta_dot * math.cos(twist),
        )

    return PulseSchedule(
        T,
        sampler,
        ProtocolTag.LR_OPTIMIZED,
        {"j": int(j), "beta_shape": shape.name},
        lr_params=params,
    )


def make_schedule(
    protocol: str,
    T: float,
    *,
    theta_shape: str = "linear",
    include_cd: bool = True,
    j: int = 1,
    beta_shape: str = "linear",
) -> PulseSchedule:
    if protocol == ProtocolTag.PI_PULSE.value:
        return pi_pulse_schedule(T)
    if protocol == ProtocolTag.TQD.value:
        return tqd_schedule(T, theta_shape, include_cd)
    if protocol == ProtocolTag.LR.value:
        return lr_schedule(T, fig3_lr_params(T))
    if protocol == ProtocolTag.LR_OPTIMIZED.value:
        return lr_optimized_schedule(T, j, beta_shape_by_name(beta_shape, T))
    raise ConfigError(f"Unsupported protocol: {protocol}")


def lr_invariant_op(space: HilbertSpace, beta: float, alpha: float) -> OperatorMatrix:
    m = annihilation_op(space, "m").entries
    b = annihilation_op(space, "b").entries
    n_m, n_b = space.levels
    hop = m.conj().T @ b
    entries = math.cos(beta) * np.diag((n_m - n_b).astype(complex))
    entries = entries + math.sin(beta) * (np.exp(-1j * alpha) * hop + np.exp(1j * alpha) * hop.conj().T)
    return OperatorMatrix(entries, space, hermitian_flag=True)


def lr_mode_ops(space: HilbertSpace, beta: float, alpha: float) -> Tuple[OperatorMatrix, OperatorMatrix]:
    """Ladder operators of the invariant, I = A^dag A - B^dag B."""
    m = annihilation_op(space, "m").entries
    b = annihilation_op(space, "b").entries
    c, s = math.cos(0.5 * beta), math.sin(0.5 * beta)
    plus, minus = np.exp(0.5j * alpha), np.exp(-0.5j * alpha)
    return OperatorMatrix(c * plus * m + s * minus * b, space), OperatorMatrix(s * plus * m - c * minus * b, space)


def invariant_frame_coefficients(sample: ControlSample, beta: float, alpha: float) -> Tuple[float, complex]:
    """(omega, g_AB) with H = omega (A^dag A - B^dag B) + g_AB A^dag B + h.c."""
    g_r, g_i, delta = sample.g_real, sample.g_imag, sample.delta
    omega = 0.5 * delta * math.cos(beta) + g_r * math.sin(beta) * math.cos(alpha) + g_i * math.sin(beta) * math.sin(alpha)
    g_ab = (
        0.5 * delta * math.sin(beta)
        - g_r * complex(math.cos(beta) * math.cos(alpha), math.sin(alpha))
        - g_i * complex(math.cos(beta) * math.sin(alpha), -math.cos(alpha))
    )
    return omega, g_ab


def lr_auxiliary_rates(sample: ControlSample, alpha: float, beta: float) -> Tuple[float, float]:
    """(beta_dot, alpha_dot) implied by the controls of a sample."""
    sin_beta = math.sin(beta)
    if abs(sin_beta) < 1e-12:
        raise SingularControlError(f"alpha rate undefined at sin(beta)=0 (t={sample.t})")
    g_r, g_i = sample.g_real, sample.g_imag
    beta_dot = 2.0 * g_i * math.cos(alpha) - 2.0 * g_r * math.sin(alpha)
    alpha_dot = sample.delta - (math.cos(beta) / sin_beta) * (2.0 * g_r * math.cos(alpha) + 2.0 * g_i * math.sin(alpha))
    return beta_dot, alpha_dot


def kappa_rate_from_controls(g_real: float, g_imag: float, alpha: float, beta: float) -> float:
    sin_beta = math.sin(beta)
    if abs(sin_beta) < 1e-12:
        raise SingularControlError("phase rate undefined at sin(beta)=0")
    return (g_real * math.cos(alpha) + g_imag * math.sin(alpha)) / sin_beta


def lr_phase(params: LRParams, t: float) -> float:
    if t < 0.0 or t > params.T * (1.0 + 1e-12):
        raise ConfigError(f"time {t} outside [0, {params.T}]")
    return params.kappa_at(min(t, params.T))


def lr_total_phase(params: LRParams, k: int) -> float:
    """Phase phi_k of the |0,k> amplitude C_k exp(-i phi_k) after a full invariant-based transfer."""
    if k == 0:
        return 0.0
    T = params.T
    swept = lr_phase(params, T) - lr_phase(params, 0.0)
    return k * (swept - 0.5 * (params.alpha(0.0) + params.alpha(T)))


def cd_operator(space: HilbertSpace, theta_dot: float) -> OperatorMatrix:
    m = annihilation_op(space, "m").entries
    b = annihilation_op(space, "b").entries
    hop = m.conj().T @ b
    return OperatorMatrix(1j * theta_dot * (hop.conj().T - hop), space, hermitian_flag=True)


def cd_from_eigenstates(space: HilbertSpace, theta: float, theta_dot: float, N: int) -> OperatorMatrix:
    """i sum_n |d eps_n/dt><eps_n| over the N-excitation eigenstates of the hybrid modes."""
    entries = np.zeros((space.dim, space.dim), dtype=complex)
    for n in range(N + 1):
        state = fixed_N_eigenstate(space, theta, N, n).amplitudes
        rate = theta_dot * fixed_N_eigenstate_derivative(space, theta, N, n)
        entries += np.outer(rate, state.conj())
    return OperatorMatrix(1j * entries, space)
