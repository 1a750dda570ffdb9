"""Static map from cavity-magnomechanics device parameters to the effective two-mode model.

The cavity photon and Kittel magnon hybridize into normal modes a and m (angle phi); the drive
displaces them to steady amplitudes a_s, m_s (phonon displacement b_s is taken as 0), which sets
the linearized hybrid-phonon couplings g and g'.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

from .errors import SingularControlError
from .models import ComplexValue, DeviceParams, EffectiveModel, RegimeCheck, RegimeDiagnostics
from .observability import get_logger

logger = get_logger(__name__)

REGIME_THRESHOLD = 10.0


def hybridize(params: DeviceParams) -> Tuple[float, float, float, float, float]:
    """(phi, delta_minus, delta_plus, kappa_a, kappa_m) of the photon-magnon normal modes."""
    detuning_gap = params.omega_a - params.omega_m
    phi = 0.5 * math.atan2(2.0 * params.g_ma, detuning_gap)
    center = 0.5 * (params.omega_a + params.omega_m) - params.omega_p
    half_split = math.hypot(0.5 * detuning_gap, params.g_ma)
    cos2, sin2 = math.cos(phi) ** 2, math.sin(phi) ** 2
    kappa_a = params.kappa_1 * cos2 + params.kappa_2 * sin2
    kappa_m = params.kappa_1 * sin2 + params.kappa_2 * cos2
    return phi, center - half_split, center + half_split, kappa_a, kappa_m


def steady_amplitudes(
    params: DeviceParams,
    phi: float,
    delta_minus: float,
    delta_plus: float,
    kappa_a: float,
    kappa_m: float,
) -> Tuple[complex, complex]:
    denominator_m = complex(kappa_m, delta_minus)
    denominator_a = complex(kappa_a, delta_plus)
    if denominator_m == 0 or denominator_a == 0:
        raise SingularControlError("steady amplitudes undefined: zero damping and zero detuning")
    drive = params.epsilon_p
    return drive * math.sin(phi) / denominator_m, drive * math.cos(phi) / denominator_a


def effective_couplings(params: DeviceParams, phi: float, m_s: complex, a_s: complex) -> Tuple[complex, complex]:
    s, c = math.sin(phi), math.cos(phi)
    g_eff = params.g_mb * (m_s * c * c - a_s * s * c)
    g_prime = params.g_mb * (a_s * s * s - m_s * s * c)
    return g_eff, g_prime


def effective_detuning(delta_minus: float, omega_b: float) -> float:
    return delta_minus - omega_b


def build_effective_model(params: DeviceParams) -> EffectiveModel:
    phi, delta_minus, delta_plus, kappa_a, kappa_m = hybridize(params)
    m_s, a_s = steady_amplitudes(params, phi, delta_minus, delta_plus, kappa_a, kappa_m)
    g_eff, g_prime = effective_couplings(params, phi, m_s, a_s)
    return EffectiveModel(
        phi=phi,
        delta_minus=delta_minus,
        delta_plus=delta_plus,
        kappa_a=kappa_a,
        kappa_m=kappa_m,
        m_s=ComplexValue.of(m_s),
        a_s=ComplexValue.of(a_s),
        g_eff=ComplexValue.of(g_eff),
        g_prime=ComplexValue.of(g_prime),
        detuning_offset=effective_detuning(delta_minus, params.omega_b),
        red_detuning_margin=delta_plus - params.omega_b,
    )


def _ratio(numerator: float, denominator: float) -> float:
    if denominator == 0:
        return math.inf
    return numerator / denominator


def _check(name: str, ratio: float, description: str) -> RegimeCheck:
    return RegimeCheck(
        name=name,
        ratio=ratio,
        threshold=REGIME_THRESHOLD,
        passed=ratio >= REGIME_THRESHOLD,
        description=description,
    )


def rwa_check(omega_b_over_omega: float, peak_coupling: float) -> RegimeCheck:
    """Phonon frequency against the largest coupling of a schedule, both in units of Omega."""
    return _check("rwa_phonon_frequency", _ratio(omega_b_over_omega, abs(peak_coupling)), "omega_b / max|g(t)|")


def validate_regime(params: DeviceParams, model: EffectiveModel, peak_coupling: Optional[float] = None) -> RegimeDiagnostics:
    g_eff = abs(model.g_eff.value)
    checks = [
        _check("strong_photon_magnon_coupling", _ratio(params.g_ma, max(params.kappa_1, params.kappa_2)), "g_ma / max(kappa_1, kappa_2)"),
        _check("weak_magnomechanical_coupling", _ratio(params.omega_b, params.g_mb), "omega_b / g_mb"),
        _check("rwa_effective_coupling", _ratio(params.omega_b, g_eff), "omega_b / |g|"),
        _check("upper_mode_far_detuned", _ratio(model.red_detuning_margin, g_eff), "(delta_plus - omega_b) / |g|"),
    ]
    if peak_coupling is not None:
        checks.append(_check("rwa_peak_coupling", _ratio(params.omega_b, abs(peak_coupling)), "omega_b / max|g(t)|"))
    diagnostics = RegimeDiagnostics(checks=checks, red_detuned=model.red_detuning_margin > 0)
    for name in diagnostics.failed():
        logger.warning("regime_check_failed", extra={"check": name})
    if not diagnostics.red_detuned:
        logger.warning("regime_check_failed", extra={"check": "red_detuned", "margin": model.red_detuning_margin})
    return diagnostics
