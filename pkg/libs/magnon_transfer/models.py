from __future__ import annotations

import math
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PrivateAttr,
    field_validator,
    model_validator,
)

TWO_PI = 2.0 * math.pi


class ComplexValue(BaseModel):
    re: float
    im: float

    @classmethod
    def of(cls, value: complex) -> "ComplexValue":
        value = complex(value)
        return cls(re=value.real, im=value.imag)

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)


# ---------------------------------------------------------------- device


class DeviceParams(BaseModel):
    """Physical parameters: frequencies and couplings in rad/s, decay rates in 1/s."""

    model_config = ConfigDict(frozen=True)

    omega_a: PositiveFloat
    omega_m: PositiveFloat
    omega_b: PositiveFloat
    omega_p: PositiveFloat
    g_ma: PositiveFloat
    g_mb: PositiveFloat
    epsilon_p_re: float = 0.0
    epsilon_p_im: float = 0.0
    kappa_1: PositiveFloat
    kappa_2: PositiveFloat
    kappa_b: PositiveFloat

    @property
    def epsilon_p(self) -> complex:
        return complex(self.epsilon_p_re, self.epsilon_p_im)


class EffectiveModel(BaseModel):
    phi: float
    delta_minus: float
    delta_plus: float
    kappa_a: float
    kappa_m: float
    m_s: ComplexValue
    a_s: ComplexValue
    g_eff: ComplexValue
    g_prime: ComplexValue
    detuning_offset: float
    red_detuning_margin: float

    @model_validator(mode="after")
    def _level_repulsion(self) -> "EffectiveModel":
        if not self.delta_plus > self.delta_minus:
            raise ValueError("normal-mode detunings must satisfy delta_plus > delta_minus")
        if not 0.0 <= self.phi <= 0.5 * math.pi:
            raise ValueError(f"hybridization angle {self.phi} outside [0, pi/2]")
        return self


class RegimeCheck(BaseModel):
    name: str
    ratio: float
    threshold: float = 10.0
    passed: bool
    description: str = ""


class RegimeDiagnostics(BaseModel):
    checks: List[RegimeCheck] = Field(default_factory=list)
    red_detuned: bool = True

    @property
    def all_passed(self) -> bool:
        return self.red_detuned and all(check.passed for check in self.checks)

    def failed(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]


# ---------------------------------------------------------------- config

ScenarioName = Literal["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "custom"]
ProtocolName = Literal["pi_pulse", "tqd", "lr", "lr_optimized"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProtocolConfig(_Section):
    name: ProtocolName
    duration: PositiveFloat = math.pi
    theta_shape: Literal["linear", "quadratic"] = "linear"
    include_cd: bool = True
    j: int = 1
    beta_shape: Literal["linear", "sine_ramp"] = "linear"

    @field_validator("j")
    @classmethod
    def _nonzero_j(cls, value: int) -> int:
        if value == 0:
            raise ValueError("j must be a nonzero integer")
        return value


class FockInitial(_Section):
    kind: Literal["fock"]
    k: NonNegativeInt = 1

    def label(self) -> str:
        return f"fock{self.k}"


class CatInitial(_Section):
    kind: Literal["cat"]
    zeta: float = 1.0
    zeta_imag: float = 0.0

    @property
    def zeta_complex(self) -> complex:
        return complex(self.zeta, self.zeta_imag)

    def label(self) -> str:
        if self.zeta_imag:
            return f"cat{self.zeta:g}{self.zeta_imag:+g}i"
        return f"cat{self.zeta:g}"


class SuperpositionInitial(_Section):
    kind: Literal["superposition"]
    coeffs: Dict[NonNegativeInt, Union[float, Tuple[float, float]]]

    @field_validator("coeffs")
    @classmethod
    def _non_empty(cls, value: Dict[int, object]) -> Dict[int, object]:
        if not value:
            raise ValueError("superposition needs at least one coefficient")
        return value

    def as_complex(self) -> Dict[int, complex]:
        out: Dict[int, complex] = {}
        for k, raw in sorted(self.coeffs.items()):
            out[int(k)] = complex(*raw) if isinstance(raw, tuple) else complex(raw)
        return out

    def label(self) -> str:
        return "sup" + "-".join(str(k) for k in sorted(self.coeffs))


InitialConfig = Annotated[Union[FockInitial, CatInitial, SuperpositionInitial], Field(discriminator="kind")]


class ErrorConfig(_Section):
    gamma: float = 0.0
    eta: float = 0.0


class SweepConfig(_Section):
    gamma_min: float = -0.2
    gamma_max: float = 0.2
    eta_min: float = -0.2
    eta_max: float = 0.2
    resolution: int = Field(default=41, ge=3)
    gamma_values: Optional[List[float]] = None
    eta_values: Optional[List[float]] = None

    @model_validator(mode="after")
    def _ordered(self) -> "SweepConfig":
        if self.gamma_min > self.gamma_max or self.eta_min > self.eta_max:
            raise ValueError("sweep ranges need min <= max")
        return self


class LindbladConfig(_Section):
    temperatures_k: List[NonNegativeFloat] = Field(default_factory=lambda: [0.1, 1.0], min_length=1)
    kappa_m: NonNegativeFloat = 1.0e4
    kappa_b: NonNegativeFloat = 100.0
    omega_m_hz: PositiveFloat = 10.0e9
    omega_b_hz: PositiveFloat = 10.0e6
    omega_hz: PositiveFloat = 1.0e6
    n_steps: int = Field(default=2000, ge=100)


class CounterRotatingConfig(_Section):
    omega_b_over_omega: List[PositiveFloat] = Field(default_factory=lambda: [10.0, 4.0], min_length=1)
    headroom: NonNegativeInt = 8


class DeviceConfig(_Section):
    """Physical device in laboratory units: frequencies in Hz (omega / 2pi), decay rates in 1/s."""

    f_a_hz: PositiveFloat
    f_m_hz: PositiveFloat
    f_b_hz: PositiveFloat
    f_p_hz: PositiveFloat
    g_ma_hz: PositiveFloat
    g_mb_hz: PositiveFloat
    epsilon_p_hz: float = 0.0
    epsilon_p_imag_hz: float = 0.0
    kappa_1: PositiveFloat
    kappa_2: PositiveFloat
    kappa_b: PositiveFloat

    def to_params(self) -> DeviceParams:
        return DeviceParams(
            omega_a=TWO_PI * self.f_a_hz,
            omega_m=TWO_PI * self.f_m_hz,
            omega_b=TWO_PI * self.f_b_hz,
            omega_p=TWO_PI * self.f_p_hz,
            g_ma=TWO_PI * self.g_ma_hz,
            g_mb=TWO_PI * self.g_mb_hz,
            epsilon_p_re=TWO_PI * self.epsilon_p_hz,
            epsilon_p_im=TWO_PI * self.epsilon_p_imag_hz,
            kappa_1=self.kappa_1,
            kappa_2=self.kappa_2,
            kappa_b=self.kappa_b,
        )


class NumericsConfig(_Section):
    n_steps: int = Field(default=2000, ge=100)
    cutoff: Union[Literal["auto"], NonNegativeInt] = "auto"
    auto_refine: bool = False
    block_mode: Literal["auto", "off"] = "auto"


class OutputConfig(_Section):
    directory: str = "./out"


class ScenarioConfig(_Section):
    scenario: ScenarioName
    protocol: Optional[ProtocolConfig] = None
    initial: Optional[InitialConfig] = None
    errors: ErrorConfig = Field(default_factory=ErrorConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    lindblad: Optional[LindbladConfig] = None
    counter_rotating: Optional[CounterRotatingConfig] = None
    device: Optional[DeviceConfig] = None
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    _diagnostics: Optional[RegimeDiagnostics] = PrivateAttr(default=None)
    _effective_model: Optional[EffectiveModel] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _custom_needs_protocol_and_state(self) -> "ScenarioConfig":
        if self.scenario == "custom":
            missing = [name for name in ("protocol", "initial") if getattr(self, name) is None]
            if missing:
                raise ValueError(f"custom scenario requires fields: {', '.join(missing)}")
        if self.initial is None:
            raise ValueError("initial state is required (initial.kind: fock | cat | superposition)")
        return self

    @property
    def diagnostics(self) -> Optional[RegimeDiagnostics]:
        return self._diagnostics

    @property
    def effective_model(self) -> Optional[EffectiveModel]:
        return self._effective_model

    def attach_device_summary(self, model: EffectiveModel, diagnostics: RegimeDiagnostics) -> None:
        self._effective_model = model
        self._diagnostics = diagnostics


# ---------------------------------------------------------------- results


class CurveSummary(BaseModel):
    label: str
    protocol: str
    initial: str
    final_population: float
    norm_drift: float
    excitation_drift: Optional[float] = None
    n_steps: int
    gamma: float = 0.0
    eta: float = 0.0
    temperature_k: Optional[float] = None
    omega_b_over_omega: Optional[float] = None
    final_amplitudes: Dict[str, ComplexValue] = Field(default_factory=dict)
    predicted_phase: Optional[float] = None
    predicted_amplitudes: Dict[str, ComplexValue] = Field(default_factory=dict)
    amplitude_error: Optional[float] = None


class SweepSummary(BaseModel):
    label: str
    protocol: str
    initial: str
    gamma_points: int
    eta_points: int
    min_population: float
    max_population: float
    metadata: Dict[str, Union[str, float, int, bool]] = Field(default_factory=dict)


class Sensitivity(BaseModel):
    which: Literal["gamma", "eta"]
    q: float
    q_half_range: float
    residual: float
    stable: bool
    p_zero: float
    x_values: List[float]
    populations: List[float]


class SensitivityReport(BaseModel):
    protocol: str
    initial: str
    mean_excitation: float
    numeric: Dict[str, Sensitivity] = Field(default_factory=dict)
    analytic: Dict[str, float] = Field(default_factory=dict)


class RunSummary(BaseModel):
    scenario: str
    run_id: str
    config_fingerprint: str
    cutoff: int
    headline: Dict[str, float] = Field(default_factory=dict)
    curves: List[CurveSummary] = Field(default_factory=list)
    sweeps: List[SweepSummary] = Field(default_factory=list)
    sensitivities: List[SensitivityReport] = Field(default_factory=list)
    regime_warnings: List[str] = Field(default_factory=list)
