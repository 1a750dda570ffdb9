"""Named reproductions (fig2 ... fig8) and custom runs, from a validated ScenarioConfig to artifacts."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .analysis import (
    SweepGrid,
    error_axis,
    final_amplitudes,
    phase_per_excitation,
    pi_pulse_sensitivity_analytic,
    predicted_amplitudes,
    sensitivity_analytic_lr,
    sensitivity_numeric,
    sweep_error_grid,
)
from .artifacts import ArtifactRepository
from .config import config_fingerprint
from .device import rwa_check
from .dynamics import (
    Frame,
    HamiltonianSpec,
    LindbladSpec,
    Trajectory,
    hop_coefficient,
    lr_invariant_residual,
    propagate_converged,
    propagate_lindblad,
    propagate_schrodinger,
)
from .errors import ConfigError
from .fock import (
    DensityMatrix,
    HilbertSpace,
    StateVector,
    build_space,
    cat_state,
    choose_cutoff,
    fock_product_state,
    superposed_initial,
)
from .models import (
    TWO_PI,
    CatInitial,
    ComplexValue,
    CurveSummary,
    FockInitial,
    NumericsConfig,
    ProtocolConfig,
    RunSummary,
    ScenarioConfig,
    SensitivityReport,
    SweepSummary,
)
from .observability import bind_log_context, get_logger
from .protocols import PulseSchedule, fig3_lr_params, make_schedule
from .targets import TargetSpec

logger = get_logger(__name__)

RESIDUAL_SPACE_CUTOFF = 4
RESIDUAL_SAMPLES = 100
FIG6_PROTOCOLS = ("pi_pulse", "tqd", "lr_optimized")
FIG6_GAMMAS = (-0.3, -0.2, -0.1, -0.05, 0.05, 0.1, 0.2, 0.3)
FIG7_PROTOCOLS = ("tqd", "lr")
FIG8_PROTOCOLS = ("pi_pulse", "tqd", "lr_optimized")
CLOSED_LIMIT_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class PreparedState:
    psi0: StateVector
    target: TargetSpec
    label: str

    @property
    def space(self) -> HilbertSpace:
        return self.psi0.space


class ScenarioRun:
    """Shared plumbing of one scenario: initial state, propagation, artifacts and the summary."""

    def __init__(self, config: ScenarioConfig, out_dir: Union[str, Path, None] = None) -> None:
        self.config = config
        self.fingerprint = config_fingerprint(config)
        self.run_id = self.fingerprint[:16]
        self.repo = ArtifactRepository(out_dir or config.output.directory)
        self.curves: List[CurveSummary] = []
        self.sweeps: List[SweepSummary] = []
        self.sensitivities: List[SensitivityReport] = []
        self.headline: Dict[str, float] = {}
        self.warnings: List[str] = []
        self._cutoff = 0

    @property
    def numerics(self) -> NumericsConfig:
        return self.config.numerics

    @property
    def protocol(self) -> ProtocolConfig:
        return self.config.protocol or ProtocolConfig(name="tqd")

    def prepare(self, headroom: int = 0) -> PreparedState:
        initial = self.config.initial
        explicit = self.numerics.cutoff
        if isinstance(initial, FockInitial):
            cutoff = choose_cutoff(fock_levels=[initial.k], headroom=headroom)
        elif isinstance(initial, CatInitial):
            cutoff = choose_cutoff(zeta=initial.zeta_complex, headroom=headroom)
        else:
            cutoff = choose_cutoff(fock_levels=initial.as_complex().keys(), headroom=headroom)
        if explicit != "auto":
            cutoff = int(explicit)
        space = build_space(cutoff, cutoff)
        if isinstance(initial, FockInitial):
            psi0 = fock_product_state(space, initial.k, 0)
        elif isinstance(initial, CatInitial):
            psi0 = cat_state(space, initial.zeta_complex)
        else:
            psi0 = superposed_initial(space, initial.as_complex())
        self._cutoff = max(self._cutoff, cutoff)
        return PreparedState(psi0, TargetSpec.from_state(psi0), initial.label())

    def schedule(self, name: Optional[str] = None, **changes: object) -> PulseSchedule:
        protocol = self.protocol.model_copy(update={"name": name or self.protocol.name, **changes})
        return make_schedule(
            protocol.name,
            protocol.duration,
            theta_shape=protocol.theta_shape,
            include_cd=protocol.include_cd,
            j=protocol.j,
            beta_shape=protocol.beta_shape,
        )

    def block_mode(self) -> Optional[bool]:
        return None if self.numerics.block_mode == "auto" else False

    def propagate(self, spec: HamiltonianSpec, state: PreparedState) -> Trajectory:
        block_mode = self.block_mode() if spec.frame == Frame.RWA else False
        if self.numerics.auto_refine:
            return propagate_converged(spec, state.psi0, self.numerics.n_steps, target=state.target, block_mode=block_mode)
        return propagate_schrodinger(spec, state.psi0, self.numerics.n_steps, target=state.target, block_mode=block_mode)

    def record_curve(
        self,
        label: str,
        spec: HamiltonianSpec,
        state: PreparedState,
        trajectory: Trajectory,
        **fields: Optional[float],
    ) -> CurveSummary:
        self.repo.write_trajectory(label, trajectory)
        summary = CurveSummary(
            label=label,
            protocol=spec.schedule.protocol_tag.value,
            initial=state.label,
            final_population=trajectory.final_population,
            norm_drift=trajectory.norm_drift,
            excitation_drift=trajectory.excitation_drift if spec.frame == Frame.RWA else None,
            n_steps=trajectory.n_steps,
            gamma=spec.gamma,
            eta=spec.eta,
            **fields,
        )
        if isinstance(trajectory.final_state, StateVector):
            amplitudes = final_amplitudes(trajectory.final_state, state.target)
            summary.final_amplitudes = {str(k): ComplexValue.of(v) for k, v in amplitudes.items()}
            phase = phase_per_excitation(spec.schedule) if spec.frame == Frame.RWA else None
            if phase is not None and spec.gamma == 0 and spec.eta == 0:
                predicted = predicted_amplitudes(state.target, phase)
                summary.predicted_phase = phase
                summary.predicted_amplitudes = {str(k): ComplexValue.of(v) for k, v in predicted.items()}
                summary.amplitude_error = max(abs(amplitudes[k] - predicted[k]) for k in predicted)
        self.curves.append(summary)
        logger.info("curve_done", extra={"label": label, "population": summary.final_population})
        return summary

    def run_curve(self, label: str, spec: HamiltonianSpec, state: PreparedState, **fields: Optional[float]) -> CurveSummary:
        self.repo.write_schedule(label, spec.schedule)
        return self.record_curve(label, spec, state, self.propagate(spec, state), **fields)

    def run_sweep(
        self,
        label: str,
        spec: HamiltonianSpec,
        state: PreparedState,
        *,
        gammas: np.ndarray,
        etas: np.ndarray,
    ) -> SweepGrid:
        grid = sweep_error_grid(
            spec,
            state.target,
            gamma_values=gammas,
            eta_values=etas,
            space=state.space,
            n_steps=self.numerics.n_steps,
        )
        self.repo.write_sweep(label, grid)
        self.sweeps.append(
            SweepSummary(
                label=label,
                protocol=spec.schedule.protocol_tag.value,
                initial=state.label,
                gamma_points=int(gammas.size),
                eta_points=int(etas.size),
                min_population=float(grid.populations.min()),
                max_population=float(grid.populations.max()),
                metadata={key: value for key, value in grid.metadata.items() if isinstance(value, (str, int, float, bool))},
            )
        )
        return grid

    def gamma_axis(self) -> np.ndarray:
        sweep = self.config.sweep
        if sweep.gamma_values is not None:
            return np.asarray(sweep.gamma_values, dtype=float)
        return error_axis(sweep.gamma_min, sweep.gamma_max, sweep.resolution)

    def eta_axis(self) -> np.ndarray:
        sweep = self.config.sweep
        if sweep.eta_values is not None:
            return np.asarray(sweep.eta_values, dtype=float)
        return error_axis(sweep.eta_min, sweep.eta_max, sweep.resolution)

    def sensitivity_report(self, spec: HamiltonianSpec, state: PreparedState) -> SensitivityReport:
        report = SensitivityReport(
            protocol=spec.schedule.protocol_tag.value,
            initial=state.label,
            mean_excitation=state.target.mean_excitation,
        )
        for which in ("gamma", "eta"):
            report.numeric[which] = sensitivity_numeric(
                spec, state.target, which, space=state.space, n_steps=self.numerics.n_steps
            )
        n_bar = state.target.mean_excitation
        if spec.schedule.lr_params is not None:
            q_g, q_delta = sensitivity_analytic_lr(spec.schedule.lr_params, 1)
            report.analytic = {"q_g": n_bar * q_g, "q_delta": n_bar * q_delta}
        elif spec.schedule.protocol_tag.value == "pi_pulse":
            report.analytic = {"q_g": pi_pulse_sensitivity_analytic(state.target), "q_delta": 0.0}
        self.sensitivities.append(report)
        return report

    def finish(self) -> RunSummary:
        summary = RunSummary(
            scenario=self.config.scenario,
            run_id=self.run_id,
            config_fingerprint=self.fingerprint,
            cutoff=self._cutoff,
            headline=self.headline,
            curves=self.curves,
            sweeps=self.sweeps,
            sensitivities=self.sensitivities,
            regime_warnings=self.warnings,
        )
        self.repo.write_config(self.config)
        if self.config.effective_model is not None and self.config.diagnostics is not None:
            self.repo.write_json(
                "effective_model",
                {
                    "model": self.config.effective_model.model_dump(mode="json"),
                    "diagnostics": self.config.diagnostics.model_dump(mode="json"),
                },
            )
            self.warnings.extend(self.config.diagnostics.failed())
            summary.regime_warnings = list(self.warnings)
        self.repo.write_json("summary", summary)
        self.repo.write_manifest()
        return summary


def _spec(schedule: PulseSchedule, gamma: float = 0.0, eta: float = 0.0) -> HamiltonianSpec:
    return HamiltonianSpec(schedule=schedule, gamma=gamma, eta=eta)


def _run_fig2(run: ScenarioRun) -> None:
    state = run.prepare()
    for include_cd, key in ((True, "P_with_CD"), (False, "P_without_CD")):
        label = f"tqd_{'cd' if include_cd else 'nocd'}_{state.label}"
        curve = run.run_curve(label, _spec(run.schedule("tqd", include_cd=include_cd)), state)
        run.headline[key] = curve.final_population


def _run_fig3(run: ScenarioRun) -> None:
    state = run.prepare()
    schedule = run.schedule("lr")
    curve = run.run_curve(f"lr_{state.label}", _spec(schedule), state)
    run.headline["P_lr"] = curve.final_population

    params = schedule.lr_params or fig3_lr_params(schedule.T)
    small = build_space(RESIDUAL_SPACE_CUTOFF, RESIDUAL_SPACE_CUTOFF)
    residuals = [
        lr_invariant_residual(small, _spec(schedule), params, float(t))
        for t in np.linspace(0.0, schedule.T, RESIDUAL_SAMPLES)
    ]
    run.headline["invariant_residual_max"] = max(residuals) / schedule.omega
    q_g, q_delta = sensitivity_analytic_lr(params, 1)
    run.headline["q_g_per_excitation"] = q_g
    run.headline["q_delta_per_excitation"] = q_delta


def _run_error_curves(run: ScenarioRun, state: PreparedState, protocol: str, label: str, **changes: object) -> Tuple[SweepGrid, SweepGrid]:
    spec = _spec(run.schedule(protocol, **changes))
    run.repo.write_schedule(label, spec.schedule)
    gamma_curve = run.run_sweep(f"{label}_gamma", spec, state, gammas=run.gamma_axis(), etas=np.array([0.0]))
    eta_curve = run.run_sweep(f"{label}_eta", spec, state, gammas=np.array([0.0]), etas=run.eta_axis())
    return gamma_curve, eta_curve


def _run_fig4(run: ScenarioRun) -> None:
    state = run.prepare()
    for shape in ("linear", "quadratic"):
        gamma_curve, eta_curve = _run_error_curves(run, state, "tqd", f"tqd_{shape}_{state.label}", theta_shape=shape)
        for gamma in (-0.2, 0.2):
            if gamma_curve.gamma_values.min() <= gamma <= gamma_curve.gamma_values.max():
                run.headline[f"P_{shape}_gamma{gamma:+g}"] = gamma_curve.at(gamma, 0.0)
        run.headline[f"P_{shape}_eta_min"] = float(eta_curve.populations.min())


def _run_fig5(run: ScenarioRun) -> None:
    state = run.prepare()
    spec = _spec(run.schedule("tqd", theta_shape="linear"))
    run.repo.write_schedule(f"tqd_{state.label}", spec.schedule)
    gammas, etas = run.gamma_axis(), run.eta_axis()
    grid = run.run_sweep(f"tqd_grid_{state.label}", spec, state, gammas=gammas, etas=etas)
    for gamma in (-0.2, 0.2):
        if gammas.min() <= gamma <= gammas.max() and etas.min() <= 0.0 <= etas.max():
            run.headline[f"P_gamma{gamma:+g}"] = grid.at(gamma, 0.0)
    if gammas.size == etas.size and np.allclose(gammas, etas):
        run.headline["P_diagonal_min"] = float(np.min(np.diag(grid.populations)))


def _run_fig6(run: ScenarioRun) -> None:
    state = run.prepare()
    for protocol in FIG6_PROTOCOLS:
        label = f"{protocol}_{state.label}"
        gamma_curve, _ = _run_error_curves(run, state, protocol, label, include_cd=True)
        for gamma in FIG6_GAMMAS:
            if gamma_curve.gamma_values.min() <= gamma <= gamma_curve.gamma_values.max():
                run.headline[f"P_{protocol}_gamma{gamma:g}"] = gamma_curve.at(gamma, 0.0)
        report = run.sensitivity_report(_spec(run.schedule(protocol, include_cd=True)), state)
        run.headline[f"q_g_{protocol}"] = report.numeric["gamma"].q
        run.headline[f"q_delta_{protocol}"] = report.numeric["eta"].q


def _run_fig7(run: ScenarioRun) -> None:
    lindblad = run.config.lindblad
    if lindblad is None:
        raise ConfigError("scenario fig7 needs a lindblad section")
    state = run.prepare()
    rho0 = DensityMatrix.from_state(state.psi0)
    omega = TWO_PI * lindblad.omega_hz
    for protocol in FIG7_PROTOCOLS:
        spec = _spec(run.schedule(protocol, include_cd=True))
        run.repo.write_schedule(f"{protocol}_{state.label}", spec.schedule)
        unitary = propagate_converged(spec, state.psi0, lindblad.n_steps, CLOSED_LIMIT_TOLERANCE, target=state.target)
        closed = propagate_lindblad(spec, LindbladSpec(0.0, 0.0), rho0, lindblad.n_steps, target=state.target)
        stride = unitary.n_steps // lindblad.n_steps
        deviation = np.abs(closed.populations - unitary.populations[::stride])
        run.headline[f"closed_system_deviation_{protocol}"] = float(np.max(deviation))
        for temperature in lindblad.temperatures_k:
            bath = LindbladSpec.from_bath(
                kappa_m=lindblad.kappa_m,
                kappa_b=lindblad.kappa_b,
                omega_m=TWO_PI * lindblad.omega_m_hz,
                omega_b=TWO_PI * lindblad.omega_b_hz,
                omega=omega,
                temperature=temperature,
            )
            trajectory = propagate_lindblad(spec, bath, rho0, lindblad.n_steps, target=state.target)
            label = f"{protocol}_{state.label}_{temperature:g}K"
            run.record_curve(label, spec, state, trajectory, temperature_k=temperature)
            run.headline[f"P_{protocol}_{temperature:g}K"] = trajectory.final_population


def _peak_coupling(schedule: PulseSchedule, n_samples: int = 201) -> float:
    return max(abs(hop_coefficient(schedule.sample(float(t)))) for t in schedule.sample_times(n_samples))


def _run_fig8(run: ScenarioRun) -> None:
    counter_rotating = run.config.counter_rotating
    if counter_rotating is None:
        raise ConfigError("scenario fig8 needs a counter_rotating section")
    state = run.prepare(headroom=counter_rotating.headroom)
    for protocol in FIG8_PROTOCOLS:
        schedule = run.schedule(protocol, include_cd=True)
        run.repo.write_schedule(f"{protocol}_{state.label}", schedule)
        peak = _peak_coupling(schedule) / schedule.omega
        for ratio in counter_rotating.omega_b_over_omega:
            check = rwa_check(ratio, peak)
            if not check.passed:
                run.warnings.append(f"{check.name}:{protocol}:{ratio:g}")
                logger.warning("regime_check_failed", extra={"check": check.name, "protocol": protocol, "ratio": check.ratio})
            spec = HamiltonianSpec(schedule=schedule, frame=Frame.COUNTER_ROTATING, omega_b_over_Omega=ratio)
            trajectory = run.propagate(spec, state)
            label = f"{protocol}_{state.label}_wb{ratio:g}"
            run.record_curve(label, spec, state, trajectory, omega_b_over_omega=ratio)
            run.headline[f"P_{protocol}_wb{ratio:g}"] = trajectory.final_population


def _run_custom(run: ScenarioRun) -> None:
    state = run.prepare()
    errors = run.config.errors
    spec = _spec(run.schedule(), errors.gamma, errors.eta)
    curve = run.run_curve(f"{run.protocol.name}_{state.label}", spec, state)
    run.headline["P"] = curve.final_population


SCENARIOS: Dict[str, Callable[[ScenarioRun], None]] = {
    "fig2": _run_fig2,
    "fig3": _run_fig3,
    "fig4": _run_fig4,
    "fig5": _run_fig5,
    "fig6": _run_fig6,
    "fig7": _run_fig7,
    "fig8": _run_fig8,
    "custom": _run_custom,
}


def run_scenario(config: ScenarioConfig, out_dir: Union[str, Path, None] = None) -> RunSummary:
    run = ScenarioRun(config, out_dir)
    with bind_log_context(run_id=run.run_id, scenario=config.scenario):
        logger.info("scenario_start", extra={"out_dir": str(run.repo.out_dir)})
        SCENARIOS[config.scenario](run)
        summary = run.finish()
        logger.info("scenario_done", extra={"headline": summary.headline, "files": len(run.repo.written)})
    return summary


def run_sensitivity(config: ScenarioConfig, out_dir: Union[str, Path, None] = None) -> List[SensitivityReport]:
    """Numeric and analytic q_g, q_delta of the configured protocol (all three for fig6)."""
    run = ScenarioRun(config, out_dir)
    with bind_log_context(run_id=run.run_id, scenario=config.scenario):
        state = run.prepare()
        protocols = FIG6_PROTOCOLS if config.scenario == "fig6" else (run.protocol.name,)
        for protocol in protocols:
            errors = config.errors
            run.sensitivity_report(_spec(run.schedule(protocol), errors.gamma, errors.eta), state)
        run.repo.write_json("sensitivity", {"reports": [report.model_dump(mode="json") for report in run.sensitivities]})
        run.repo.write_manifest()
    return run.sensitivities

