import cmath
import math

import numpy as np
import pytest
from scipy import constants

from libs.magnon_transfer.errors import ConfigError, StepRefinementError
from libs.magnon_transfer.fock import (
    DensityMatrix,
    build_space,
    commutator,
    fock_product_state,
    number_op,
    superposed_initial,
)
from libs.magnon_transfer.dynamics import (
    Frame,
    HamiltonianSpec,
    LindbladSpec,
    build_cr_hamiltonian,
    build_hamiltonian,
    hop_coefficient,
    lr_invariant_residual,
    pair_coefficients,
    propagate_converged,
    propagate_lindblad,
    propagate_schrodinger,
    thermal_occupation,
)
from libs.magnon_transfer.protocols import (
    ControlSample,
    hold_schedule,
    lr_optimized_schedule,
    optimized_lr_params,
    pi_pulse_schedule,
    tqd_schedule,
)
from libs.magnon_transfer.targets import TargetSpec

T = math.pi


def test_rwa_hamiltonian_conserves_excitations() -> None:
    space = build_space(4, 4)
    total = number_op(space, "m").entries + number_op(space, "b").entries
    spec = HamiltonianSpec(schedule=tqd_schedule(T), gamma=0.1, eta=-0.2)
    h = build_hamiltonian(space, spec, 0.9).entries
    assert np.max(np.abs(h - h.conj().T)) < 1e-12
    assert np.max(np.abs(commutator(h, total))) < 1e-12

    cr = HamiltonianSpec(schedule=tqd_schedule(T), frame=Frame.COUNTER_ROTATING, omega_b_over_Omega=10.0)
    h_cr = build_cr_hamiltonian(space, cr, 0.9).entries
    assert np.max(np.abs(h_cr - h_cr.conj().T)) < 1e-12
    assert np.max(np.abs(commutator(h_cr, total))) > 0.1


def test_pi_pulse_transfers_fock_state_with_quarter_turn_phase() -> None:
    space = build_space(4, 4)
    psi0 = fock_product_state(space, 1, 0)
    run = propagate_schrodinger(HamiltonianSpec(schedule=pi_pulse_schedule(T)), psi0, 200)
    assert run.final_population == pytest.approx(1.0, abs=1e-10)
    assert abs(run.final_state.amplitude(0, 1) - (-1j)) < 1e-6
    assert run.norm_drift < 1e-9
    assert run.excitation_drift < 1e-8


def test_pi_pulse_superposition_phases() -> None:
    space = build_space(5, 5)
    coeffs = {0: 0.6, 1: 0.48, 2: 0.64j}
    run = propagate_schrodinger(HamiltonianSpec(schedule=pi_pulse_schedule(T)), superposed_initial(space, coeffs), 200)
    for k, c in coeffs.items():
        expected = c * cmath.exp(-1j * k * 0.5 * math.pi)
        assert abs(run.final_state.amplitude(0, k) - expected) < 1e-6


def test_pi_pulse_coupling_error_matches_closed_form() -> None:
    space = build_space(5, 5)
    psi0 = fock_product_state(space, 2, 0)
    for gamma in (-0.3, 0.1, 0.3):
        spec = HamiltonianSpec(schedule=pi_pulse_schedule(T), gamma=gamma)
        run = propagate_schrodinger(spec, psi0, 200)
        assert run.final_population == pytest.approx(math.cos(0.5 * math.pi * gamma) ** 4, abs=1e-9)


def test_tqd_with_and_without_counterdiabatic_term() -> None:
    space = build_space(4, 4)
    psi0 = fock_product_state(space, 1, 0)
    with_cd = propagate_schrodinger(HamiltonianSpec(schedule=tqd_schedule(T, include_cd=True)), psi0, 1000)
    without_cd = propagate_schrodinger(HamiltonianSpec(schedule=tqd_schedule(T, include_cd=False)), psi0, 1000)
    assert with_cd.final_population > 0.99999
    assert abs(with_cd.final_state.amplitude(0, 1) - (-1.0)) < 1e-4
    assert without_cd.final_population == pytest.approx(0.97, abs=0.01)


def test_optimized_invariant_protocol_transfer_and_phase() -> None:
    space = build_space(4, 4)
    psi0 = fock_product_state(space, 1, 0)
    run = propagate_schrodinger(HamiltonianSpec(schedule=lr_optimized_schedule(T, 1)), psi0, 1000)
    assert run.final_population > 1.0 - 1e-6
    assert abs(run.final_state.amplitude(0, 1) - (-1.0)) < 1e-4


def test_block_and_dense_steppers_agree() -> None:
    space = build_space(5, 5)
    psi0 = superposed_initial(space, {0: 0.6, 2: 0.8})
    spec = HamiltonianSpec(schedule=tqd_schedule(T, "quadratic"), gamma=0.1, eta=0.05)
    blocks = propagate_schrodinger(spec, psi0, 300, block_mode=True)
    dense = propagate_schrodinger(spec, psi0, 300, block_mode=False)
    assert np.max(np.abs(blocks.final_state.amplitudes - dense.final_state.amplitudes)) < 1e-10
    assert np.allclose(blocks.populations, dense.populations, atol=1e-10)


def test_step_count_and_frame_validation() -> None:
    space = build_space(3, 3)
    psi0 = fock_product_state(space, 1, 0)
    with pytest.raises(ConfigError):
        propagate_schrodinger(HamiltonianSpec(schedule=pi_pulse_schedule(T)), psi0, 50)
    with pytest.raises(ConfigError):
        HamiltonianSpec(schedule=pi_pulse_schedule(T), frame=Frame.COUNTER_ROTATING)
    cr = HamiltonianSpec(schedule=pi_pulse_schedule(T), frame=Frame.COUNTER_ROTATING, omega_b_over_Omega=10.0)
    with pytest.raises(ConfigError):
        propagate_schrodinger(cr, psi0, 200, block_mode=True)


def test_counter_rotating_run_stays_close_to_rwa_at_high_phonon_frequency() -> None:
    space = build_space(6, 6)
    psi0 = fock_product_state(space, 1, 0)
    spec = HamiltonianSpec(schedule=pi_pulse_schedule(T), frame=Frame.COUNTER_ROTATING, omega_b_over_Omega=10.0)
    run = propagate_schrodinger(spec, psi0, 2000)
    assert run.final_population > 0.95
    assert run.norm_drift < 1e-8
    assert run.excitation_drift > 1e-6


def test_trajectory_frame_columns() -> None:
    space = build_space(3, 3)
    run = propagate_schrodinger(HamiltonianSpec(schedule=pi_pulse_schedule(T)), fock_product_state(space, 1, 0), 100)
    frame = run.to_frame()
    assert list(frame.columns) == ["t", "population", "norm_drift", "excitation"]
    assert len(frame) == 101
    assert frame["population"].iloc[0] == 0.0


def test_step_refinement_converges_and_gives_up() -> None:
    space = build_space(3, 3)
    psi0 = fock_product_state(space, 1, 0)
    spec = HamiltonianSpec(schedule=pi_pulse_schedule(T))
    run = propagate_converged(spec, psi0, 100)
    assert run.n_steps == 200
    with pytest.raises(StepRefinementError) as excinfo:
        propagate_converged(spec, psi0, 100, tol=0.0, max_attempts=2)
    assert excinfo.value.n_steps == 400


def test_thermal_occupation() -> None:
    assert thermal_occupation(1.0e6, 0.0) == 0.0
    omega = 2.0 * math.pi * 10.0e6
    high_temperature = constants.k * 1.0 / (constants.hbar * omega) - 0.5
    assert thermal_occupation(omega, 1.0) == pytest.approx(high_temperature, rel=1e-6)
    with pytest.raises(ConfigError):
        thermal_occupation(omega, -1.0)


def test_bath_rates_are_scaled_by_omega() -> None:
    omega = 2.0 * math.pi * 1.0e6
    bath = LindbladSpec.from_bath(
        kappa_m=1.0e4, kappa_b=100.0, omega_m=2.0 * math.pi * 10.0e9, omega_b=2.0 * math.pi * 10.0e6, omega=omega, temperature=0.1
    )
    assert bath.kappa_m == pytest.approx(1.0e4 / omega)
    assert bath.n_bar_b > 100.0
    assert bath.n_bar_m < 0.01
    assert len(bath.jump_terms()) == 4
    assert LindbladSpec(0.0, 0.0).jump_terms() == []
    with pytest.raises(ConfigError):
        LindbladSpec(-1.0, 0.0)


def test_lindblad_closed_limit_matches_unitary_run() -> None:
    space = build_space(4, 4)
    psi0 = fock_product_state(space, 1, 0)
    spec = HamiltonianSpec(schedule=tqd_schedule(T))
    unitary = propagate_schrodinger(spec, psi0, 4000)
    closed = propagate_lindblad(spec, LindbladSpec(0.0, 0.0), DensityMatrix.from_state(psi0), 4000)
    assert np.max(np.abs(closed.populations - unitary.populations)) < 1e-6
    assert closed.norm_drift < 1e-6


def test_lindblad_decay_lowers_transfer() -> None:
    space = build_space(4, 4)
    psi0 = fock_product_state(space, 1, 0)
    spec = HamiltonianSpec(schedule=tqd_schedule(T))
    lossy = propagate_lindblad(spec, LindbladSpec(0.05, 0.05), DensityMatrix.from_state(psi0), 1000)
    assert 0.8 < lossy.final_population < 0.99
    assert lossy.norm_drift < 1e-6


def test_lindblad_relaxes_to_thermal_occupation() -> None:
    space = build_space(0, 14)
    vacuum = fock_product_state(space, 0, 0)
    spec = HamiltonianSpec(schedule=hold_schedule(T))
    bath = LindbladSpec(kappa_m=0.0, kappa_b=5.0, n_bar_b=0.5)
    run = propagate_lindblad(spec, bath, DensityMatrix.from_state(vacuum), 2000, target=TargetSpec.fock(0))
    n_b = space.levels[1]
    mean = float(np.dot(run.final_state.diagonal(), n_b))
    assert mean == pytest.approx(0.5, abs=1e-4)


def test_invariant_residual_vanishes_only_for_matching_controls() -> None:
    space = build_space(4, 4)
    params = optimized_lr_params(T, 1)
    matching = HamiltonianSpec(schedule=lr_optimized_schedule(T, 1))
    mismatched = HamiltonianSpec(schedule=tqd_schedule(T))
    for t in (0.3, 1.5, 2.8):
        assert lr_invariant_residual(space, matching, params, t) < 1e-8
    assert lr_invariant_residual(space, mismatched, params, 1.5) > 0.1


def test_coupling_error_scales_counterdiabatic_rate() -> None:
    sample = ControlSample(t=0.0, delta=0.0, g_real=0.3, g_imag=0.4, theta_dot=0.5)
    assert hop_coefficient(sample) == pytest.approx(complex(0.3, -0.9))
    assert hop_coefficient(sample, 0.2) == pytest.approx(1.2 * complex(0.3, -0.9))
    hop, pair = pair_coefficients(sample, 0.2)
    assert hop == pytest.approx(1.2 * complex(0.3, 0.4) - 0.6j)
    assert pair == pytest.approx(1.2 * complex(0.3, 0.4))


def test_tqd_coupling_error_response_is_asymmetric() -> None:
    space = build_space(3, 3)
    psi0 = fock_product_state(space, 1, 0)
    populations = {}
    for gamma in (-0.2, 0.2):
        spec = HamiltonianSpec(schedule=tqd_schedule(T), gamma=gamma)
        populations[gamma] = propagate_schrodinger(spec, psi0, 2000).final_population
    assert populations[0.2] == pytest.approx(0.990, abs=3e-3)
    assert populations[-0.2] == pytest.approx(0.958, abs=3e-3)
    assert populations[0.2] - populations[-0.2] > 0.02


def test_counter_rotating_terms_spoil_only_the_invariant_protocol_at_low_phonon_frequency() -> None:
    space = build_space(10, 10)
    psi0 = fock_product_state(space, 1, 0)
    final = {}
    for name, schedule in (("pi", pi_pulse_schedule(T)), ("tqd", tqd_schedule(T)), ("lr", lr_optimized_schedule(T, 1))):
        spec = HamiltonianSpec(schedule=schedule, frame=Frame.COUNTER_ROTATING, omega_b_over_Omega=4.0)
        final[name] = propagate_schrodinger(spec, psi0, 3000).final_population
    assert final["tqd"] > 0.99
    assert final["pi"] == pytest.approx(0.968, abs=5e-3)
    assert final["lr"] < 0.2


def test_counter_rotating_hamiltonian_pairs() -> None:
    space = build_space(2, 2)
    spec = HamiltonianSpec(schedule=hold_schedule(T, g_real=0.3, g_imag=0.4), frame=Frame.COUNTER_ROTATING, omega_b_over_Omega=4.0)
    h = build_cr_hamiltonian(space, spec, 1.0)
    assert h.entries[space.index_of(1, 0), space.index_of(0, 1)] == pytest.approx(complex(0.3, 0.4))
    assert h.entries[space.index_of(1, 1), space.index_of(0, 0)] == pytest.approx(complex(0.3, 0.4))
    assert h.entries[space.index_of(1, 1), space.index_of(1, 1)] == pytest.approx(8.0)


def test_bath_occupations_and_jump_weights_at_one_kelvin() -> None:
    omega = 2.0 * math.pi * 1.0e6
    bath = LindbladSpec.from_bath(
        kappa_m=1.0e4, kappa_b=100.0, omega_m=2.0 * math.pi * 10.0e9, omega_b=2.0 * math.pi * 10.0e6, omega=omega, temperature=1.0
    )
    assert bath.n_bar_b == pytest.approx(2083.3, rel=1e-3)
    assert bath.n_bar_m == pytest.approx(1.6, abs=0.05)
    assert bath.kappa_b == pytest.approx(1.5915e-5, rel=1e-4)
    rates = {(mode, raising): rate for rate, mode, raising in bath.jump_terms()}
    assert rates[("b", False)] == pytest.approx(bath.kappa_b * (bath.n_bar_b + 1.0))
    assert rates[("b", True)] == pytest.approx(bath.kappa_b * bath.n_bar_b)
    assert rates[("m", False)] - rates[("m", True)] == pytest.approx(bath.kappa_m)
