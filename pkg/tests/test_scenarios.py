import json
import math

import pytest

from libs.magnon_transfer.config import validate_config
from libs.magnon_transfer.errors import ConfigError, CutoffError
from libs.magnon_transfer.scenarios import run_scenario, run_sensitivity

PI_PULSE_FOCK2 = """\
scenario: custom
protocol:
  name: pi_pulse
initial:
  kind: fock
  k: 2
numerics:
  n_steps: 200
"""


def test_custom_pi_pulse_run_writes_artifacts(tmp_path) -> None:
    summary = run_scenario(validate_config(PI_PULSE_FOCK2), tmp_path)

    assert summary.headline["P"] == pytest.approx(1.0, abs=1e-6)
    assert summary.cutoff == 5
    curve = summary.curves[0]
    assert curve.label == "pi_pulse_fock2"
    assert curve.predicted_phase == pytest.approx(0.5 * math.pi)
    assert curve.amplitude_error < 1e-6
    assert curve.excitation_drift < 1e-8

    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["files"] == [
        "config.yaml",
        "schedule_pi_pulse_fock2.csv",
        "summary.json",
        "trajectory_pi_pulse_fock2.csv",
    ]
    stored = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert stored["run_id"] == summary.run_id
    assert stored["config_fingerprint"].startswith(summary.run_id)


def test_runs_are_reproducible(tmp_path) -> None:
    config = validate_config(PI_PULSE_FOCK2, overrides=["errors.gamma=0.1"])
    run_scenario(config, tmp_path / "a")
    run_scenario(config, tmp_path / "b")
    for name in ("summary.json", "trajectory_pi_pulse_fock2.csv", "config.yaml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_fig2_with_fock_state(tmp_path) -> None:
    config = validate_config("scenario: fig2\n", overrides=["numerics.n_steps=1000"])
    summary = run_scenario(config, tmp_path)
    assert summary.headline["P_with_CD"] >= 0.999
    assert summary.headline["P_without_CD"] == pytest.approx(0.97, abs=0.01)
    with_cd = next(curve for curve in summary.curves if curve.label == "tqd_cd_fock1")
    assert with_cd.amplitude_error < 1e-4


def test_fig3_invariant_run(tmp_path) -> None:
    config = validate_config("scenario: fig3\n", overrides=["numerics.n_steps=600"])
    summary = run_scenario(config, tmp_path)
    assert summary.cutoff == 12
    assert summary.headline["P_lr"] >= 0.999
    assert summary.headline["invariant_residual_max"] < 1e-6
    assert summary.headline["q_g_per_excitation"] < 1e-10
    assert summary.curves[0].predicted_phase == pytest.approx(math.pi)


def test_fig7_open_system_with_fock_state(tmp_path) -> None:
    config = validate_config(
        "scenario: fig7\n",
        overrides=["lindblad.n_steps=2000", "lindblad.temperatures_k=[0.1]"],
        initial="fock:1",
    )
    summary = run_scenario(config, tmp_path)
    for protocol in ("tqd", "lr"):
        assert summary.headline[f"closed_system_deviation_{protocol}"] < 1e-6
        assert 0.9 < summary.headline[f"P_{protocol}_0.1K"] < 1.0
    assert (tmp_path / "trajectory_tqd_fock1_0_1K.csv").exists()


def test_scenario_sections_are_required(tmp_path) -> None:
    config = validate_config("scenario: fig7\n", overrides=["lindblad=null"], initial="fock:1")
    with pytest.raises(ConfigError):
        run_scenario(config, tmp_path)


def test_explicit_cutoff_too_small_for_cat(tmp_path) -> None:
    config = validate_config("scenario: fig3\n", overrides=["numerics.cutoff=6"])
    with pytest.raises(CutoffError) as excinfo:
        run_scenario(config, tmp_path)
    assert excinfo.value.required_cutoff == 12


def test_sensitivity_reports(tmp_path) -> None:
    config = validate_config(PI_PULSE_FOCK2.replace("k: 2", "k: 1"))
    reports = run_sensitivity(config, tmp_path)
    assert len(reports) == 1
    report = reports[0]
    assert report.protocol == "pi_pulse"
    assert report.numeric["gamma"].q == pytest.approx(0.25 * math.pi**2, rel=0.02)
    assert report.analytic["q_g"] == pytest.approx(0.25 * math.pi**2)
    stored = json.loads((tmp_path / "sensitivity.json").read_text(encoding="utf-8"))
    assert stored["reports"][0]["protocol"] == "pi_pulse"


def test_fig6_reports_both_signs_of_coupling_error(tmp_path) -> None:
    config = validate_config("scenario: fig6\n", overrides=["sweep.resolution=13", "numerics.n_steps=400"])
    headline = run_scenario(config, tmp_path).headline
    for protocol in ("pi_pulse", "tqd", "lr_optimized"):
        for gamma in ("-0.3", "-0.2", "-0.1", "-0.05", "0.05", "0.1", "0.2", "0.3"):
            assert f"P_{protocol}_gamma{gamma}" in headline
    for gamma in ("-0.2", "0.2"):
        assert headline[f"P_pi_pulse_gamma{gamma}"] < headline[f"P_tqd_gamma{gamma}"] < headline[f"P_lr_optimized_gamma{gamma}"]
    assert headline["P_tqd_gamma0.2"] > headline["P_tqd_gamma-0.2"]
