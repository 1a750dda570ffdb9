import math

import pytest

from libs.magnon_transfer.config import (
    apply_assignment,
    config_fingerprint,
    deep_merge,
    dump_config,
    load_config,
    load_preset_config,
    parse_initial_shorthand,
    preset_names,
    validate_config,
)
from libs.magnon_transfer.errors import ConfigError
from libs.magnon_transfer.models import CatInitial, FockInitial, SuperpositionInitial

CUSTOM = """\
scenario: custom
protocol:
  name: pi_pulse
initial:
  kind: fock
  k: 2
"""

DEVICE = """\
scenario: custom
protocol:
  name: tqd
initial:
  kind: fock
  k: 1
device:
  f_a_hz: 10.0e9
  f_m_hz: 10.0e9
  f_b_hz: 10.0e6
  f_p_hz: 9.94e9
  g_ma_hz: 50.0e6
  g_mb_hz: 0.1
  epsilon_p_hz: 2.9e13
  kappa_1: 6.0e6
  kappa_2: 6.0e6
  kappa_b: 600.0
"""


def test_every_preset_validates() -> None:
    names = preset_names()
    assert names == ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"]
    for name in names:
        config = load_preset_config(name)
        assert config.scenario == name
        assert config.protocol is not None
        assert config.protocol.duration == pytest.approx(math.pi)
    assert load_preset_config("fig7").lindblad is not None
    assert load_preset_config("fig8").counter_rotating.omega_b_over_omega == [10.0, 4.0]


def test_example_config_validates() -> None:
    from pathlib import Path

    example = Path(__file__).resolve().parents[1] / "config" / "scenario.example.yaml"
    config = load_config(example)
    assert config.scenario == "custom"
    assert config.protocol.name == "lr_optimized"
    assert isinstance(config.initial, FockInitial)


def test_custom_scenario_lists_missing_fields() -> None:
    with pytest.raises(ConfigError) as excinfo:
        validate_config("scenario: custom\ninitial:\n  kind: fock\n")
    assert "custom scenario requires fields: protocol" in str(excinfo.value)


def test_errors_name_line_and_key() -> None:
    text = "scenario: custom\nprotocol:\n  name: tqd\n  j: 0\ninitial:\n  kind: fock\n"
    with pytest.raises(ConfigError) as excinfo:
        validate_config(text)
    assert str(excinfo.value).startswith("line 4: protocol.j:")
    assert "nonzero" in str(excinfo.value)


def test_unknown_keys_are_rejected() -> None:
    text = CUSTOM + "numerics:\n  n_steps: 500\n  speed: fast\n"
    with pytest.raises(ConfigError) as excinfo:
        validate_config(text)
    assert "line 9: numerics.speed:" in str(excinfo.value)


def test_initial_state_errors_point_into_the_union() -> None:
    text = "scenario: custom\nprotocol:\n  name: tqd\ninitial:\n  kind: fock\n  k: -1\n"
    with pytest.raises(ConfigError) as excinfo:
        validate_config(text)
    assert str(excinfo.value).startswith("line 6: initial.k:")


def test_unreadable_yaml_reports_line() -> None:
    with pytest.raises(ConfigError) as excinfo:
        validate_config("scenario: custom\nprotocol: [tqd\n")
    assert str(excinfo.value).startswith("line ")
    with pytest.raises(ConfigError):
        validate_config("- just\n- a list\n")


def test_preset_merge_replaces_initial_section() -> None:
    config = validate_config("scenario: fig3\ninitial:\n  kind: fock\n  k: 2\n")
    assert config.protocol.name == "lr"
    assert isinstance(config.initial, FockInitial)
    assert config.initial.k == 2


def test_overrides_and_initial_shorthand() -> None:
    config = validate_config(CUSTOM, overrides=["errors.gamma=0.1", "numerics.cutoff=8"], initial="cat:2")
    assert config.errors.gamma == pytest.approx(0.1)
    assert config.numerics.cutoff == 8
    assert isinstance(config.initial, CatInitial)
    assert config.initial.zeta == 2.0


def test_superposition_initial_parses_complex_pairs() -> None:
    text = "scenario: custom\nprotocol:\n  name: pi_pulse\ninitial:\n  kind: superposition\n  coeffs: {0: 0.6, 1: [0.0, 0.8]}\n"
    config = validate_config(text)
    assert isinstance(config.initial, SuperpositionInitial)
    assert config.initial.as_complex() == {0: 0.6 + 0j, 1: 0.8j}
    assert config.initial.label() == "sup0-1"


def test_shorthand_and_assignment_formats() -> None:
    assert parse_initial_shorthand("fock:3") == {"kind": "fock", "k": 3}
    assert parse_initial_shorthand("CAT:1.5") == {"kind": "cat", "zeta": 1.5}
    for bad in ("fock:1.5", "squeezed:1", "fock"):
        with pytest.raises(ConfigError):
            parse_initial_shorthand(bad)
    assert apply_assignment({}, "sweep.resolution=21") == {"sweep": {"resolution": 21}}
    with pytest.raises(ConfigError):
        apply_assignment({}, "resolution")
    with pytest.raises(ConfigError):
        apply_assignment({"errors": 1}, "errors.gamma=0.1")


def test_deep_merge_keeps_base_untouched() -> None:
    base = {"protocol": {"name": "tqd", "j": 1}, "initial": {"kind": "cat", "zeta": 1.0}}
    merged = deep_merge(base, {"protocol": {"j": 2}, "initial": {"kind": "fock"}})
    assert merged == {"protocol": {"name": "tqd", "j": 2}, "initial": {"kind": "fock"}}
    assert base["protocol"]["j"] == 1


def test_missing_files_and_presets() -> None:
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.yaml")
    with pytest.raises(ConfigError) as excinfo:
        load_preset_config("fig9")
    assert "fig2" in str(excinfo.value)


def test_presets_dir_override(tmp_path, monkeypatch) -> None:
    (tmp_path / "quick.yaml").write_text("scenario: custom\n", encoding="utf-8")
    monkeypatch.setenv("MAGNON_TRANSFER_PRESETS_DIR", str(tmp_path))
    assert preset_names() == ["quick"]


def test_fingerprint_tracks_resolved_config() -> None:
    first = validate_config(CUSTOM)
    again = validate_config(CUSTOM)
    changed = validate_config(CUSTOM, overrides=["errors.eta=0.05"])
    assert config_fingerprint(first) == config_fingerprint(again)
    assert config_fingerprint(first) != config_fingerprint(changed)
    assert "pi_pulse" in dump_config(first)


def test_device_section_attaches_effective_model() -> None:
    config = validate_config(DEVICE)
    assert config.effective_model is not None
    assert config.effective_model.phi == pytest.approx(0.25 * math.pi)
    assert config.diagnostics is not None
    assert config.diagnostics.red_detuned
    assert validate_config(CUSTOM).effective_model is None
