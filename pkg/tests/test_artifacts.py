import json

import numpy as np
import pandas as pd

from libs.magnon_transfer.analysis import SweepGrid
from libs.magnon_transfer.artifacts import ArtifactRepository, _safe_file_part
from libs.magnon_transfer.config import validate_config
from libs.magnon_transfer.protocols import make_schedule


def _grid() -> SweepGrid:
    return SweepGrid(
        np.array([-0.1, 0.0, 0.1]),
        np.array([-0.1, 0.0, 0.1]),
        np.array([[0.91, 0.95, 0.97], [0.96, 1.0, 0.96], [0.97, 0.95, 0.99]]),
        {"protocol": "tqd", "n_steps": 2000},
    )


def test_sweep_csv_layout_and_sidecar(tmp_path) -> None:
    repo = ArtifactRepository(tmp_path)
    path = repo.write_sweep("tqd_grid_cat1", _grid())

    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "gamma,-0.1,0,0.1"
    assert lines[2] == "0,0.96,1,0.96"

    frame = pd.read_csv(path, index_col=0)
    assert np.allclose(frame.to_numpy(), _grid().populations)

    sidecar = json.loads((tmp_path / "sweep_tqd_grid_cat1.json").read_text(encoding="utf-8"))
    assert sidecar["shape"] == [3, 3]
    assert sidecar["rows"] == "gamma"
    assert sidecar["metadata"]["protocol"] == "tqd"


def test_schedule_csv_and_manifest(tmp_path) -> None:
    repo = ArtifactRepository(tmp_path / "run")
    repo.write_schedule("pi pulse/fock1", make_schedule("pi_pulse", 3.141592653589793), n_samples=5)
    repo.write_json("summary", {"b": 1, "a": 2})
    manifest = repo.write_manifest()

    schedule = tmp_path / "run" / "schedule_pi_pulse_fock1.csv"
    assert schedule.read_text(encoding="utf-8").splitlines()[0] == "t,delta,g_real,g_imag,theta_dot"
    files = json.loads(manifest.read_text(encoding="utf-8"))["files"]
    assert files == ["schedule_pi_pulse_fock1.csv", "summary.json"]
    assert (tmp_path / "run" / "summary.json").read_text(encoding="utf-8").startswith('{\n  "a": 2')


def test_outputs_are_byte_identical_across_runs(tmp_path) -> None:
    config = validate_config("scenario: custom\nprotocol:\n  name: tqd\ninitial:\n  kind: fock\n  k: 1\n")
    contents = []
    for name in ("first", "second"):
        repo = ArtifactRepository(tmp_path / name)
        repo.write_config(config)
        repo.write_sweep("grid", _grid())
        repo.write_manifest()
        contents.append({path.name: path.read_bytes() for path in sorted((tmp_path / name).iterdir())})
    assert contents[0] == contents[1]
    assert "config.yaml" in contents[0]


def test_safe_file_part() -> None:
    assert _safe_file_part("tqd linear/cat 1", max_len=80) == "tqd_linear_cat_1"
    assert _safe_file_part("***") == "item"
    assert len(_safe_file_part("x" * 200, max_len=80)) == 80
