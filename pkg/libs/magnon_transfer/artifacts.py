from __future__ import annotations

import json
import re
import threading
from pathlib import Path
from typing import Any, Dict, List, Union

import pandas as pd
from pydantic import BaseModel

from .analysis import SweepGrid
from .config import dump_config
from .dynamics import Trajectory
from .models import ScenarioConfig
from .protocols import PulseSchedule

FLOAT_FORMAT = "%.12g"


class ArtifactRepository:
    """Single writer of run outputs; file contents never carry timestamps."""

    def __init__(self, out_dir: Union[str, Path]) -> None:
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._written: List[str] = []

    @property
    def written(self) -> List[str]:
        return list(self._written)

    def _target(self, stem: str, suffix: str) -> Path:
        return self.out_dir / f"{_safe_file_part(stem, max_len=80)}{suffix}"

    def _write_text(self, path: Path, text: str) -> Path:
        with self._lock:
            path.write_text(text, encoding="utf-8", newline="\n")
            name = path.name
            if name not in self._written:
                self._written.append(name)
        return path

    def write_frame(self, stem: str, frame: pd.DataFrame, *, index: bool = False) -> Path:
        text = frame.to_csv(index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
        return self._write_text(self._target(stem, ".csv"), text)

    def write_schedule(self, label: str, schedule: PulseSchedule, n_samples: int = 201) -> Path:
        return self.write_frame(f"schedule_{label}", schedule.to_frame(n_samples))

    def write_trajectory(self, label: str, trajectory: Trajectory) -> Path:
        return self.write_frame(f"trajectory_{label}", trajectory.to_frame())

    def write_sweep(self, label: str, grid: SweepGrid) -> Path:
        frame = grid.to_frame()
        frame.columns = [_format_number(value) for value in grid.eta_values]
        frame.index = pd.Index([_format_number(value) for value in grid.gamma_values], name="gamma")
        path = self.write_frame(f"sweep_{label}", frame, index=True)
        sidecar = {
            "label": label,
            "rows": "gamma",
            "columns": "eta",
            "shape": list(grid.populations.shape),
            "metadata": grid.metadata,
        }
        self.write_json(f"sweep_{label}", sidecar)
        return path

    def write_json(self, stem: str, payload: Union[BaseModel, Dict[str, Any]]) -> Path:
        data = payload.model_dump(mode="json") if isinstance(payload, BaseModel) else payload
        text = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        return self._write_text(self._target(stem, ".json"), text)

    def write_config(self, config: ScenarioConfig) -> Path:
        return self._write_text(self._target("config", ".yaml"), dump_config(config))

    def write_manifest(self) -> Path:
        files = sorted(name for name in self._written if name != "manifest.json")
        return self.write_json("manifest", {"files": files})


def _format_number(value: float) -> str:
    return FLOAT_FORMAT % float(value)


def _safe_file_part(value: str, max_len: int = 32) -> str:
    value = value.strip().replace(" ", "_")
    value = re.sub(r"[^A-Za-z0-9_\-]", "_", value)
    value = re.sub(r"_+", "_", value).strip("_")
    if not value:
        return "item"
    return value[:max_len]
