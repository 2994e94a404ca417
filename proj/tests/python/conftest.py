import json
import os
import shutil
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[2]


@pytest.fixture(scope="session")
def rvio_bin():
    path = os.environ.get("RVIO_BIN") or shutil.which("rvio")
    if not path:
        candidate = ROOT / "build" / "tools" / "rvio"
        path = str(candidate) if candidate.exists() else None
    if not path:
        pytest.skip("rvio executable not found; set RVIO_BIN")
    return path


@pytest.fixture
def short_config(tmp_path):
    """Writes a 5 s flat-plane scenario into tmp_path and returns its path."""

    def make(**overrides):
        cfg = {
            "name": "smoke",
            "seed": 3,
            "output_dir": str(tmp_path / "out"),
            "scene": {"name": "flat_plane"},
            "trajectory": {"kind": "constant_velocity", "duration": 5.0, "speed": 2.0},
        }
        cfg.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        return path

    return make
