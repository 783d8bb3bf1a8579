import os

import pytest

from qcrit.calibration import ensure_calibration

CAL_PATH = os.path.join(os.path.dirname(__file__), "..", "qcrit_calibration.json")


@pytest.fixture(scope="session")
def calibration():
    data, sha, path = ensure_calibration(CAL_PATH)
    return {"data": data, "sha256": sha, "path": os.path.abspath(path)}
