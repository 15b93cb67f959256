import os
import shutil
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[2]

try:
    import cdekit  # noqa: F401
except ImportError:
    sys.path.insert(0, str(ROOT / "build" / "python"))


@pytest.fixture(scope="session")
def root():
    return ROOT


@pytest.fixture(scope="session")
def cli():
    for candidate in (os.environ.get("CDEKIT_BIN"), str(ROOT / "build" / "cdekit"), shutil.which("cdekit")):
        if candidate and Path(candidate).exists():
            return candidate
    pytest.skip("cdekit binary not found")
