import os
import sys
from pathlib import Path

import pytest
from hypothesis import settings

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

MNIST_DIR = Path(os.environ.get("QHB_DATA_DIR", ROOT / "data" / "mnist"))


@pytest.fixture(scope="session")
def mnist_dir():
    if not (MNIST_DIR / "train-labels-idx1-ubyte.gz").exists() and not (
            MNIST_DIR / "train-labels-idx1-ubyte").exists():
        pytest.skip(f"no MNIST IDX files in {MNIST_DIR}")
    return MNIST_DIR
