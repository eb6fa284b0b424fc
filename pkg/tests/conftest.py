import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def run_cache(tmp_path_factory):
    """Directory of trained checkpoints shared by every test in the session.

    Set ``RNPE_TEST_CACHE`` to keep trained runs between sessions.
    """
    path = os.environ.get("RNPE_TEST_CACHE")
    if path:
        Path(path).mkdir(parents=True, exist_ok=True)
        return Path(path)
    return tmp_path_factory.mktemp("runs")


@pytest.fixture(scope="session")
def trained(run_cache):
    from robustnpe.harness import train_cached

    def get(cfg):
        return train_cached(cfg, run_cache)

    return get
