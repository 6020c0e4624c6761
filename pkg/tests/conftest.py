import logging
import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure src/ is importable even when not using pytest --pythonpath
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from models.schemas import DgpSpec, DgpTag  # noqa: E402
from services.simlab.dgp import gen_dgp  # noqa: E402

RUN_SLOW = os.getenv("CQR_RUN_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    """slow 用例仅在 CQR_RUN_SLOW=1 时运行"""
    if RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="long Monte-Carlo check, set CQR_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240407)


@pytest.fixture
def dgp_a_sample():
    """DGP A，n=150，无删失"""
    return gen_dgp(DgpSpec(tag=DgpTag.A, n=150), np.random.default_rng(7)).sample


@pytest.fixture
def dgp_a_censored():
    """DGP A，n=200，30% 删失"""
    return gen_dgp(DgpSpec(tag=DgpTag.A, n=200, censoring_level=0.3), np.random.default_rng(11)).sample


@pytest.fixture(autouse=True)
def restore_logging():
    """setup_logging 会重建根日志器的 handler，用例结束后还原"""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers = handlers
    root.setLevel(level)
