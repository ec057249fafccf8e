import numpy as np
import pytest

from ekfadmm.config import reset_settings
from ekfadmm.core_models import ModelSpec


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """Every test gets fresh settings and writes under its own tmp_path."""
    monkeypatch.setenv("EKFADMM_OUTPUT_ROOT", str(tmp_path / "results"))
    monkeypatch.setenv("EKFADMM_LOG_LEVEL", "WARNING")
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mlp_spec():
    return ModelSpec()


@pytest.fixture
def linear_spec():
    return ModelSpec(kind="linear_tv", n_params=3, n_out=2)
