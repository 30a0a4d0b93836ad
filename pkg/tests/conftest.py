import os
from pathlib import Path

import pytest

from memformer_lfom.config.main import ConfigManager
from memformer_lfom.config.model import SettingsModel


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="run long empirical reproductions",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    """Remove all MEMFORMER_ environment variables"""
    for key in list(os.environ):
        if key.startswith("MEMFORMER_"):
            monkeypatch.delenv(key)


@pytest.fixture
def isolated_config(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch, clean_env
) -> Path:
    """Point the user default config file into tmp_path"""
    default_config = tmp_path / "config" / "config.v1.toml"
    monkeypatch.setattr(ConfigManager, "_default_config_file_path", default_config)
    return default_config


@pytest.fixture
def small_settings(tmp_path: Path) -> SettingsModel:
    """Tiny problem sizes, no run cache, output in tmp_path"""
    settings = SettingsModel()
    settings.basic.ignore_cache = True
    settings.data.d = 2
    settings.data.n = 4
    settings.data.spectrum = "1,0.5"
    settings.model.n_layers = 2
    settings.train.steps = 3
    settings.train.batch_size = 8
    settings.train.eval_batch_size = 6
    settings.train.resample_every = 2
    settings.train.runs = 2
    settings.output.out_dir = str(tmp_path / "results")
    settings.output.no_plot = True
    settings.validate_settings()
    return settings
