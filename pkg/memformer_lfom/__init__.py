from memformer_lfom.config import ConfigManager
from memformer_lfom.config import ExperimentSpec
from memformer_lfom.config import SettingsModel
from memformer_lfom.const import __version__
from memformer_lfom.high_level import do_baseline
from memformer_lfom.high_level import do_eval
from memformer_lfom.high_level import do_reproduce
from memformer_lfom.high_level import do_train
from memformer_lfom.high_level import do_verify
from memformer_lfom.high_level import run_experiment

__license__ = "AGPL-3.0"

__all__ = [
    "__version__",
    "ConfigManager",
    "SettingsModel",
    "ExperimentSpec",
    "run_experiment",
    "do_reproduce",
    "do_train",
    "do_eval",
    "do_baseline",
    "do_verify",
]
