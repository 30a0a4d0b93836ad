from memformer_lfom.config.experiment_model import EXPERIMENT_METADATA
from memformer_lfom.config.experiment_model import CurveSpec
from memformer_lfom.config.experiment_model import ExperimentSpec
from memformer_lfom.config.experiment_model import get_experiment
from memformer_lfom.config.main import ConfigManager
from memformer_lfom.config.model import BaselineSettings
from memformer_lfom.config.model import BasicSettings
from memformer_lfom.config.model import DataSettings
from memformer_lfom.config.model import ModelSettings
from memformer_lfom.config.model import OutputSettings
from memformer_lfom.config.model import SettingsModel
from memformer_lfom.config.model import TrainSettings
from memformer_lfom.config.model import VerifySettings

__all__ = [
    "ConfigManager",
    "SettingsModel",
    "BasicSettings",
    "DataSettings",
    "ModelSettings",
    "TrainSettings",
    "BaselineSettings",
    "OutputSettings",
    "VerifySettings",
    "ExperimentSpec",
    "CurveSpec",
    "EXPERIMENT_METADATA",
    "get_experiment",
]
