import importlib
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from memformer_lfom.baselines.base_optimizer import BaseOptimizer
from memformer_lfom.baselines.base_optimizer import BatchTrajectory
from memformer_lfom.baselines.base_optimizer import Trajectory
from memformer_lfom.config.model import BaselineSettings
from memformer_lfom.tasks import TaskBatch

logger = logging.getLogger(__name__)


@dataclass
class OptimizerMetadata:
    name: str
    module_name: str
    class_name: str
    description: str


OPTIMIZER_METADATA = [
    OptimizerMetadata("gd", "gd", "GDOptimizer", "Gradient descent, constant step"),
    OptimizerMetadata(
        "cgd", "cgd", "CGDOptimizer", "Conjugate gradient (Fletcher-Reeves, exact line search)"
    ),
    OptimizerMetadata("mgd", "mgd", "MomentumGDOptimizer", "Heavy-ball momentum GD"),
    OptimizerMetadata("nag", "nag", "NAGOptimizer", "Nesterov accelerated gradient"),
    OptimizerMetadata(
        "gdpp", "gdpp", "GDPlusPlusOptimizer", "GD++ (covariate transform + GD)"
    ),
]

OPTIMIZER_METADATA_MAP = {metadata.name: metadata for metadata in OPTIMIZER_METADATA}

# auto check duplicate optimizer metadata
assert len(OPTIMIZER_METADATA_MAP) == len(OPTIMIZER_METADATA), (
    "Duplicate optimizer metadata"
)


def get_optimizer(name: str, **params) -> BaseOptimizer:
    """Import the implementation module of ``name`` and instantiate it."""
    metadata = OPTIMIZER_METADATA_MAP.get(name)
    if metadata is None:
        raise ValueError(
            f"Unknown baseline: {name}. Valid baselines: {', '.join(OPTIMIZER_METADATA_MAP)}"
        )
    module = importlib.import_module(
        f"memformer_lfom.baselines.optimizer_impl.{metadata.module_name}"
    )
    optimizer = getattr(module, metadata.class_name)(**params)
    logger.debug(f"Using {optimizer!r}")
    return optimizer


def optimizer_params_from_settings(name: str, settings: BaselineSettings) -> dict:
    if name == "gd":
        return {"lr": settings.gd_lr}
    if name == "mgd":
        return {"lr": settings.mgd_lr, "momentum": settings.mgd_momentum}
    if name == "nag":
        return {"lr": settings.nag_lr, "momentum": settings.nag_momentum}
    if name == "gdpp":
        return {"gamma": settings.gdpp_gamma, "step": settings.gdpp_step}
    return {}


def curve_label(name: str, settings: BaselineSettings) -> str:
    """Plot label carrying the hyperparameters of the baseline."""
    params = optimizer_params_from_settings(name, settings)
    if not params:
        return name.upper()
    joined = ", ".join(f"{k}={v:g}" for k, v in params.items())
    return f"{name.upper()} ({joined})"


def run_baseline_on_batch(
    name: str, batch: TaskBatch, steps: int, settings: BaselineSettings
) -> BatchTrajectory:
    optimizer = get_optimizer(name, **optimizer_params_from_settings(name, settings))
    return optimizer.run_on_batch(batch, steps)


def trajectory_frame(trajectory: Trajectory | BatchTrajectory) -> pd.DataFrame:
    """Per-step table (step, loss, log_loss); batch trajectories are averaged."""
    if isinstance(trajectory, BatchTrajectory):
        losses = trajectory.losses.mean(axis=0)
        log_losses = trajectory.mean_log_loss()
    else:
        losses = trajectory.losses
        log_losses = trajectory.log_losses
    return pd.DataFrame(
        {
            "step": np.arange(len(losses)),
            "loss": losses,
            "log_loss": log_losses,
        }
    )
