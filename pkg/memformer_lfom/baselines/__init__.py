from memformer_lfom.baselines.base_optimizer import BaseOptimizer
from memformer_lfom.baselines.base_optimizer import BatchTrajectory
from memformer_lfom.baselines.base_optimizer import OptimizerState
from memformer_lfom.baselines.base_optimizer import Trajectory
from memformer_lfom.baselines.optimizer_impl.cgd import CGDTrajectory
from memformer_lfom.baselines.optimizer_impl.cgd import cgd_run
from memformer_lfom.baselines.optimizer_impl.gd import precond_gd_step
from memformer_lfom.baselines.optimizer_impl.gdpp import covariate_transform
from memformer_lfom.baselines.optimizer_impl.gdpp import gdpp_run
from memformer_lfom.baselines.optimizer_impl.mgd import momentum_gd_run
from memformer_lfom.baselines.optimizer_impl.nag import nag_run
from memformer_lfom.baselines.utils import OPTIMIZER_METADATA
from memformer_lfom.baselines.utils import OPTIMIZER_METADATA_MAP
from memformer_lfom.baselines.utils import curve_label
from memformer_lfom.baselines.utils import get_optimizer
from memformer_lfom.baselines.utils import run_baseline_on_batch
from memformer_lfom.baselines.utils import trajectory_frame

__all__ = [
    "BaseOptimizer",
    "BatchTrajectory",
    "OptimizerState",
    "Trajectory",
    "CGDTrajectory",
    "OPTIMIZER_METADATA",
    "OPTIMIZER_METADATA_MAP",
    "get_optimizer",
    "run_baseline_on_batch",
    "curve_label",
    "trajectory_frame",
    "precond_gd_step",
    "cgd_run",
    "momentum_gd_run",
    "nag_run",
    "gdpp_run",
    "covariate_transform",
]
