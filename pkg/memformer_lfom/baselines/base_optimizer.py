import logging
from abc import ABC
from abc import abstractmethod
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from memformer_lfom.tasks import TaskBatch
from memformer_lfom.tasks import TaskInstance
from memformer_lfom.tasks import empirical_gradient
from memformer_lfom.tasks import log_squared_error

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    w: np.ndarray
    k: int = 0
    v: np.ndarray | None = None
    w_prev: np.ndarray | None = None
    s: np.ndarray | None = None
    g_prev: np.ndarray | None = None
    deflection: float = 0.0
    frozen_at: int | None = None
    h: np.ndarray | None = None
    # per-step records of optimizers that log more than the iterate
    log: list = field(default_factory=list)
    # GD++ works on a transformed copy of the problem
    X: np.ndarray | None = None
    x_query: np.ndarray | None = None


@dataclass
class Trajectory:
    iterates: np.ndarray  # (steps+1, d)
    predictions: np.ndarray  # (steps+1,)
    losses: np.ndarray  # (steps+1,)
    y_query: float

    @property
    def log_losses(self) -> np.ndarray:
        return log_squared_error(self.predictions, self.y_query)


@dataclass
class BatchTrajectory:
    iterates: np.ndarray  # (B, steps+1, d)
    predictions: np.ndarray  # (B, steps+1)
    losses: np.ndarray  # (B, steps+1)
    y_query: np.ndarray  # (B,)
    extras: list = field(default_factory=list)

    def mean_log_loss(self) -> np.ndarray:
        return log_squared_error(self.predictions, self.y_query[:, None]).mean(axis=0)


class BaseOptimizer(ABC):
    """Base class of the per-instance optimizers on R(w) = (1/2n)|X^T(w - w*)|^2.

    Subclasses implement ``do_step``; ``run`` records iterates, query predictions
    ``<x_query, w_k>`` and losses, starting from ``w_0 = 0``.
    """

    name = "base"

    def __init__(self, **params):
        self.params = params

    def init_state(self, task: TaskInstance) -> OptimizerState:
        return OptimizerState(w=np.zeros(task.d))

    @abstractmethod
    def do_step(self, state: OptimizerState, task: TaskInstance) -> OptimizerState:
        """Advance one iteration, override this method"""
        raise NotImplementedError

    def gradient(self, w: np.ndarray, task: TaskInstance) -> np.ndarray:
        return empirical_gradient(w, task)

    def predict(self, state: OptimizerState, task: TaskInstance) -> float:
        return float(task.x_query @ state.w)

    def loss(self, state: OptimizerState, task: TaskInstance) -> float:
        residual = task.X.T @ state.w - task.y
        return 0.5 * float(residual @ residual) / task.n

    def run(self, task: TaskInstance, steps: int) -> Trajectory:
        if steps < 0:
            raise ValueError(f"steps must be non-negative, got {steps}")
        state = self.init_state(task)
        iterates = [state.w.copy()]
        predictions = [self.predict(state, task)]
        losses = [self.loss(state, task)]
        for _ in range(steps):
            state = self.do_step(state, task)
            state.k += 1
            iterates.append(state.w.copy())
            predictions.append(self.predict(state, task))
            losses.append(self.loss(state, task))
        return self.make_trajectory(
            np.array(iterates), np.array(predictions), np.array(losses), task, state
        )

    def make_trajectory(self, iterates, predictions, losses, task, state) -> Trajectory:
        return Trajectory(
            iterates=iterates,
            predictions=predictions,
            losses=losses,
            y_query=task.y_query,
        )

    def run_on_batch(self, batch: TaskBatch, steps: int) -> BatchTrajectory:
        """Run independently on every task, in batch order."""
        runs = [self.run(task, steps) for task in batch]
        logger.debug(f"{self.name}: {len(runs)} instances, {steps} steps")
        return BatchTrajectory(
            iterates=np.stack([r.iterates for r in runs]),
            predictions=np.stack([r.predictions for r in runs]),
            losses=np.stack([r.losses for r in runs]),
            y_query=batch.y_query.copy(),
            extras=runs,
        )

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.__class__.__name__}({params})"
