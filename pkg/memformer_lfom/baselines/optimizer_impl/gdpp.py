"""GD++: gradient steps interleaved with the covariate transform X <- (I - gamma H) X.

The transform is a one-term truncated Neumann series of H^{-1}. It is applied to
the in-context covariates and the query alike, and the current iterate is mapped
into the new coordinates so the query prediction is unchanged by the transform
itself. With gamma = 0 the method is preconditioned GD.

Degenerate case: if the covariate rows are orthonormal in the sense H = I and
gamma = 1, the transform sends X to 0 and is not invertible.
"""

import numpy as np

from memformer_lfom.baselines.base_optimizer import BaseOptimizer
from memformer_lfom.baselines.base_optimizer import OptimizerState
from memformer_lfom.tasks import TaskInstance


def covariate_transform(X: np.ndarray, gamma: float) -> np.ndarray:
    """(I - gamma (1/n) X X^T), the matrix applied to every covariate."""
    d, n = X.shape
    return np.eye(d) - gamma * (X @ X.T) / n


class GDPlusPlusOptimizer(BaseOptimizer):
    name = "gdpp"

    def __init__(self, gamma=0.1, step=0.5):
        super().__init__(gamma=gamma, step=step)
        self.gamma = gamma
        self.step = step

    def _schedule(self, values, k: int):
        if np.ndim(values) == 0:
            return float(values)
        return values[k]

    def _preconditioner(self, k: int, d: int) -> np.ndarray:
        a = np.asarray(self._schedule(self.step, k), dtype=np.float64)
        return a * np.eye(d) if a.ndim == 0 else a

    def init_state(self, task: TaskInstance) -> OptimizerState:
        state = super().init_state(task)
        state.X = task.X.copy()
        state.x_query = task.x_query.copy()
        return state

    def do_step(self, state: OptimizerState, task: TaskInstance) -> OptimizerState:
        gamma = self._schedule(self.gamma, state.k)
        if gamma != 0.0:
            transform = covariate_transform(state.X, gamma)
            state.X = transform @ state.X
            state.x_query = transform @ state.x_query
            state.w = np.linalg.solve(transform, state.w)
        residual = state.X.T @ state.w - task.y
        g = state.X @ residual / task.n
        state.w = state.w - self._preconditioner(state.k, task.d) @ g
        return state

    def predict(self, state: OptimizerState, task: TaskInstance) -> float:
        return float(state.x_query @ state.w)

    def loss(self, state: OptimizerState, task: TaskInstance) -> float:
        residual = state.X.T @ state.w - task.y
        return 0.5 * float(residual @ residual) / task.n


def gdpp_run(task: TaskInstance, steps: int, gammas, preconditioners) -> np.ndarray:
    """Iterates ``(steps+1, d)`` for per-step gammas and preconditioners A_l."""
    return GDPlusPlusOptimizer(gamma=gammas, step=preconditioners).run(
        task, steps
    ).iterates
