import numpy as np

from memformer_lfom.baselines.base_optimizer import BaseOptimizer
from memformer_lfom.baselines.base_optimizer import OptimizerState
from memformer_lfom.tasks import TaskInstance
from memformer_lfom.tasks import empirical_gradient


def precond_gd_step(w: np.ndarray, A: np.ndarray, task: TaskInstance) -> np.ndarray:
    """w' = w - A (1/n) X X^T (w - w*)."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (task.d, task.d):
        raise ValueError(f"preconditioner must be {task.d}x{task.d}, got {A.shape}")
    return np.asarray(w, dtype=np.float64) - A @ empirical_gradient(w, task)


class GDOptimizer(BaseOptimizer):
    """Constant-step gradient descent, optionally with one preconditioner per step."""

    name = "gd"

    def __init__(self, lr: float = 0.03, preconditioners=None):
        super().__init__(lr=lr)
        self.lr = lr
        self.preconditioners = (
            None
            if preconditioners is None
            else [np.asarray(a, dtype=np.float64) for a in preconditioners]
        )

    def do_step(self, state: OptimizerState, task: TaskInstance) -> OptimizerState:
        if self.preconditioners is None:
            a = self.lr * np.eye(task.d)
        else:
            a = self.preconditioners[state.k]
        state.w = precond_gd_step(state.w, a, task)
        return state

    def run(self, task, steps):
        if self.preconditioners is not None and steps > len(self.preconditioners):
            raise ValueError(
                f"{steps} steps requested but only {len(self.preconditioners)} preconditioners given"
            )
        return super().run(task, steps)
