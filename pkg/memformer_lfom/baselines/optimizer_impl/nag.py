import numpy as np

from memformer_lfom.baselines.base_optimizer import BaseOptimizer
from memformer_lfom.baselines.base_optimizer import OptimizerState
from memformer_lfom.tasks import TaskInstance


class NAGOptimizer(BaseOptimizer):
    """Nesterov: v <- w_k + beta (w_k - w_{k-1}); w_{k+1} <- v - lr grad f(v)."""

    name = "nag"

    def __init__(self, lr: float = 0.03, momentum: float = 0.9):
        super().__init__(lr=lr, momentum=momentum)
        self.lr = lr
        self.momentum = momentum

    def init_state(self, task: TaskInstance) -> OptimizerState:
        state = super().init_state(task)
        state.w_prev = state.w.copy()
        return state

    def do_step(self, state: OptimizerState, task: TaskInstance) -> OptimizerState:
        lookahead = state.w + self.momentum * (state.w - state.w_prev)
        state.v = lookahead
        state.w_prev = state.w
        state.w = lookahead - self.lr * self.gradient(lookahead, task)
        return state


def nag_run(
    task: TaskInstance, steps: int, eta: float = 0.03, beta: float = 0.9
) -> np.ndarray:
    """Iterates ``(steps+1, d)`` with w_{-1} = w_0 = 0."""
    return NAGOptimizer(lr=eta, momentum=beta).run(task, steps).iterates
