import numpy as np

from memformer_lfom.baselines.base_optimizer import BaseOptimizer
from memformer_lfom.baselines.base_optimizer import OptimizerState
from memformer_lfom.tasks import TaskInstance


class MomentumGDOptimizer(BaseOptimizer):
    """Heavy-ball momentum: v <- beta v - lr grad f(w); w <- w + v."""

    name = "mgd"

    def __init__(self, lr: float = 0.005, momentum: float = 0.9):
        super().__init__(lr=lr, momentum=momentum)
        self.lr = lr
        self.momentum = momentum

    def init_state(self, task: TaskInstance) -> OptimizerState:
        state = super().init_state(task)
        state.v = np.zeros(task.d)
        return state

    def do_step(self, state: OptimizerState, task: TaskInstance) -> OptimizerState:
        state.v = self.momentum * state.v - self.lr * self.gradient(state.w, task)
        state.w = state.w + state.v
        return state


def momentum_gd_run(
    task: TaskInstance, steps: int, eta: float = 0.005, beta: float = 0.9
) -> np.ndarray:
    """Iterates ``(steps+1, d)`` of heavy-ball momentum from w_0 = 0."""
    return MomentumGDOptimizer(lr=eta, momentum=beta).run(task, steps).iterates
