"""Fletcher-Reeves conjugate gradient with exact line search on the quadratic."""

import logging
from dataclasses import dataclass

import numpy as np

from memformer_lfom.baselines.base_optimizer import BaseOptimizer
from memformer_lfom.baselines.base_optimizer import OptimizerState
from memformer_lfom.baselines.base_optimizer import Trajectory
from memformer_lfom.tasks import TaskInstance
from memformer_lfom.tasks import hessian

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-14


@dataclass
class CGDTrajectory(Trajectory):
    # alphas[k], gammas[k], directions[k] are the step size, the deflection used to
    # form s_k, and s_k itself; all zero once the method has stopped.
    alphas: np.ndarray = None
    gammas: np.ndarray = None
    directions: np.ndarray = None
    frozen_at: int | None = None

    @property
    def active_steps(self) -> int:
        return len(self.alphas) if self.frozen_at is None else self.frozen_at


class CGDOptimizer(BaseOptimizer):
    name = "cgd"

    def __init__(self, gradient_tolerance: float = GRADIENT_TOLERANCE):
        super().__init__(gradient_tolerance=gradient_tolerance)
        self.gradient_tolerance = gradient_tolerance

    def init_state(self, task: TaskInstance) -> OptimizerState:
        state = super().init_state(task)
        g = self.gradient(state.w, task)
        state.g_prev = g
        state.s = -g
        state.h = hessian(task)
        return state

    def do_step(self, state: OptimizerState, task: TaskInstance) -> OptimizerState:
        """Line search along s_k, then the Fletcher-Reeves direction update.

        Each call appends ``(alpha_k, gamma_k, s_k)`` to ``state.log``. Once the
        gradient vanishes or the curvature is not positive the iterate is frozen
        and every further record is zero.
        """
        if state.frozen_at is None:
            alpha = self._line_search(state)
            if alpha is None:
                state.frozen_at = state.k
                logger.debug(f"cgd stopped at step {state.k}")
        if state.frozen_at is not None:
            state.log.append((0.0, 0.0, np.zeros(task.d)))
            return state

        state.log.append((alpha, state.deflection, state.s.copy()))
        state.w = state.w + alpha * state.s
        g_new = self.gradient(state.w, task)
        state.deflection = float(g_new @ g_new) / float(state.g_prev @ state.g_prev)
        state.s = -g_new + state.deflection * state.s
        state.g_prev = g_new
        return state

    def _line_search(self, state: OptimizerState) -> float | None:
        g = state.g_prev
        if np.linalg.norm(g) < self.gradient_tolerance:
            return None
        curvature = float(state.s @ state.h @ state.s)
        if curvature <= 0:
            return None
        return -float(g @ state.s) / curvature

    def make_trajectory(self, iterates, predictions, losses, task, state) -> CGDTrajectory:
        steps = len(state.log)
        directions = np.zeros((steps, task.d))
        for k, (_, _, s) in enumerate(state.log):
            directions[k] = s
        return CGDTrajectory(
            iterates=iterates,
            predictions=predictions,
            losses=losses,
            y_query=task.y_query,
            alphas=np.array([a for a, _, _ in state.log], dtype=np.float64),
            gammas=np.array([g for _, g, _ in state.log], dtype=np.float64),
            directions=directions,
            frozen_at=state.frozen_at,
        )


def cgd_run(task: TaskInstance, steps: int) -> CGDTrajectory:
    return CGDOptimizer().run(task, steps)
