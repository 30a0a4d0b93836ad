"""Random linear-regression tasks, prompt matrices and in-context losses.

Index convention: the prompt ``Z`` is ``(d+1) x (n+1)`` and 0-based, so the
1-based entry ``(d+1, n+1)`` (the unknown response) is ``Z[d, n]``.
Covariates are stored as columns, ``X`` is ``d x n``.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from memformer_lfom.autodiff import Node
from memformer_lfom.autodiff import Tape
from memformer_lfom.autodiff import as_matrix
from memformer_lfom.autodiff import entry
from memformer_lfom.autodiff import mean
from memformer_lfom.autodiff import scale
from memformer_lfom.autodiff import square
from memformer_lfom.autodiff import sub
from memformer_lfom.exceptions import NotPositiveDefiniteError

logger = logging.getLogger(__name__)

PD_TOLERANCE = 1e-12

# Fixed stream ids, never reorder.
STREAM_PURPOSES = {
    "covariance": 0,
    "train": 1,
    "eval": 2,
    "init": 3,
    "verify": 4,
}


class RandomStreams:
    """Named, independent numpy streams derived from one integer seed.

    Every stream is addressed by ``(purpose, run, block, index)``. The task at
    batch index ``i`` of resampling block ``b`` in run ``r`` is therefore the same
    no matter how large the batch is or in which order tasks are generated.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = seed

    def generator(
        self, purpose: str, run: int = 0, block: int = 0, index: int = 0
    ) -> np.random.Generator:
        try:
            purpose_id = STREAM_PURPOSES[purpose]
        except KeyError:
            raise ValueError(f"unknown stream purpose: {purpose}") from None
        sequence = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(purpose_id, run, block, index)
        )
        return np.random.default_rng(sequence)


@dataclass(frozen=True)
class CovarianceSpec:
    d: int
    diag: tuple[float, ...]
    isotropic: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")
        if len(self.diag) != self.d:
            raise ValueError(
                f"spectrum has {len(self.diag)} entries, expected d={self.d}"
            )
        if any(not (v > 0) for v in self.diag):
            raise ValueError(f"spectrum entries must be positive: {self.diag}")

    @classmethod
    def from_settings(cls, d: int, spectrum: Sequence[float], isotropic: bool):
        if isotropic:
            return cls(d=d, diag=(1.0,) * d, isotropic=True)
        return cls(d=d, diag=tuple(float(v) for v in spectrum), isotropic=False)


def haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random orthogonal matrix (QR of a Gaussian, sign-corrected)."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def sample_covariance(spec: CovarianceSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.isotropic:
        return np.eye(spec.d)
    u = haar_orthogonal(spec.d, rng)
    sigma = u.T @ np.diag(spec.diag) @ u
    return 0.5 * (sigma + sigma.T)


def _symmetric_roots(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (Sigma^{1/2}, Sigma^{-1/2}) after checking positive definiteness."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise NotPositiveDefiniteError(f"covariance must be square, got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12):
        raise NotPositiveDefiniteError("covariance is not symmetric")
    eigenvalues, eigenvectors = np.linalg.eigh(sigma)
    if eigenvalues.min() <= PD_TOLERANCE:
        raise NotPositiveDefiniteError(
            f"smallest eigenvalue {eigenvalues.min():.3e} <= {PD_TOLERANCE}"
        )
    root = eigenvectors @ np.diag(np.sqrt(eigenvalues)) @ eigenvectors.T
    inv_root = eigenvectors @ np.diag(1.0 / np.sqrt(eigenvalues)) @ eigenvectors.T
    return root, inv_root


@dataclass(frozen=True)
class TaskInstance:
    X: np.ndarray  # (d, n)
    y: np.ndarray  # (n,)
    w_star: np.ndarray  # (d,)
    x_query: np.ndarray  # (d,)
    y_query: float
    sigma: np.ndarray  # (d, d)

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_parts(cls, X, w_star, x_query, sigma=None) -> TaskInstance:
        """Build a task from covariates and a ground truth, computing the labels."""
        X = as_matrix(X, "X")
        w_star = np.array(w_star, dtype=np.float64).reshape(-1)
        x_query = np.array(x_query, dtype=np.float64).reshape(-1)
        if sigma is None:
            sigma = np.eye(X.shape[0])
        return cls(
            X=X,
            y=w_star @ X,
            w_star=w_star,
            x_query=x_query,
            y_query=float(x_query @ w_star),
            sigma=np.asarray(sigma, dtype=np.float64),
        )


def _draw_task(
    root: np.ndarray, inv_root: np.ndarray, sigma: np.ndarray, n: int, rng
) -> TaskInstance:
    d = root.shape[0]
    covariates = root @ rng.standard_normal((d, n + 1))
    w_star = inv_root @ rng.standard_normal(d)
    X = covariates[:, :n].copy()
    x_query = covariates[:, n].copy()
    return TaskInstance(
        X=X,
        y=w_star @ X,
        w_star=w_star,
        x_query=x_query,
        y_query=float(x_query @ w_star),
        sigma=sigma,
    )


def sample_task(sigma: np.ndarray, n: int, rng: np.random.Generator) -> TaskInstance:
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    root, inv_root = _symmetric_roots(sigma)
    return _draw_task(root, inv_root, np.asarray(sigma, dtype=np.float64), n, rng)


@dataclass(frozen=True)
class TaskBatch:
    """Tasks stacked along a leading batch axis."""

    X: np.ndarray  # (B, d, n)
    y: np.ndarray  # (B, n)
    w_star: np.ndarray  # (B, d)
    x_query: np.ndarray  # (B, d)
    y_query: np.ndarray  # (B,)
    sigma: np.ndarray  # (B, d, d)

    @classmethod
    def from_tasks(cls, tasks: Sequence[TaskInstance]) -> TaskBatch:
        if not tasks:
            raise ValueError("a task batch needs at least one task")
        return cls(
            X=np.stack([t.X for t in tasks]),
            y=np.stack([t.y for t in tasks]),
            w_star=np.stack([t.w_star for t in tasks]),
            x_query=np.stack([t.x_query for t in tasks]),
            y_query=np.array([t.y_query for t in tasks]),
            sigma=np.stack([t.sigma for t in tasks]),
        )

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i: int) -> TaskInstance:
        return TaskInstance(
            X=self.X[i],
            y=self.y[i],
            w_star=self.w_star[i],
            x_query=self.x_query[i],
            y_query=float(self.y_query[i]),
            sigma=self.sigma[i],
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[2]

    def prompts(self) -> np.ndarray:
        """Stacked prompt matrices, shape ``(B, d+1, n+1)``."""
        batch, d, n = self.X.shape
        z = np.zeros((batch, d + 1, n + 1))
        z[:, :d, :n] = self.X
        z[:, d, :n] = self.y
        z[:, :d, n] = self.x_query
        return z


def sample_batch(
    sigma: np.ndarray,
    n: int,
    size: int,
    streams: RandomStreams,
    purpose: str,
    run: int = 0,
    block: int = 0,
) -> TaskBatch:
    """Draw ``size`` tasks, task ``i`` from its own substream."""
    if size < 1:
        raise ValueError(f"batch size must be at least 1, got {size}")
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    root, inv_root = _symmetric_roots(sigma)
    sigma = np.asarray(sigma, dtype=np.float64)
    tasks = [
        _draw_task(
            root, inv_root, sigma, n, streams.generator(purpose, run, block, i)
        )
        for i in range(size)
    ]
    logger.debug(f"sampled {size} {purpose} tasks (run {run}, block {block})")
    return TaskBatch.from_tasks(tasks)


def build_prompt(task: TaskInstance) -> np.ndarray:
    d, n = task.d, task.n
    z = np.zeros((d + 1, n + 1))
    z[:d, :n] = task.X
    z[d, :n] = task.y
    z[:d, n] = task.x_query
    return z


def hessian(task: TaskInstance) -> np.ndarray:
    return task.X @ task.X.T / task.n


def empirical_loss(w: np.ndarray, task: TaskInstance) -> float:
    """R(w) = (1/2n) (w - w*)^T X X^T (w - w*)."""
    residual = task.X.T @ (np.asarray(w, dtype=np.float64) - task.w_star)
    return 0.5 * float(residual @ residual) / task.n


def empirical_gradient(w: np.ndarray, task: TaskInstance) -> np.ndarray:
    diff = np.asarray(w, dtype=np.float64) - task.w_star
    return task.X @ (task.X.T @ diff) / task.n


def log_squared_error(predictions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Natural log of the squared error, floored at the smallest positive double."""
    err = (np.asarray(predictions) - np.asarray(targets)) ** 2
    return np.log(np.maximum(err, np.finfo(np.float64).tiny))


def mean_log_loss(predictions: np.ndarray, y_query: np.ndarray) -> np.ndarray:
    """Per-layer mean log-loss for predictions of shape ``(B, L+1)``."""
    return log_squared_error(predictions, np.asarray(y_query)[:, None]).mean(axis=0)


def icl_objective(params, batch: TaskBatch) -> tuple[Tape, Node]:
    """Record the batch-mean squared query error of ``params`` on a fresh tape.

    Returns the tape and the 1x1 loss node, ready for :func:`backward`.
    """
    from memformer_lfom.model.forward import forward

    if len(batch) == 0:
        raise ValueError("icl_objective needs a non-empty batch")
    tape = Tape()
    bound = params.bind(tape)
    z0 = tape.constant(batch.prompts(), "Z0")
    _, per_layer_z = forward(z0, bound)
    d, n = batch.d, batch.n
    prediction = scale(-1.0, entry(per_layer_z[-1], d, n))
    target = tape.constant(batch.y_query.reshape(-1, 1, 1), "y_query")
    loss = mean(square(sub(prediction, target)))
    return tape, loss


def save_batch(path: Path, batch: TaskBatch) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp = path.with_name(path.name + ".tmp.npz")
    np.savez(
        temp,
        X=batch.X,
        y=batch.y,
        w_star=batch.w_star,
        x_query=batch.x_query,
        y_query=batch.y_query,
        sigma=batch.sigma,
    )
    temp.replace(path)
    return path


def load_batch(path: Path) -> TaskBatch:
    with np.load(Path(path)) as data:
        return TaskBatch(
            X=data["X"],
            y=data["y"],
            w_star=data["w_star"],
            x_query=data["x_query"],
            y_query=data["y_query"],
            sigma=data["sigma"],
        )
