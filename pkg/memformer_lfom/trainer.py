"""Meta-training of model parameters with ADAM.

Protocol: one covariance per run, a fresh training batch every
``resample_every`` steps, per-matrix gradient clipping, then ADAM. Each run is
evaluated on a held-out batch from its own covariance (or on its first training
batch for the small-batch experiments).
"""

from __future__ import annotations

import logging
import time
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from tqdm import tqdm

from memformer_lfom.autodiff import backward
from memformer_lfom.cache import RunCache
from memformer_lfom.config.model import SettingsModel
from memformer_lfom.config.model import TrainSettings
from memformer_lfom.const import __version__
from memformer_lfom.exceptions import DivergenceError
from memformer_lfom.exceptions import NonFiniteGradientError
from memformer_lfom.exceptions import TrainingError
from memformer_lfom.model import MemformerParams
from memformer_lfom.model import init_params
from memformer_lfom.model import params_from_document
from memformer_lfom.model import params_to_document
from memformer_lfom.model import predict
from memformer_lfom.tasks import CovarianceSpec
from memformer_lfom.tasks import RandomStreams
from memformer_lfom.tasks import TaskBatch
from memformer_lfom.tasks import icl_objective
from memformer_lfom.tasks import mean_log_loss
from memformer_lfom.tasks import sample_batch
from memformer_lfom.tasks import sample_covariance

logger = logging.getLogger(__name__)


class RunRecord(BaseModel):
    """Outcome of one training run."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    run: int
    seed: int
    train_losses: list[float] = Field(default_factory=list)
    init_log_loss: list[float] = Field(default_factory=list)
    eval_log_loss: list[float] = Field(default_factory=list)
    config: dict = Field(default_factory=dict)
    wall_clock: float = 0.0
    aborted: bool = False
    abort_reason: str | None = None
    checkpoint: dict | None = None

    def params(self) -> MemformerParams:
        if self.checkpoint is None:
            raise ValueError(f"run {self.run} has no checkpoint")
        return params_from_document(self.checkpoint)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: dict[str, np.ndarray]) -> AdamState:
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


@dataclass
class AveragedCurve:
    mean: np.ndarray
    stderr: np.ndarray
    runs: int


def clip_matrix(g: np.ndarray, max_norm: float = 0.01) -> np.ndarray:
    """Rescale ``g`` to Frobenius norm ``max_norm`` if it is longer."""
    norm = float(np.linalg.norm(g))
    if norm > max_norm:
        return g * (max_norm / norm)
    return g


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainSettings,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected ADAM update. Inputs are not modified."""
    t = state.t + 1
    new_params = {}
    new_m = {}
    new_v = {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != {value.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient at ADAM step {t}", parameter=name
            )
        m = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        new_params[name] = value - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v, t=t)


def run_covariance(settings: SettingsModel, streams: RandomStreams, run: int):
    spec = CovarianceSpec.from_settings(
        settings.data.d, settings.data.spectrum_values(), settings.data.isotropic
    )
    return sample_covariance(spec, streams.generator("covariance", run))


def training_batch(
    settings: SettingsModel, streams: RandomStreams, sigma, run: int, block: int
) -> TaskBatch:
    return sample_batch(
        sigma,
        settings.data.n,
        settings.train.batch_size,
        streams,
        "train",
        run=run,
        block=block,
    )


def comparison_batch(settings: SettingsModel, run: int) -> TaskBatch:
    """The batch run ``run`` is evaluated on; baselines use the same one."""
    streams = RandomStreams(settings.basic.seed)
    sigma = run_covariance(settings, streams, run)
    return _comparison_batch(settings, streams, sigma, run)


def _comparison_batch(settings, streams, sigma, run) -> TaskBatch:
    if settings.train.eval_on_train_batch:
        return training_batch(settings, streams, sigma, run, block=0)
    return sample_batch(
        sigma,
        settings.data.n,
        settings.train.eval_batch_size,
        streams,
        "eval",
        run=run,
    )


def evaluate_log_loss(params: MemformerParams, batch: TaskBatch) -> list[float]:
    """Mean log squared query error after each layer, ``L+1`` values."""
    predictions = predict(params, batch.prompts())
    return [float(v) for v in mean_log_loss(predictions, batch.y_query)]


def settings_snapshot(settings: SettingsModel) -> dict:
    return {
        "seed": settings.basic.seed,
        "data": settings.data.model_dump(mode="json"),
        "model": settings.model.model_dump(mode="json"),
        "train": settings.train.model_dump(mode="json", exclude={"workers"}),
    }


def train(settings: SettingsModel, run: int = 0, progress: bool = True) -> RunRecord:
    cfg = settings.train
    start = time.perf_counter()
    streams = RandomStreams(settings.basic.seed)
    sigma = run_covariance(settings, streams, run)
    params = init_params(
        settings.model,
        settings.data.d,
        settings.data.n,
        streams.generator("init", run),
        cfg.init_std,
    )
    eval_batch = _comparison_batch(settings, streams, sigma, run)
    init_curve = evaluate_log_loss(params, eval_batch)

    record = RunRecord(
        run=run,
        seed=settings.basic.seed,
        init_log_loss=init_curve,
        config=settings_snapshot(settings),
    )
    state = AdamState.zeros(params.named_parameters())
    batch = None
    try:
        for step in tqdm(
            range(cfg.steps),
            desc=f"{settings.model.variant} run {run}",
            disable=not progress,
            leave=False,
        ):
            if step % cfg.resample_every == 0:
                batch = training_batch(
                    settings, streams, sigma, run, step // cfg.resample_every
                )
            tape, loss_node = icl_objective(params, batch)
            loss = float(loss_node.value[0, 0])
            record.train_losses.append(loss)
            if not np.isfinite(loss) or loss > cfg.divergence_threshold:
                raise DivergenceError(f"loss {loss:.3e} above threshold", step=step)
            grads = backward(tape, loss_node)
            clipped = {k: clip_matrix(g, cfg.clip_norm) for k, g in grads.items()}
            new_values, state = adam_step(
                params.named_parameters(), clipped, state, cfg
            )
            params = params.from_named(new_values)
    except TrainingError as e:
        logger.warning(f"run {run} aborted: {e}")
        record.aborted = True
        record.abort_reason = str(e)

    if record.aborted:
        record.eval_log_loss = [float("nan")] * len(init_curve)
    else:
        record.eval_log_loss = evaluate_log_loss(params, eval_batch)
    record.checkpoint = params_to_document(params)
    record.wall_clock = time.perf_counter() - start
    logger.info(
        f"{settings.model.variant} run {run}: final eval log-loss "
        f"{record.eval_log_loss[-1]:.4f} ({record.wall_clock:.1f}s)"
    )
    return record


def _train_quietly(settings: SettingsModel, run: int) -> RunRecord:
    return train(settings, run, progress=False)


def run_cache_params(settings: SettingsModel) -> dict:
    params = settings_snapshot(settings)
    params["version"] = __version__
    return params


def train_runs(settings: SettingsModel, progress: bool = True) -> list[RunRecord]:
    """Train ``settings.train.runs`` independent runs, ordered by run index."""
    n_runs = settings.train.runs
    cache = None
    if not settings.basic.ignore_cache:
        try:
            cache = RunCache(run_cache_params(settings))
        except Exception as e:
            logger.warning(f"run cache unavailable, ignore it: {e}")

    records: dict[int, RunRecord] = {}
    if cache is not None:
        for run in range(n_runs):
            try:
                cached = cache.get(run)
            except Exception as e:
                logger.debug(f"try get cache failed, ignore it: {e}")
                cached = None
            if cached is not None:
                records[run] = RunRecord.model_validate_json(cached)
                logger.info(f"{settings.model.variant} run {run}: loaded from cache")

    missing = [run for run in range(n_runs) if run not in records]
    if missing and settings.train.workers > 1:
        with ProcessPoolExecutor(max_workers=settings.train.workers) as pool:
            fresh = list(
                pool.map(_train_quietly, [settings] * len(missing), missing)
            )
    else:
        fresh = [train(settings, run, progress=progress) for run in missing]

    for record in fresh:
        records[record.run] = record
        if cache is not None and not record.aborted:
            cache.set(record.run, record.model_dump_json())
    return [records[run] for run in range(n_runs)]


def average_runs(curves: Sequence[RunRecord | Sequence[float]]) -> AveragedCurve:
    """Pointwise mean and standard error of per-layer curves across runs.

    Aborted runs are left out.
    """
    if not curves:
        raise ValueError("average_runs needs at least one curve")
    values = []
    for curve in curves:
        if isinstance(curve, RunRecord):
            if curve.aborted:
                logger.warning(f"run {curve.run} aborted, left out of the average")
                continue
            curve = curve.eval_log_loss
        values.append(np.asarray(curve, dtype=np.float64))
    if not values:
        raise TrainingError("every run was aborted")
    lengths = {len(v) for v in values}
    if len(lengths) != 1:
        raise ValueError(f"curves have mismatched lengths: {sorted(lengths)}")
    stacked = np.stack(values)
    runs = stacked.shape[0]
    if runs > 1:
        stderr = stacked.std(axis=0, ddof=1) / np.sqrt(runs)
    else:
        stderr = np.zeros(stacked.shape[1])
    return AveragedCurve(mean=stacked.mean(axis=0), stderr=stderr, runs=runs)
