"""Executable equivalence checks between the models and the optimizers they emulate.

Sign convention pinned here: the readout is ``-Z_L[d, n]`` and labels are
``+<x, w*>``, so a layer-l prediction equals ``+<x_query, w_l>`` for the w-space
iterate ``w_l`` of the emulated method. With ``Q = -[[A, 0], [0, 0]]`` the
effective step is ``w <- w - A^T grad R(w)``.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import computed_field

from memformer_lfom.autodiff import backward
from memformer_lfom.autodiff import numerical_gradient
from memformer_lfom.autodiff import relative_error
from memformer_lfom.baselines import cgd_run
from memformer_lfom.config.model import ModelSettings
from memformer_lfom.config.model import SettingsModel
from memformer_lfom.model import MemformerParams
from memformer_lfom.model import init_params
from memformer_lfom.model import predict
from memformer_lfom.model import zero_params
from memformer_lfom.tasks import CovarianceSpec
from memformer_lfom.tasks import RandomStreams
from memformer_lfom.tasks import TaskBatch
from memformer_lfom.tasks import TaskInstance
from memformer_lfom.tasks import empirical_gradient
from memformer_lfom.tasks import empirical_loss
from memformer_lfom.tasks import hessian
from memformer_lfom.tasks import icl_objective
from memformer_lfom.tasks import sample_covariance
from memformer_lfom.tasks import sample_task

logger = logging.getLogger(__name__)

LEMMA1_TOLERANCE = 1e-10
PROP1_TOLERANCE = 1e-8
PROP2_TOLERANCE = 1e-10
GRADCHECK_TOLERANCE = 1e-5
CGD_TERMINATION_TOLERANCE = 1e-12
CGD_CONJUGACY_TOLERANCE = 1e-6

GRADCHECK_VARIANTS = {
    "linear_tf": ModelSettings(variant="linear_tf", n_layers=2),
    "linear_tf_2heads": ModelSettings(variant="linear_tf", n_layers=2, heads=2),
    "memformer_cgd": ModelSettings(variant="memformer_cgd", n_layers=2),
    "memformer_lfom": ModelSettings(variant="memformer_lfom", n_layers=2),
    "memformer_lfom_untied": ModelSettings(
        variant="memformer_lfom", n_layers=2, untie_gamma=True
    ),
    "memformer_lfom_scalar": ModelSettings(
        variant="memformer_lfom",
        n_layers=2,
        scalar_gamma=True,
        scalar_preconditioner=True,
    ),
    "memformer_lfom_gdpp": ModelSettings(variant="memformer_lfom_gdpp", n_layers=2),
}


class EquivalenceReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    name: str
    max_deviation: float
    per_layer: list[float] = Field(default_factory=list)
    labels: list[str] | None = None
    instance: str = ""
    tolerance: float

    @computed_field
    @property
    def passed(self) -> bool:
        return bool(self.max_deviation < self.tolerance)

    @classmethod
    def from_deviations(
        cls,
        name: str,
        deviations: Sequence[float],
        tolerance: float,
        instance: str = "",
        labels: Sequence[str] | None = None,
    ) -> EquivalenceReport:
        deviations = [float(v) for v in deviations]
        worst = max(deviations) if deviations else 0.0
        if any(np.isnan(deviations)):
            worst = float("inf")
        return cls(
            name=name,
            max_deviation=worst,
            per_layer=deviations,
            labels=list(labels) if labels is not None else None,
            instance=instance,
            tolerance=tolerance,
        )

    @classmethod
    def aggregate(
        cls, name: str, reports: Sequence[EquivalenceReport], instance: str = ""
    ) -> EquivalenceReport:
        """Worst case over several reports of the same check."""
        per_layer = np.max(np.array([r.per_layer for r in reports]), axis=0)
        return cls.from_deviations(
            name,
            per_layer,
            reports[0].tolerance,
            instance=instance or f"{len(reports)} instances",
            labels=reports[0].labels,
        )


class VerificationSummary(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    reports: list[EquivalenceReport]

    @computed_field
    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def _as_batch(task: TaskInstance | TaskBatch) -> TaskBatch:
    if isinstance(task, TaskInstance):
        return TaskBatch.from_tasks([task])
    return task


def lemma1_oracle(task: TaskInstance | TaskBatch, A_list) -> np.ndarray:
    """Query predictions of the GD recursion a linear transformer emulates.

    theta_0 = 0, theta_{k+1} = theta_k - (1/n) A_k^T X X^T (theta_k + w*),
    prediction_k = -<theta_k, x_query>. Returns ``(L+1,)`` for one task and
    ``(B, L+1)`` for a batch. ``A_k`` is the sum of the layer's head blocks.
    """
    single = isinstance(task, TaskInstance)
    batch = _as_batch(task)
    xxt = batch.X @ np.swapaxes(batch.X, -1, -2) / batch.n
    theta = np.zeros_like(batch.w_star)
    predictions = [-np.einsum("bd,bd->b", theta, batch.x_query)]
    for a in A_list:
        a = np.asarray(a, dtype=np.float64)
        step = np.einsum("bij,bj->bi", xxt, theta + batch.w_star)
        theta = theta - step @ a
        predictions.append(-np.einsum("bd,bd->b", theta, batch.x_query))
    out = np.stack(predictions, axis=1)
    return out[0] if single else out


def layer_preconditioners(params: MemformerParams) -> list[np.ndarray]:
    """Per-layer sum of head preconditioners, expanded to d x d."""
    out = []
    for l in range(params.n_layers):
        total = np.zeros((params.d, params.d))
        for h in range(params.config.heads):
            a = params.values[f"layers.{l}.heads.{h}.A"]
            total = total + (a[0, 0] * np.eye(params.d) if a.shape == (1, 1) else a)
        out.append(total)
    return out


def _verify_task(streams: RandomStreams, check: int, index: int, d: int, n: int):
    rng = streams.generator("verify", run=check, index=index)
    spec = CovarianceSpec(d=d, diag=tuple(np.linspace(1.0, 0.25, d)))
    sigma = sample_covariance(spec, rng)
    return sample_task(sigma, n, rng)


def _verify_batch(streams, check: int, size: int, d: int, n: int) -> TaskBatch:
    return TaskBatch.from_tasks(
        [_verify_task(streams, check, i, d, n) for i in range(size)]
    )


def lemma1_check(
    seed: int = 0,
    instances: int = 1000,
    d: int = 5,
    n: int = 20,
    n_layers: int = 3,
    heads: int = 1,
) -> EquivalenceReport:
    """Linear transformer vs. preconditioned GD on random tasks and random A."""
    streams = RandomStreams(seed)
    batch = _verify_batch(streams, 0, instances, d, n)
    config = ModelSettings(variant="linear_tf", n_layers=n_layers, heads=heads)
    params = init_params(config, d, n, streams.generator("init", run=0), 0.3)
    model = predict(params, batch.prompts())
    oracle = lemma1_oracle(batch, layer_preconditioners(params))
    deviations = np.max(np.abs(model - oracle), axis=0)
    return EquivalenceReport.from_deviations(
        "lemma1",
        deviations,
        LEMMA1_TOLERANCE,
        instance=f"{instances} tasks, d={d}, n={n}, L={n_layers}, heads={heads}",
    )


def cgd_memformer_params(
    trajectory, d: int, n: int, n_layers: int
) -> MemformerParams:
    """memformer_cgd parameters with A = I and CGD's own step sizes and deflections."""
    config = ModelSettings(variant="memformer_cgd", n_layers=n_layers)
    values = {}
    for l in range(n_layers):
        values[f"layers.{l}.heads.0.A"] = np.eye(d)
        values[f"layers.{l}.heads.0.B"] = np.zeros((d, d))
        values[f"layers.{l}.alpha"] = np.full((1, 1), trajectory.alphas[l])
        values[f"layers.{l}.gamma"] = np.full((1, 1), trajectory.gammas[l])
    return zero_params(config, d, n).from_named(values)


def prop1_check(task: TaskInstance, n_layers: int) -> EquivalenceReport:
    """Dynamic-memory Memformer with per-instance CGD coefficients vs. CGD."""
    trajectory = cgd_run(task, n_layers)
    params = cgd_memformer_params(trajectory, task.d, task.n, n_layers)
    model = predict(params, _as_batch(task).prompts())[0]
    return EquivalenceReport.from_deviations(
        "prop1",
        np.abs(model - trajectory.predictions),
        PROP1_TOLERANCE,
        instance=f"d={task.d}, n={task.n}, L={n_layers}",
    )


def _gate_coefficients(c, n_layers: int) -> np.ndarray:
    """``c`` as an (L, L) table: row l holds Gamma_j^l for j <= l."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 1:
        return np.tile(c, (n_layers, 1))
    return c


def lfom_memformer_params(c, a, d: int, n: int, n_layers: int) -> MemformerParams:
    """Scalar-gate, scalar-preconditioner LFOM Memformer with given coefficients.

    ``c`` is either one gate per register (tied across layers) or an ``(L, L)``
    table of untied gates.
    """
    tied = np.ndim(c) == 1
    config = ModelSettings(
        variant="memformer_lfom",
        n_layers=n_layers,
        scalar_gamma=True,
        scalar_preconditioner=True,
        untie_gamma=not tied,
    )
    table = _gate_coefficients(c, n_layers)
    values = {}
    for l in range(n_layers):
        values[f"layers.{l}.heads.0.A"] = np.full((1, 1), float(a[l]))
        values[f"layers.{l}.heads.0.B"] = np.zeros((d, d))
        for j in range(l + 1):
            name = f"gates.{j}" if tied else f"layers.{l}.gates.{j}"
            values[name] = np.full((1, 1), table[l, j])
    return zero_params(config, d, n).from_named(values)


def lfom_oracle(task: TaskInstance, c, a, n_layers: int) -> np.ndarray:
    """w-space LFOM w_{k+1} = w_0 + sum_{j<=k} Lambda_j^k grad R(w_j).

    Lambda_j^k = -a_j sum_{l=j..k} Gamma_j^l, which for tied gates is
    -(k - j + 1) c_j a_j. Returns the query predictions ``<x_query, w_k>``.
    """
    table = _gate_coefficients(c, n_layers)
    w0 = np.zeros(task.d)
    iterates = [w0]
    grads = []
    for k in range(n_layers):
        grads.append(empirical_gradient(iterates[-1], task))
        w_next = w0.copy()
        for j in range(k + 1):
            lam = -float(a[j]) * float(np.sum(table[j : k + 1, j]))
            w_next = w_next + lam * grads[j]
        iterates.append(w_next)
    return np.array(iterates) @ task.x_query


def prop2_check(task: TaskInstance, c, a, n_layers: int) -> EquivalenceReport:
    """Cumulative Hadamard-memory Memformer (scalar gates) vs. the w-space LFOM."""
    params = lfom_memformer_params(c, a, task.d, task.n, n_layers)
    model = predict(params, _as_batch(task).prompts())[0]
    oracle = lfom_oracle(task, c, a, n_layers)
    return EquivalenceReport.from_deviations(
        "prop2",
        np.abs(model - oracle),
        PROP2_TOLERANCE,
        instance=f"d={task.d}, n={task.n}, L={n_layers}",
    )


def cgd_termination_check(task: TaskInstance) -> tuple[EquivalenceReport, EquivalenceReport]:
    """Finite termination after d steps and H-conjugacy of the search directions."""
    trajectory = cgd_run(task, task.d)
    r0 = empirical_loss(trajectory.iterates[0], task)
    rd = empirical_loss(trajectory.iterates[-1], task)
    ratio = rd / r0 if r0 > 0 else 0.0

    h = hessian(task)
    s = trajectory.directions[: trajectory.active_steps]
    gram = s @ h @ s.T
    norms = np.sqrt(np.clip(np.diag(gram), 1e-300, None))
    relative = np.abs(gram) / np.outer(norms, norms)
    np.fill_diagonal(relative, 0.0)
    worst = float(relative.max()) if relative.size else 0.0
    instance = f"d={task.d}, n={task.n}"
    return (
        EquivalenceReport.from_deviations(
            "cgd_termination", [ratio], CGD_TERMINATION_TOLERANCE, instance=instance
        ),
        EquivalenceReport.from_deviations(
            "cgd_conjugacy", [worst], CGD_CONJUGACY_TOLERANCE, instance=instance
        ),
    )


def _perturb_for_gradcheck(params: MemformerParams, rng) -> MemformerParams:
    """Move every matrix away from its degenerate init (B = 0, gamma = 0)."""
    updates = {}
    for name in params.trainable:
        value = params.values[name]
        updates[name] = value + 0.3 * rng.standard_normal(value.shape)
    return params.from_named(updates)


def grad_check_full(
    variant: str | ModelSettings,
    d: int = 2,
    n: int = 3,
    seed: int = 0,
) -> EquivalenceReport:
    """Tape gradients of the single-instance objective vs. central differences."""
    config = GRADCHECK_VARIANTS[variant] if isinstance(variant, str) else variant
    name = variant if isinstance(variant, str) else variant.variant
    streams = RandomStreams(seed)
    task = _verify_task(streams, 4, 0, d, n)
    batch = _as_batch(task)
    rng = streams.generator("init", run=4)
    params = _perturb_for_gradcheck(init_params(config, d, n, rng, 0.5), rng)

    tape, loss = icl_objective(params, batch)
    analytic = backward(tape, loss)

    labels = []
    deviations = []
    for param_name in sorted(params.trainable):

        def objective(value, param_name=param_name):
            moved = params.from_named({param_name: value})
            _, moved_loss = icl_objective(moved, batch)
            return float(moved_loss.value[0, 0])

        numeric = numerical_gradient(objective, params.values[param_name])
        labels.append(param_name)
        deviations.append(relative_error(analytic[param_name], numeric))
    return EquivalenceReport.from_deviations(
        f"gradcheck[{name}]",
        deviations,
        GRADCHECK_TOLERANCE,
        instance=f"d={d}, n={n}, L={config.n_layers}",
        labels=labels,
    )


def run_verification(
    seed: int = 0,
    seeds: int = 100,
    lemma_instances: int = 1000,
    d: int = 5,
    n: int = 20,
    n_layers: int = 3,
) -> VerificationSummary:
    streams = RandomStreams(seed)
    reports = [lemma1_check(seed, lemma_instances, d, n, n_layers)]
    logger.info(f"lemma1: max deviation {reports[-1].max_deviation:.3e}")

    prop1 = [
        prop1_check(_verify_task(streams, 1, i, d, n), n_layers) for i in range(seeds)
    ]
    reports.append(EquivalenceReport.aggregate("prop1", prop1))
    logger.info(f"prop1: max deviation {reports[-1].max_deviation:.3e}")

    prop2 = []
    for i in range(seeds):
        task = _verify_task(streams, 2, i, d, n)
        rng = streams.generator("verify", run=2, block=1, index=i)
        c = rng.uniform(-1.0, 1.0, n_layers)
        a = rng.uniform(0.0, 1.0, n_layers)
        prop2.append(prop2_check(task, c, a, n_layers))
    reports.append(EquivalenceReport.aggregate("prop2", prop2))
    logger.info(f"prop2: max deviation {reports[-1].max_deviation:.3e}")

    termination = []
    conjugacy = []
    for i in range(seeds):
        t, c = cgd_termination_check(_verify_task(streams, 3, i, d, n))
        termination.append(t)
        conjugacy.append(c)
    reports.append(EquivalenceReport.aggregate("cgd_termination", termination))
    reports.append(EquivalenceReport.aggregate("cgd_conjugacy", conjugacy))

    for variant in GRADCHECK_VARIANTS:
        reports.append(grad_check_full(variant, seed=seed))
        logger.info(f"{reports[-1].name}: max rel. error {reports[-1].max_deviation:.3e}")

    return VerificationSummary(reports=reports)


def run_verification_from_settings(settings: SettingsModel) -> VerificationSummary:
    return run_verification(
        seed=settings.basic.seed,
        seeds=settings.verify.verify_seeds,
        lemma_instances=settings.verify.lemma_instances,
        d=settings.data.d,
        n=settings.data.n,
        n_layers=settings.model.n_layers,
    )
