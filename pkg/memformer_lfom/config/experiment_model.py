"""Figure presets.

Every preset fixes the data regime and the curves of one figure; everything it
does not name (seed, steps, lr, runs, d, n, L, ...) comes from the resolved
settings, whose defaults are the published protocol.
"""

from __future__ import annotations

import logging

from pydantic import BaseModel
from pydantic import Field

from memformer_lfom.config.model import SettingsModel

log = logging.getLogger(__name__)


class CurveSpec(BaseModel):
    """One line of a figure: a trained model or a per-instance baseline."""

    label: str = Field(description="Curve name written to the CSV and the legend")
    variant: str | None = Field(default=None, description="Model variant to train")
    baseline: str | None = Field(default=None, description="Baseline to run")
    heads: int | None = Field(default=None, description="Attention heads override")
    scalar_gamma: bool = Field(default=False, description="Scalar gates c_l * 1")
    scalar_preconditioner: bool = Field(
        default=False, description="Scalar preconditioners a_l * I"
    )

    @property
    def is_model(self) -> bool:
        return self.variant is not None


class ExperimentSpec(BaseModel):
    figure_id: str = Field(description="Figure id, e.g. fig2a")
    description: str = Field(description="One-line description shown by `list`")
    isotropic: bool = Field(default=False, description="Isotropic data (Sigma = I)")
    batch_size: int | None = Field(
        default=None, description="Training batch size override"
    )
    fixed_batch: bool = Field(
        default=False,
        description="Train on a single batch and evaluate on that same batch",
    )
    curves: list[CurveSpec] = Field(default_factory=list)

    def resolve(self, settings: SettingsModel, curve: CurveSpec) -> SettingsModel:
        """Settings of one curve: the preset applied on top of ``settings``."""
        resolved = settings.clone()
        resolved.data.isotropic = self.isotropic
        if self.batch_size is not None:
            resolved.train.batch_size = self.batch_size
        if self.fixed_batch:
            resolved.train.resample_every = max(resolved.train.steps, 1)
            resolved.train.eval_on_train_batch = True
        if curve.variant is not None:
            resolved.model.variant = curve.variant
            resolved.model.scalar_gamma = curve.scalar_gamma
            resolved.model.scalar_preconditioner = curve.scalar_preconditioner
            if curve.heads is not None:
                resolved.model.heads = curve.heads
        resolved.validate_settings()
        return resolved

    def validate_spec(self) -> None:
        if not self.curves:
            raise ValueError(f"{self.figure_id}: preset has no curves")
        labels = [curve.label for curve in self.curves]
        if len(set(labels)) != len(labels):
            raise ValueError(f"{self.figure_id}: duplicate curve labels")
        for curve in self.curves:
            if (curve.variant is None) == (curve.baseline is None):
                raise ValueError(
                    f"{self.figure_id}/{curve.label}: exactly one of variant and baseline"
                )


_CGD = CurveSpec(label="CGD", baseline="cgd")


def _comparison(figure_id, description, isotropic, memformer: CurveSpec, scalar=False):
    return ExperimentSpec(
        figure_id=figure_id,
        description=description,
        isotropic=isotropic,
        curves=[
            CurveSpec(
                label="Linear TF (scalar A)" if scalar else "Linear TF",
                variant="linear_tf",
                scalar_preconditioner=scalar,
            ),
            memformer,
            _CGD,
        ],
    )


EXPERIMENT_METADATA = [
    _comparison(
        "fig1a",
        "CGD-like memformer vs linear TF vs CGD, scalar preconditioners, non-isotropic",
        False,
        CurveSpec(
            label="Memformer CGD (scalar A)",
            variant="memformer_cgd",
            scalar_preconditioner=True,
        ),
        scalar=True,
    ),
    _comparison(
        "fig1b",
        "CGD-like memformer vs linear TF vs CGD, matrix preconditioners, non-isotropic",
        False,
        CurveSpec(label="Memformer CGD", variant="memformer_cgd"),
    ),
    _comparison(
        "fig2a",
        "LFOM memformer vs linear TF vs CGD, non-isotropic",
        False,
        CurveSpec(label="Memformer LFOM", variant="memformer_lfom"),
    ),
    _comparison(
        "fig2b",
        "LFOM memformer vs linear TF vs CGD, isotropic",
        True,
        CurveSpec(label="Memformer LFOM", variant="memformer_lfom"),
    ),
    *[
        ExperimentSpec(
            figure_id=figure_id,
            description=f"LFOM memformer with GD++ blocks vs linear TF vs GD++ vs CGD, {regime}",
            isotropic=isotropic,
            curves=[
                CurveSpec(label="Linear TF", variant="linear_tf"),
                CurveSpec(label="Memformer LFOM GD++", variant="memformer_lfom_gdpp"),
                CurveSpec(label="GD++", baseline="gdpp"),
                _CGD,
            ],
        )
        for figure_id, regime, isotropic in (
            ("fig3a", "non-isotropic", False),
            ("fig3b", "isotropic", True),
        )
    ],
    *[
        ExperimentSpec(
            figure_id=figure_id,
            description=f"Scalar-gate memformer trained on one batch of {batch_size} vs CGD on that batch",
            batch_size=batch_size,
            fixed_batch=True,
            curves=[
                CurveSpec(
                    label=f"Memformer LFOM (scalar Gamma, B={batch_size})",
                    variant="memformer_lfom",
                    scalar_gamma=True,
                ),
                _CGD,
            ],
        )
        for figure_id, batch_size in (("fig4a", 1), ("fig4b", 10))
    ],
    *[
        ExperimentSpec(
            figure_id=figure_id,
            description=f"Scalar-gate memformer with {heads} attention head(s) vs CGD",
            curves=[
                CurveSpec(
                    label=f"Memformer LFOM ({heads} head{'s' if heads > 1 else ''})",
                    variant="memformer_lfom",
                    scalar_gamma=True,
                    heads=heads,
                ),
                _CGD,
            ],
        )
        for figure_id, heads in (("fig5a", 1), ("fig5b", 5))
    ],
    ExperimentSpec(
        figure_id="fig6a",
        description="LFOM memformer vs Nesterov accelerated gradient, non-isotropic",
        curves=[
            CurveSpec(label="Memformer LFOM", variant="memformer_lfom"),
            CurveSpec(label="NAG", baseline="nag"),
        ],
    ),
    ExperimentSpec(
        figure_id="fig6b",
        description="LFOM memformer vs momentum GD, non-isotropic",
        curves=[
            CurveSpec(label="Memformer LFOM", variant="memformer_lfom"),
            CurveSpec(label="MGD", baseline="mgd"),
        ],
    ),
]

EXPERIMENT_METADATA_MAP = {spec.figure_id: spec for spec in EXPERIMENT_METADATA}

# auto check duplicate figure ids
assert len(EXPERIMENT_METADATA_MAP) == len(EXPERIMENT_METADATA), (
    "Duplicate experiment metadata"
)

for _spec in EXPERIMENT_METADATA:
    _spec.validate_spec()


def get_experiment(figure_id: str) -> ExperimentSpec:
    try:
        return EXPERIMENT_METADATA_MAP[figure_id]
    except KeyError:
        raise ValueError(
            f"Unknown figure id: {figure_id}. Valid ids: {', '.join(EXPERIMENT_METADATA_MAP)}, all"
        ) from None


def resolve_experiments(figure_id: str) -> list[ExperimentSpec]:
    if figure_id == "all":
        return list(EXPERIMENT_METADATA)
    return [get_experiment(figure_id)]
