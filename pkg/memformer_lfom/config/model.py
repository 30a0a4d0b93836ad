from __future__ import annotations

import logging
from pathlib import Path

from pydantic import BaseModel
from pydantic import Field

log = logging.getLogger(__name__)

# Very Important!
# Only the following fields can be used for Field:
# default
# description
# default_factory
#
# Field names must be unique across all sub-settings: the command line and
# the environment address them without their section.

MODEL_VARIANTS = (
    "linear_tf",
    "memformer_cgd",
    "memformer_lfom",
    "memformer_lfom_gdpp",
)

SUBCOMMANDS = ("train", "eval", "baseline", "verify", "reproduce", "list")


class BasicSettings(BaseModel):
    """Basic application settings"""

    command: list[str] = Field(
        default=[],
        description="Subcommand and its arguments: train | eval | baseline | verify | reproduce <figure-id|all> | list",
    )
    debug: bool = Field(default=False, description="Enable debug logging")
    version: bool = Field(default=False, description="Show version then exit")
    seed: int = Field(default=0, description="Master random seed")
    ignore_cache: bool = Field(default=False, description="Ignore the run cache")
    dump_batches: bool = Field(
        default=False, description="Write every evaluation batch as .npz next to the results"
    )


class DataSettings(BaseModel):
    """Task distribution"""

    d: int = Field(default=5, description="Covariate dimension")
    n: int = Field(default=20, description="In-context examples per prompt")
    isotropic: bool = Field(default=False, description="Use isotropic data (Sigma = I)")
    spectrum: str = Field(
        default="1,1,0.5,0.25,1",
        description="Comma separated covariance spectrum D for non-isotropic data",
    )

    def spectrum_values(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.spectrum.split(",") if v.strip())


class ModelSettings(BaseModel):
    """Model architecture"""

    variant: str = Field(
        default="memformer_lfom",
        description=f"Model variant: {', '.join(MODEL_VARIANTS)}",
    )
    n_layers: int = Field(default=3, description="Number of layers L")
    heads: int = Field(default=1, description="Number of attention heads")
    untie_gamma: bool = Field(
        default=False,
        description="Give every layer its own gates Gamma_j^l instead of sharing Gamma_j",
    )
    scalar_gamma: bool = Field(
        default=False, description="Restrict gates to scalar multiples c_l of all-ones"
    )
    scalar_preconditioner: bool = Field(
        default=False, description="Restrict preconditioners to A_l = a_l I"
    )

    @property
    def tie_gamma_across_layers(self) -> bool:
        return not self.untie_gamma

    @property
    def uses_gdpp(self) -> bool:
        return self.variant == "memformer_lfom_gdpp"

    def validate_settings(self) -> None:
        if self.variant not in MODEL_VARIANTS:
            raise ValueError(
                f"Invalid variant: {self.variant}. Valid variants: {', '.join(MODEL_VARIANTS)}"
            )
        if self.n_layers < 1:
            raise ValueError("n_layers must be at least 1")
        if self.heads < 1:
            raise ValueError("heads must be at least 1")


class TrainSettings(BaseModel):
    """Meta-training with ADAM"""

    steps: int = Field(default=10000, description="Total ADAM steps per run")
    batch_size: int = Field(default=1000, description="Training batch size")
    resample_every: int = Field(
        default=100, description="Draw a fresh training batch every this many steps"
    )
    clip_norm: float = Field(
        default=0.01, description="Maximum Frobenius norm of each parameter gradient"
    )
    lr: float = Field(default=1e-3, description="ADAM learning rate")
    beta1: float = Field(default=0.9, description="ADAM first moment decay")
    beta2: float = Field(default=0.999, description="ADAM second moment decay")
    adam_eps: float = Field(default=1e-8, description="ADAM epsilon")
    runs: int = Field(default=5, description="Independent runs (each draws its own Sigma)")
    init_std: float = Field(
        default=0.1, description="Std of the Gaussian init of A, B and Gamma"
    )
    eval_batch_size: int = Field(default=1000, description="Held-out evaluation batch size")
    eval_on_train_batch: bool = Field(
        default=False, description="Evaluate on the first training batch instead of a held-out one"
    )
    divergence_threshold: float = Field(
        default=1e12, description="Abort a run when the loss exceeds this value"
    )
    workers: int = Field(default=1, description="Worker processes for independent runs")


class BaselineSettings(BaseModel):
    """Classical per-instance optimizers"""

    baseline: str | None = Field(
        default=None, description="Baseline for the baseline subcommand: gd, cgd, mgd, nag, gdpp"
    )
    gd_lr: float = Field(default=0.03, description="Step size of plain GD")
    mgd_lr: float = Field(default=0.005, description="Momentum GD step size")
    mgd_momentum: float = Field(default=0.9, description="Momentum GD beta")
    nag_lr: float = Field(default=0.03, description="Nesterov step size")
    nag_momentum: float = Field(default=0.9, description="Nesterov beta")
    gdpp_gamma: float = Field(default=0.1, description="GD++ covariate transform gamma")
    gdpp_step: float = Field(default=0.5, description="GD++ scalar step size")


class OutputSettings(BaseModel):
    """Artifacts"""

    out_dir: str = Field(default="results", description="Output directory")
    checkpoint: str | None = Field(
        default=None, description="Checkpoint file to evaluate (eval subcommand)"
    )
    no_plot: bool = Field(default=False, description="Skip SVG rendering")


class VerifySettings(BaseModel):
    """Equivalence checks"""

    verify_seeds: int = Field(
        default=100, description="Random instances per equivalence check"
    )
    lemma_instances: int = Field(
        default=1000, description="Random instances for the linear transformer vs GD check"
    )


class SettingsModel(BaseModel):
    """Main settings class that combines all sub-settings"""

    config_file: str | None = Field(
        default=None, description="Path to the configuration file"
    )
    basic: BasicSettings = Field(default_factory=BasicSettings)
    data: DataSettings = Field(default_factory=DataSettings)
    model: ModelSettings = Field(default_factory=ModelSettings)
    train: TrainSettings = Field(default_factory=TrainSettings)
    baselines: BaselineSettings = Field(default_factory=BaselineSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    verify: VerifySettings = Field(default_factory=VerifySettings)

    def clone(self) -> SettingsModel:
        return self.model_copy(deep=True)

    def get_output_dir(self) -> Path:
        """Get output directory, create if not exists"""
        output_dir = Path(self.output.out_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        return output_dir

    def validate_settings(self) -> None:
        """Validate settings"""
        if self.basic.version:
            return

        if self.basic.seed < 0:
            raise ValueError("seed must be greater than or equal to 0")

        if self.data.d < 1:
            raise ValueError("d must be at least 1")
        if self.data.n < 1:
            raise ValueError("n must be at least 1")
        if not self.data.isotropic:
            try:
                spectrum = self.data.spectrum_values()
            except ValueError as e:
                raise ValueError(f"Invalid spectrum: {self.data.spectrum}") from e
            if len(spectrum) != self.data.d:
                raise ValueError(
                    f"spectrum has {len(spectrum)} entries but d is {self.data.d}"
                )
            if any(v <= 0 for v in spectrum):
                raise ValueError("spectrum entries must be positive")

        self.model.validate_settings()

        if self.train.steps < 0:
            raise ValueError("steps must be greater than or equal to 0")
        if self.train.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.train.eval_batch_size < 1:
            raise ValueError("eval_batch_size must be at least 1")
        if self.train.resample_every < 1:
            raise ValueError("resample_every must be at least 1")
        if not self.train.clip_norm > 0:
            raise ValueError("clip_norm must be greater than 0")
        if not self.train.lr > 0:
            raise ValueError("lr must be greater than 0")
        if not (0.0 <= self.train.beta1 < 1.0 and 0.0 <= self.train.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must be in [0, 1)")
        if self.train.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.train.init_std < 0:
            raise ValueError("init_std must be greater than or equal to 0")
        if self.train.workers < 1:
            raise ValueError("workers must be at least 1")

        if self.verify.verify_seeds < 1 or self.verify.lemma_instances < 1:
            raise ValueError("verification needs at least one instance")

        if self.basic.command:
            command = self.basic.command[0]
            if command not in SUBCOMMANDS:
                raise ValueError(
                    f"Unknown subcommand: {command}. Valid subcommands: {', '.join(SUBCOMMANDS)}"
                )
            if command == "reproduce" and len(self.basic.command) != 2:
                raise ValueError("reproduce needs exactly one figure id (or 'all')")
            if command == "eval" and not self.output.checkpoint:
                raise ValueError("eval requires --checkpoint")
            if command == "baseline" and not self.baselines.baseline:
                raise ValueError("baseline requires --baseline")
