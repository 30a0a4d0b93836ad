"""Subcommand implementations: train, eval, baseline, verify, reproduce."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path

import pandas as pd

from memformer_lfom.baselines import curve_label
from memformer_lfom.baselines import run_baseline_on_batch
from memformer_lfom.baselines import trajectory_frame
from memformer_lfom.config.experiment_model import CurveSpec
from memformer_lfom.config.experiment_model import ExperimentSpec
from memformer_lfom.config.experiment_model import resolve_experiments
from memformer_lfom.config.main import ConfigManager
from memformer_lfom.config.model import SettingsModel
from memformer_lfom.const import __version__
from memformer_lfom.exceptions import ExperimentError
from memformer_lfom.export import CurveResult
from memformer_lfom.export import write_curves_csv
from memformer_lfom.export import write_curves_svg
from memformer_lfom.export import write_frame_csv
from memformer_lfom.export import write_json
from memformer_lfom.model import load_checkpoint
from memformer_lfom.model import save_checkpoint
from memformer_lfom.tasks import save_batch
from memformer_lfom.trainer import average_runs
from memformer_lfom.trainer import comparison_batch
from memformer_lfom.trainer import evaluate_log_loss
from memformer_lfom.trainer import train_runs
from memformer_lfom.verify import VerificationSummary
from memformer_lfom.verify import run_verification_from_settings

logger = logging.getLogger(__name__)


@dataclass
class ExperimentArtifacts:
    figure_id: str
    csv_path: Path
    json_path: Path
    svg_path: Path | None = None
    curves: list[CurveResult] = field(default_factory=list)


def _run_summary(records) -> list[dict]:
    return [
        {
            "run": r.run,
            "seed": r.seed,
            "aborted": r.aborted,
            "abort_reason": r.abort_reason,
            "final_train_loss": r.train_losses[-1] if r.train_losses else None,
            "eval_log_loss": r.eval_log_loss,
            "wall_clock": r.wall_clock,
        }
        for r in records
    ]


def _model_curve(settings: SettingsModel, label: str) -> tuple[CurveResult, dict]:
    records = train_runs(settings)
    curve = CurveResult.from_averaged(label, average_runs(records))
    return curve, {"kind": "model", "runs": _run_summary(records)}


def _baseline_curve(
    settings: SettingsModel, name: str, label: str | None = None
) -> tuple[CurveResult, list[pd.DataFrame]]:
    """Run ``name`` per instance on every run's comparison batch."""
    steps = settings.model.n_layers
    curves = []
    frames = []
    for run in range(settings.train.runs):
        batch = comparison_batch(settings, run)
        trajectory = run_baseline_on_batch(name, batch, steps, settings.baselines)
        curves.append(trajectory.mean_log_loss())
        frames.append(trajectory_frame(trajectory).assign(run=run))
    label = label or curve_label(name, settings.baselines)
    return CurveResult.from_averaged(label, average_runs(curves)), frames


def _dump_batches(settings: SettingsModel, out_dir: Path, stem: str) -> None:
    for run in range(settings.train.runs):
        path = save_batch(out_dir / f"{stem}.run{run}.npz", comparison_batch(settings, run))
        logger.info(f"Batch written to {path}")


def _emit(
    settings: SettingsModel,
    stem: str,
    curves: list[CurveResult],
    title: str,
    metadata: dict,
) -> ExperimentArtifacts:
    out_dir = settings.get_output_dir()
    artifacts = ExperimentArtifacts(
        figure_id=stem,
        csv_path=out_dir / f"{stem}.csv",
        json_path=out_dir / f"{stem}.json",
        curves=curves,
    )
    write_curves_csv(artifacts.csv_path, curves)
    if not settings.output.no_plot:
        artifacts.svg_path = out_dir / f"{stem}.svg"
        write_curves_svg(artifacts.svg_path, curves, title)
    metadata = {
        "version": __version__,
        "seed": settings.basic.seed,
        "csv": artifacts.csv_path.name,
        "svg": artifacts.svg_path.name if artifacts.svg_path else None,
        **metadata,
    }
    write_json(artifacts.json_path, metadata)
    return artifacts


def run_experiment(spec: ExperimentSpec, settings: SettingsModel) -> ExperimentArtifacts:
    """Train the figure's models, run its baselines, write CSV, SVG and JSON."""
    logger.info(f"Reproducing {spec.figure_id}: {spec.description}")
    curves: list[CurveResult] = []
    curve_metadata = []
    for curve_spec in spec.curves:
        resolved = spec.resolve(settings, curve_spec)
        curve, extra = _curve(resolved, curve_spec)
        curves.append(curve)
        curve_metadata.append(
            {
                "label": curve.label,
                "settings": resolved.model_dump(mode="json", exclude={"config_file"}),
                **extra,
            }
        )
        logger.info(
            f"{spec.figure_id}/{curve.label}: final mean log-loss {curve.mean[-1]:.4f}"
        )

    if settings.basic.dump_batches:
        _dump_batches(
            spec.resolve(settings, spec.curves[0]),
            settings.get_output_dir() / f"{spec.figure_id}_batches",
            spec.figure_id,
        )
    ConfigManager().write_config_file(
        settings.get_output_dir() / f"{spec.figure_id}.config.toml", settings
    )
    return _emit(
        settings,
        spec.figure_id,
        curves,
        f"{spec.figure_id}: {spec.description}",
        {
            "figure_id": spec.figure_id,
            "description": spec.description,
            "curves": curve_metadata,
        },
    )


def _curve(settings: SettingsModel, curve_spec: CurveSpec) -> tuple[CurveResult, dict]:
    if curve_spec.is_model:
        return _model_curve(settings, curve_spec.label)
    curve, _ = _baseline_curve(settings, curve_spec.baseline, curve_spec.label)
    return curve, {
        "kind": "baseline",
        "baseline": curve_spec.baseline,
        "runs": settings.train.runs,
    }


def do_reproduce(figure_id: str, settings: SettingsModel) -> list[ExperimentArtifacts]:
    try:
        specs = resolve_experiments(figure_id)
    except ValueError as e:
        raise ExperimentError(str(e)) from e
    return [run_experiment(spec, settings) for spec in specs]


def do_train(settings: SettingsModel) -> ExperimentArtifacts:
    variant = settings.model.variant
    out_dir = settings.get_output_dir()
    records = train_runs(settings)
    for record in records:
        if record.checkpoint is not None:
            save_checkpoint(out_dir / f"{variant}.run{record.run}.json", record.params())
    curve = CurveResult.from_averaged(variant, average_runs(records))
    write_json(
        out_dir / f"train_{variant}.records.json",
        {"records": [r.model_dump(mode="json", exclude={"checkpoint"}) for r in records]},
    )
    ConfigManager().write_config_file(out_dir / f"train_{variant}.config.toml", settings)
    return _emit(
        settings,
        f"train_{variant}",
        [curve],
        f"{variant}: held-out log-loss after training",
        {"variant": variant, "runs": _run_summary(records)},
    )


def do_eval(settings: SettingsModel) -> ExperimentArtifacts:
    checkpoint = Path(settings.output.checkpoint)
    try:
        params = load_checkpoint(checkpoint)
    except (OSError, ValueError, KeyError) as e:
        raise ExperimentError(f"cannot load checkpoint {checkpoint}: {e}") from e
    if (params.d, params.n) != (settings.data.d, settings.data.n):
        raise ExperimentError(
            f"checkpoint was trained with d={params.d}, n={params.n}; "
            f"settings have d={settings.data.d}, n={settings.data.n}"
        )
    resolved = settings.clone()
    resolved.model = params.config.model_copy()
    curves = [
        evaluate_log_loss(params, comparison_batch(resolved, run))
        for run in range(resolved.train.runs)
    ]
    label = params.config.variant
    stem = f"eval_{checkpoint.stem}"
    return _emit(
        resolved,
        stem,
        [CurveResult.from_averaged(label, average_runs(curves))],
        f"{checkpoint.name}: log-loss per layer",
        {"checkpoint": str(checkpoint), "model": params.config.model_dump(mode="json")},
    )


def do_baseline(settings: SettingsModel) -> ExperimentArtifacts:
    name = settings.baselines.baseline
    try:
        curve, frames = _baseline_curve(settings, name)
    except ValueError as e:
        raise ExperimentError(str(e)) from e
    stem = f"baseline_{name}"
    write_frame_csv(
        settings.get_output_dir() / f"{stem}.trajectory.csv",
        pd.concat(frames, ignore_index=True)[["run", "step", "loss", "log_loss"]],
    )
    if settings.basic.dump_batches:
        _dump_batches(settings, settings.get_output_dir() / f"{stem}_batches", stem)
    return _emit(
        settings,
        stem,
        [curve],
        f"{curve.label}: log-loss per step",
        {"baseline": name, "baselines": settings.baselines.model_dump(mode="json")},
    )


def do_verify(settings: SettingsModel) -> VerificationSummary:
    summary = run_verification_from_settings(settings)
    for report in summary.reports:
        status = "PASS" if report.passed else "FAIL"
        logger.info(
            f"[{status}] {report.name}: max deviation {report.max_deviation:.3e} "
            f"(tolerance {report.tolerance:.0e})"
        )
    write_json(settings.get_output_dir() / "verify.json", summary.model_dump(mode="json"))
    return summary
