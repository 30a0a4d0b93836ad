"""Artifact writers: per-layer CSV, SVG plot, JSON metadata.

Every file is written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import io
import json
import logging
import os
import tempfile
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["layer", "curve_name", "mean_log_loss", "stderr"]

_SVG_RC = {
    "svg.hashsalt": "memformer-lfom",
    "svg.fonttype": "none",
    "figure.figsize": (6.4, 4.4),
    "axes.grid": True,
    "grid.alpha": 0.3,
}


@dataclass
class CurveResult:
    label: str
    mean: np.ndarray  # (L+1,)
    stderr: np.ndarray  # (L+1,)
    runs: int

    @classmethod
    def from_averaged(cls, label: str, averaged) -> CurveResult:
        return cls(
            label=label,
            mean=np.asarray(averaged.mean, dtype=np.float64),
            stderr=np.asarray(averaged.stderr, dtype=np.float64),
            runs=averaged.runs,
        )


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(temp_name, path)
    except BaseException:
        Path(temp_name).unlink(missing_ok=True)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def curves_frame(curves: Sequence[CurveResult]) -> pd.DataFrame:
    """Long table with one row per (curve, layer); layer 0 is the initial prompt."""
    rows = []
    for curve in curves:
        if len(curve.mean) != len(curve.stderr):
            raise ValueError(f"{curve.label}: mean and stderr lengths differ")
        for layer, (mean, stderr) in enumerate(zip(curve.mean, curve.stderr, strict=True)):
            rows.append(
                {
                    "layer": layer,
                    "curve_name": curve.label,
                    "mean_log_loss": float(mean),
                    "stderr": float(stderr),
                }
            )
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def write_curves_csv(path: Path, curves: Sequence[CurveResult]) -> pd.DataFrame:
    frame = curves_frame(curves)
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))
    logger.info(f"Written {path}")
    return frame


def write_frame_csv(path: Path, frame: pd.DataFrame) -> None:
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))
    logger.info(f"Written {path}")


def render_curves_svg(curves: Sequence[CurveResult], title: str) -> bytes:
    with matplotlib.rc_context(_SVG_RC):
        fig = Figure()
        ax = fig.add_subplot()
        for curve in curves:
            layers = np.arange(len(curve.mean))
            ax.plot(layers, curve.mean, marker="o", label=curve.label)
            if curve.runs > 1:
                ax.fill_between(
                    layers,
                    curve.mean - curve.stderr,
                    curve.mean + curve.stderr,
                    alpha=0.2,
                )
        ax.set_xlabel("Layer / step")
        ax.set_ylabel("Mean log-loss (natural log)")
        ax.set_title(title)
        if curves:
            ax.set_xticks(np.arange(max(len(c.mean) for c in curves)))
        ax.legend()
        fig.tight_layout()
        buffer = io.BytesIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def write_curves_svg(path: Path, curves: Sequence[CurveResult], title: str) -> None:
    atomic_write_bytes(path, render_curves_svg(curves, title))
    logger.info(f"Written {path}")


def write_json(path: Path, document: dict) -> None:
    text = json.dumps(document, indent=2, sort_keys=True, allow_nan=True)
    atomic_write_text(path, text + "\n")
    logger.info(f"Written {path}")
