"""JSON checkpoints.

Document layout::

    {
      "format": "memformer-checkpoint",
      "version": 1,
      "config": {"model": {...ModelSettings...}, "d": 5, "n": 20},
      "parameters": [
        {"name": "layers.0.heads.0.A", "shape": [5, 5], "trainable": true,
         "values": [... row-major ...]}
      ]
    }

Floats are written with ``repr`` precision, so a save/load cycle is exact.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from memformer_lfom.config.model import ModelSettings
from memformer_lfom.model.params import MemformerParams

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "memformer-checkpoint"
CHECKPOINT_VERSION = 1


def params_to_document(params: MemformerParams) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {
            "model": params.config.model_dump(mode="json"),
            "d": params.d,
            "n": params.n,
        },
        "parameters": [
            {
                "name": name,
                "shape": list(value.shape),
                "trainable": name in params.trainable,
                "values": [float(v) for v in value.reshape(-1)],
            }
            for name, value in sorted(params.values.items())
        ],
    }


def params_from_document(document: dict) -> MemformerParams:
    if document.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a checkpoint document: format={document.get('format')!r}")
    if document.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {document.get('version')}")
    config = document["config"]
    values = {}
    trainable = set()
    for item in document["parameters"]:
        shape = tuple(item["shape"])
        value = np.array(item["values"], dtype=np.float64)
        if value.size != int(np.prod(shape)):
            raise ValueError(
                f"{item['name']}: {value.size} values do not fill shape {shape}"
            )
        values[item["name"]] = value.reshape(shape)
        if item["trainable"]:
            trainable.add(item["name"])
    return MemformerParams(
        config=ModelSettings(**config["model"]),
        d=int(config["d"]),
        n=int(config["n"]),
        values=values,
        trainable=trainable,
    )


def save_checkpoint(path: Path, params: MemformerParams) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp = path.with_name(path.name + ".tmp")
    with temp.open("w", encoding="utf-8") as f:
        json.dump(params_to_document(params), f, indent=1)
    temp.replace(path)
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: Path) -> MemformerParams:
    with Path(path).open(encoding="utf-8") as f:
        return params_from_document(json.load(f))
