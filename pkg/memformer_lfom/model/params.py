"""Parameter store for every model variant.

Parameters live in a flat ``name -> float64 matrix`` map so the optimizer,
checkpoints and the run cache never need to know the variant. ``bind`` records
them on a tape and returns the per-layer view the forward pass consumes.

Names::

    layers.{l}.heads.{h}.A    d x d, or 1 x 1 with scalar preconditioners
    layers.{l}.heads.{h}.B    d x d, trainable only for GD++
    layers.{l}.alpha          1 x 1, dynamic memory step
    layers.{l}.gamma          1 x 1, dynamic memory deflection
    gates.{j}                 (d+1) x (n+1) or 1 x 1, tied gates
    layers.{l}.gates.{j}      same, untied gates (j <= l)
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from memformer_lfom.autodiff import Node
from memformer_lfom.autodiff import Tape
from memformer_lfom.config.model import ModelSettings

logger = logging.getLogger(__name__)


@dataclass
class HeadParams:
    A: Node
    B: Node


@dataclass
class LayerParams:
    heads: list[HeadParams]
    alpha: Node | None = None
    gamma: Node | None = None
    # gates[j] multiplies register R_j in this layer's update
    gates: list[Node] = field(default_factory=list)


@dataclass
class BoundParams:
    """Parameters recorded on one tape, ready for a forward pass."""

    config: ModelSettings
    d: int
    n: int
    layers: list[LayerParams]
    nodes: dict[str, Node]


@dataclass
class MemformerParams:
    config: ModelSettings
    d: int
    n: int
    values: dict[str, np.ndarray]
    trainable: set[str]

    def __post_init__(self):
        unknown = self.trainable - self.values.keys()
        if unknown:
            raise ValueError(f"trainable names without values: {sorted(unknown)}")

    @property
    def n_layers(self) -> int:
        return self.config.n_layers

    def named_parameters(self) -> dict[str, np.ndarray]:
        """Trainable parameters only, in sorted name order."""
        return {k: self.values[k] for k in sorted(self.trainable)}

    def from_named(self, updates: dict[str, np.ndarray]) -> MemformerParams:
        """Copy with some parameter values replaced."""
        values = dict(self.values)
        for name, value in updates.items():
            if name not in values:
                raise KeyError(f"unknown parameter: {name}")
            if np.shape(value) != values[name].shape:
                raise ValueError(
                    f"{name}: shape {np.shape(value)} does not match {values[name].shape}"
                )
            values[name] = np.array(value, dtype=np.float64)
        return MemformerParams(
            config=self.config,
            d=self.d,
            n=self.n,
            values=values,
            trainable=set(self.trainable),
        )

    def clone(self) -> MemformerParams:
        return copy.deepcopy(self)

    def bind(self, tape: Tape) -> BoundParams:
        nodes = {}
        for name in sorted(self.values):
            if name in self.trainable:
                nodes[name] = tape.parameter(name, self.values[name])
            else:
                nodes[name] = tape.constant(self.values[name], name)

        cfg = self.config
        layers = []
        for l in range(cfg.n_layers):
            heads = [
                HeadParams(
                    A=nodes[f"layers.{l}.heads.{h}.A"],
                    B=nodes[f"layers.{l}.heads.{h}.B"],
                )
                for h in range(cfg.heads)
            ]
            layer = LayerParams(heads=heads)
            if cfg.variant == "memformer_cgd":
                layer.alpha = nodes[f"layers.{l}.alpha"]
                layer.gamma = nodes[f"layers.{l}.gamma"]
            elif cfg.variant in ("memformer_lfom", "memformer_lfom_gdpp"):
                layer.gates = [nodes[gate_name(cfg, l, j)] for j in range(l + 1)]
            layers.append(layer)
        return BoundParams(config=cfg, d=self.d, n=self.n, layers=layers, nodes=nodes)


def gate_name(config: ModelSettings, layer: int, j: int) -> str:
    if config.tie_gamma_across_layers:
        return f"gates.{j}"
    return f"layers.{layer}.gates.{j}"


def init_params(
    config: ModelSettings,
    d: int,
    n: int,
    rng: np.random.Generator,
    init_std: float = 0.1,
) -> MemformerParams:
    """Gaussian init of A and Gamma, B = 0, alpha = 1, gamma = 0.

    Draw order is fixed (layers, then heads, then gates) so a seed always maps
    to the same parameters.
    """
    config.validate_settings()
    values: dict[str, np.ndarray] = {}
    trainable: set[str] = set()
    a_shape = (1, 1) if config.scalar_preconditioner else (d, d)
    gate_shape = (1, 1) if config.scalar_gamma else (d + 1, n + 1)

    for l in range(config.n_layers):
        for h in range(config.heads):
            a = f"layers.{l}.heads.{h}.A"
            b = f"layers.{l}.heads.{h}.B"
            values[a] = init_std * rng.standard_normal(a_shape)
            values[b] = np.zeros((d, d))
            trainable.add(a)
        if config.variant == "memformer_cgd":
            values[f"layers.{l}.alpha"] = np.ones((1, 1))
            values[f"layers.{l}.gamma"] = np.zeros((1, 1))
            trainable.update({f"layers.{l}.alpha", f"layers.{l}.gamma"})

    if config.variant in ("memformer_lfom", "memformer_lfom_gdpp"):
        for l in range(config.n_layers):
            for j in range(l + 1):
                name = gate_name(config, l, j)
                if name in values:
                    continue
                values[name] = init_std * rng.standard_normal(gate_shape)
                trainable.add(name)

    params = MemformerParams(
        config=config, d=d, n=n, values=values, trainable=trainable
    )
    if config.uses_gdpp:
        params = gdpp_enable(params)
    logger.debug(
        f"initialized {config.variant}: {len(trainable)} trainable matrices"
    )
    return params


def gdpp_enable(params: MemformerParams) -> MemformerParams:
    """Mark every B block trainable. Values are left untouched."""
    if not params.config.uses_gdpp:
        raise ValueError(
            f"B blocks are only trainable for memformer_lfom_gdpp, not {params.config.variant}"
        )
    enabled = params.clone()
    enabled.trainable.update(k for k in enabled.values if k.endswith(".B"))
    return enabled


def zero_params(config: ModelSettings, d: int, n: int) -> MemformerParams:
    """Params with every matrix zero except alpha = 1; used to set values by hand."""
    params = init_params(config, d, n, np.random.default_rng(0), init_std=0.0)
    return params
