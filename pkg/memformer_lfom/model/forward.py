"""Forward passes of the linear Transformer and the Memformer variants.

All functions take tape nodes. ``Z`` may carry a leading batch axis; parameters
broadcast against it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from memformer_lfom.autodiff import Node
from memformer_lfom.autodiff import Tape
from memformer_lfom.autodiff import add
from memformer_lfom.autodiff import entry
from memformer_lfom.autodiff import hadamard
from memformer_lfom.autodiff import matmul
from memformer_lfom.autodiff import scale
from memformer_lfom.autodiff import transpose
from memformer_lfom.exceptions import ShapeMismatchError
from memformer_lfom.model.params import BoundParams
from memformer_lfom.model.params import LayerParams
from memformer_lfom.model.params import MemformerParams

logger = logging.getLogger(__name__)


@dataclass
class MemoryRegister:
    """Attention outputs carried across layers."""

    R: Node | None = None
    history: list[Node] = field(default_factory=list)

    def push(self, r: Node) -> None:
        self.R = r
        self.history.append(r)


def _selector(tape: Tape, d: int) -> tuple[Node, Node]:
    """S = [I_d; 0] of shape (d+1, d) and E = e e^T picking the label row."""
    s = np.zeros((d + 1, d))
    s[:d, :d] = np.eye(d)
    e = np.zeros((d + 1, d + 1))
    e[d, d] = 1.0
    return tape.constant(s, "S"), tape.constant(e, "E")


def _preconditioner(a: Node, d: int) -> Node:
    if a.shape[-2:] == (1, 1) and d != 1:
        return scale(a, a.tape.constant(np.eye(d), "I_d"))
    return a


def assemble_pq(head, d: int) -> tuple[Node, Node]:
    """P = [[B, 0], [0, 1]] and Q = -[[A, 0], [0, 0]]."""
    tape = head.A.tape
    s, e = _selector(tape, d)
    s_t = transpose(s)
    p = add(matmul(matmul(s, head.B), s_t), e)
    q = scale(-1.0, matmul(matmul(s, _preconditioner(head.A, d)), s_t))
    return p, q


def attention(z: Node, layer: LayerParams) -> Node:
    """Sum over heads of P Z M (Z^T Q Z), evaluated as P (Z M Z^T) (Q Z)."""
    d = z.rows - 1
    n = z.cols - 1
    if d < 1 or n < 1:
        raise ShapeMismatchError("attention", z.shape)
    mask = np.eye(n + 1)
    mask[n, n] = 0.0
    zm = matmul(z, z.tape.constant(mask, "M"))
    gram = matmul(zm, transpose(z))
    out = None
    for head in layer.heads:
        if head.A.shape[-2:] not in ((d, d), (1, 1)):
            raise ShapeMismatchError("attention", head.A.shape, z.shape)
        p, q = assemble_pq(head, d)
        head_out = matmul(matmul(p, gram), matmul(q, z))
        out = head_out if out is None else add(out, head_out)
    return out


def _readout(z: Node) -> Node:
    return scale(-1.0, entry(z, z.rows - 1, z.cols - 1))


def tf_forward(z0: Node, params: BoundParams) -> tuple[Node, list[Node]]:
    """Z_{l+1} = Z_l + (1/n) Attn(Z_l); prediction = -Z_L[d, n]."""
    inv_n = 1.0 / params.n
    per_layer_z = [z0]
    z = z0
    for layer in params.layers:
        z = add(z, scale(inv_n, attention(z, layer)))
        per_layer_z.append(z)
    return _readout(z), per_layer_z


def memformer_cgd_forward(z0: Node, params: BoundParams) -> tuple[Node, list[Node]]:
    """R_l = Attn(Z_l) + gamma_l R_{l-1}; Z_{l+1} = Z_l + alpha_l (1/n) R_l."""
    inv_n = 1.0 / params.n
    per_layer_z = [z0]
    z = z0
    memory = MemoryRegister()
    for layer in params.layers:
        r = attention(z, layer)
        if memory.R is not None:
            r = add(r, scale(layer.gamma, memory.R))
        memory.push(r)
        z = add(z, scale(layer.alpha, scale(inv_n, r)))
        per_layer_z.append(z)
    return _readout(z), per_layer_z


def _gate(gate: Node, r: Node) -> Node:
    if gate.shape[-2:] == (1, 1):
        return scale(gate, r)
    return hadamard(gate, r)


def memformer_lfom_forward(z0: Node, params: BoundParams) -> tuple[Node, list[Node]]:
    """R_l = Attn(Z_l); Z_{l+1} = Z_l + (1/n) sum_{j<=l} Gamma_j^l (.) R_j."""
    inv_n = 1.0 / params.n
    per_layer_z = [z0]
    z = z0
    memory = MemoryRegister()
    for layer in params.layers:
        memory.push(attention(z, layer))
        update = None
        for gate, r in zip(layer.gates, memory.history, strict=True):
            term = _gate(gate, r)
            update = term if update is None else add(update, term)
        z = add(z, scale(inv_n, update))
        per_layer_z.append(z)
    return _readout(z), per_layer_z


_FORWARDS = {
    "linear_tf": tf_forward,
    "memformer_cgd": memformer_cgd_forward,
    "memformer_lfom": memformer_lfom_forward,
    "memformer_lfom_gdpp": memformer_lfom_forward,
}


def forward(z0: Node, params: BoundParams) -> tuple[Node, list[Node]]:
    return _FORWARDS[params.config.variant](z0, params)


def predict(params: MemformerParams, prompts: np.ndarray) -> np.ndarray:
    """Per-layer predictions ``-Z_l[d, n]``, shape ``(B, L+1)``.

    ``prompts`` is a single ``(d+1, n+1)`` prompt or a stack of them.
    """
    prompts = np.asarray(prompts, dtype=np.float64)
    single = prompts.ndim == 2
    if single:
        prompts = prompts[None]
    if prompts.shape[1:] != (params.d + 1, params.n + 1):
        raise ShapeMismatchError(
            "predict", prompts.shape, (params.d + 1, params.n + 1)
        )
    tape = Tape()
    bound = params.bind(tape)
    _, per_layer_z = forward(tape.constant(prompts, "Z0"), bound)
    out = np.stack([-z.value[:, params.d, params.n] for z in per_layer_z], axis=1)
    return out[0] if single else out
