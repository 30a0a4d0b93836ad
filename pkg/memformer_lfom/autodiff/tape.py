"""Define-by-run tape for reverse-mode differentiation over dense float64 matrices.

A value is a 2-D array ``(rows, cols)`` or a batched 3-D array
``(batch, rows, cols)``. Parameters are unbatched leaves that broadcast against
batched operands; their gradients are reduced over the batch axis with numpy's
pairwise summation, which visits the batch in a fixed order.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from dataclasses import field

import numpy as np
import numpy.typing as npt

from memformer_lfom.exceptions import AutodiffError
from memformer_lfom.exceptions import NonFiniteValueError
from memformer_lfom.exceptions import NotScalarError

logger = logging.getLogger(__name__)

Matrix = npt.NDArray[np.float64]
BackwardFn = Callable[[Matrix], tuple[Matrix | None, ...]]


def as_matrix(values, name: str = "value") -> Matrix:
    """Convert external input to a float64 matrix, rejecting NaN and Inf."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim not in (2, 3):
        raise AutodiffError(
            f"{name}: expected a matrix or a batch of matrices, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValueError(f"{name} contains NaN or Inf")
    return arr


def unbroadcast(grad: Matrix, shape: tuple[int, ...]) -> Matrix:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


@dataclass(eq=False)
class Node:
    tape: Tape
    id: int
    value: Matrix
    op: str
    parents: tuple[Node, ...] = ()
    backward_fn: BackwardFn | None = None
    name: str | None = None
    trainable: bool = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[-2]

    @property
    def cols(self) -> int:
        return self.value.shape[-1]

    @property
    def batched(self) -> bool:
        return self.value.ndim == 3

    @property
    def is_scalar(self) -> bool:
        return self.value.shape[-2:] == (1, 1)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node#{self.id}<{self.op}{label} {self.shape}>"


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)

    def record(
        self,
        value: Matrix,
        op: str,
        parents: tuple[Node, ...] = (),
        backward_fn: BackwardFn | None = None,
        name: str | None = None,
        trainable: bool = False,
    ) -> Node:
        for parent in parents:
            if parent.tape is not self:
                raise AutodiffError(f"{op}: operand {parent} belongs to another tape")
        node = Node(
            tape=self,
            id=len(self.nodes),
            value=value,
            op=op,
            parents=parents,
            backward_fn=backward_fn,
            name=name,
            trainable=trainable,
        )
        self.nodes.append(node)
        return node

    def parameter(self, name: str, value) -> Node:
        """Record a trainable leaf. Names must be unique on a tape."""
        if any(n.trainable and n.name == name for n in self.nodes):
            raise AutodiffError(f"duplicate parameter name: {name}")
        arr = as_matrix(value, name)
        if arr.ndim != 2:
            raise AutodiffError(f"parameter {name} must be unbatched, got {arr.shape}")
        return self.record(arr, "parameter", name=name, trainable=True)

    def constant(self, value, name: str | None = None) -> Node:
        return self.record(as_matrix(value, name or "constant"), "constant", name=name)

    def parameters(self) -> dict[str, Node]:
        return {n.name: n for n in self.nodes if n.trainable}

    def __len__(self):
        return len(self.nodes)


def backward(tape: Tape, root: Node) -> dict[str, Matrix]:
    """Return d(root)/d(theta) for every parameter leaf theta on ``tape``.

    Nodes are visited exactly once, in reverse recording order. Gradients reaching
    the same node from several consumers are added in that order. Parameters the
    root does not depend on get zero gradients.
    """
    if root.tape is not tape:
        raise AutodiffError("root node belongs to another tape")
    if root.value.shape != (1, 1):
        raise NotScalarError(f"backward needs a 1x1 root, got shape {root.shape}")

    pending: dict[int, Matrix] = {root.id: np.ones((1, 1))}
    leaf_grads: dict[str, Matrix] = {}
    for node in reversed(tape.nodes[: root.id + 1]):
        grad = pending.pop(node.id, None)
        if grad is None:
            continue
        if node.trainable:
            leaf_grads[node.name] = grad
            continue
        if node.backward_fn is None:
            continue
        for parent, parent_grad in zip(
            node.parents, node.backward_fn(grad), strict=True
        ):
            if parent_grad is None:
                continue
            parent_grad = unbroadcast(parent_grad, parent.value.shape)
            if parent.id in pending:
                pending[parent.id] = pending[parent.id] + parent_grad
            else:
                pending[parent.id] = parent_grad

    grads = {}
    for name, node in tape.parameters().items():
        grads[name] = leaf_grads.get(name, np.zeros_like(node.value))
    logger.debug(f"backward over {len(tape)} nodes, {len(grads)} parameters")
    return grads
