"""Primitive operations recorded on a :class:`Tape`.

Every primitive checks the trailing ``(rows, cols)`` shapes of its operands and
raises :class:`ShapeMismatchError` naming the op and both shapes. A leading
batch axis broadcasts between operands.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from memformer_lfom.autodiff.tape import Matrix
from memformer_lfom.autodiff.tape import Node
from memformer_lfom.exceptions import AutodiffError
from memformer_lfom.exceptions import ShapeMismatchError


def _swap(x: Matrix) -> Matrix:
    return np.swapaxes(x, -1, -2)


def _check_batch(op: str, a: Node, b: Node) -> None:
    if a.batched and b.batched and a.shape[0] != b.shape[0]:
        raise ShapeMismatchError(op, a.shape, b.shape)


def _check_same(op: str, a: Node, b: Node) -> None:
    if a.shape[-2:] != b.shape[-2:]:
        raise ShapeMismatchError(op, a.shape, b.shape)
    _check_batch(op, a, b)


def add(a: Node, b: Node) -> Node:
    _check_same("add", a, b)
    return a.tape.record(
        a.value + b.value, "add", (a, b), lambda g: (g, g)
    )


def sub(a: Node, b: Node) -> Node:
    _check_same("sub", a, b)
    return a.tape.record(
        a.value - b.value, "sub", (a, b), lambda g: (g, -g)
    )


def scale(c: float | Node, m: Node) -> Node:
    """Multiply ``m`` by a constant or by a (possibly batched) 1x1 node."""
    if isinstance(c, Node):
        if not c.is_scalar:
            raise ShapeMismatchError("scale", c.shape, m.shape)
        _check_batch("scale", c, m)

        def scale_backward(g):
            return (
                np.sum(g * m.value, axis=(-2, -1), keepdims=True),
                c.value * g,
            )

        return m.tape.record(c.value * m.value, "scale", (c, m), scale_backward)
    factor = float(c)
    return m.tape.record(factor * m.value, "scale", (m,), lambda g: (factor * g,))


def matmul(a: Node, b: Node) -> Node:
    if a.cols != b.rows:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    _check_batch("matmul", a, b)

    def matmul_backward(g):
        return g @ _swap(b.value), _swap(a.value) @ g

    return a.tape.record(a.value @ b.value, "matmul", (a, b), matmul_backward)


def transpose(a: Node) -> Node:
    return a.tape.record(_swap(a.value), "transpose", (a,), lambda g: (_swap(g),))


def hadamard(a: Node, b: Node) -> Node:
    _check_same("hadamard", a, b)
    return a.tape.record(
        a.value * b.value,
        "hadamard",
        (a, b),
        lambda g: (g * b.value, g * a.value),
    )


def entry(a: Node, i: int, j: int) -> Node:
    """Select entry ``(i, j)`` (0-based) as a 1x1 node."""
    if not (0 <= i < a.rows and 0 <= j < a.cols):
        raise AutodiffError(f"entry: index ({i}, {j}) out of range for {a.shape}")

    def entry_backward(g):
        out = np.zeros(g.shape[:-2] + a.shape[-2:])
        out[..., i, j] = g[..., 0, 0]
        return (out,)

    return a.tape.record(a.value[..., i : i + 1, j : j + 1], "entry", (a,), entry_backward)


def square(s: Node) -> Node:
    if not s.is_scalar:
        raise ShapeMismatchError("square", s.shape, (1, 1))
    return s.tape.record(s.value**2, "square", (s,), lambda g: (2.0 * s.value * g,))


def mean(xs: Node | Sequence[Node]) -> Node:
    """Mean of scalars.

    Accepts a batched scalar node ``(B, 1, 1)`` or a sequence of unbatched 1x1
    nodes. Both return a 1x1 node.
    """
    if isinstance(xs, Node):
        if not xs.is_scalar:
            raise ShapeMismatchError("mean", xs.shape, (1, 1))
        if not xs.batched:
            return xs.tape.record(xs.value.copy(), "mean", (xs,), lambda g: (g,))
        count = xs.shape[0]

        def batch_mean_backward(g):
            return (np.broadcast_to(g / count, xs.shape).copy(),)

        return xs.tape.record(
            xs.value.mean(axis=0), "mean", (xs,), batch_mean_backward
        )

    xs = tuple(xs)
    if not xs:
        raise AutodiffError("mean of an empty sequence")
    for x in xs:
        if x.value.shape != (1, 1):
            raise ShapeMismatchError("mean", x.shape, (1, 1))
    count = len(xs)
    total = np.zeros((1, 1))
    for x in xs:
        total = total + x.value
    return xs[0].tape.record(
        total / count, "mean", xs, lambda g: tuple(g / count for _ in xs)
    )
