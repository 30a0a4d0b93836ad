import pickle

import numpy as np
import pytest

from memformer_lfom.autodiff import Tape
from memformer_lfom.autodiff import add
from memformer_lfom.autodiff import as_matrix
from memformer_lfom.autodiff import backward
from memformer_lfom.autodiff import entry
from memformer_lfom.autodiff import hadamard
from memformer_lfom.autodiff import matmul
from memformer_lfom.autodiff import mean
from memformer_lfom.autodiff import numerical_gradient
from memformer_lfom.autodiff import relative_error
from memformer_lfom.autodiff import scale
from memformer_lfom.autodiff import square
from memformer_lfom.autodiff import sub
from memformer_lfom.autodiff import transpose
from memformer_lfom.autodiff.tape import unbroadcast
from memformer_lfom.exceptions import AutodiffError
from memformer_lfom.exceptions import NonFiniteValueError
from memformer_lfom.exceptions import NotScalarError
from memformer_lfom.exceptions import ShapeMismatchError


class TestAsMatrix:
    def test_scalar_becomes_1x1(self):
        """Test that a Python float becomes a 1x1 matrix"""
        assert as_matrix(2.5).shape == (1, 1)

    def test_rejects_non_finite(self):
        """Test NaN and Inf rejection"""
        with pytest.raises(NonFiniteValueError, match="W contains NaN or Inf"):
            as_matrix([[1.0, np.nan]], name="W")
        with pytest.raises(NonFiniteValueError):
            as_matrix([[np.inf]])

    def test_rejects_vectors(self):
        """Test that 1-D input is not a matrix"""
        with pytest.raises(AutodiffError, match="expected a matrix"):
            as_matrix([1.0, 2.0])

    def test_copies_input(self):
        """Test that the tape never aliases caller arrays"""
        source = np.ones((2, 2))
        arr = as_matrix(source)
        source[0, 0] = 5.0
        assert arr[0, 0] == 1.0


class TestTape:
    def test_topological_order(self):
        """Test that operands always precede their consumers"""
        tape = Tape()
        a = tape.parameter("a", np.eye(2))
        b = tape.constant(np.ones((2, 2)))
        c = matmul(a, add(a, b))
        for node in tape.nodes:
            assert all(parent.id < node.id for parent in node.parents)
        assert c.id == len(tape) - 1

    def test_duplicate_parameter_name(self):
        """Test duplicate parameter names"""
        tape = Tape()
        tape.parameter("a", np.eye(2))
        with pytest.raises(AutodiffError, match="duplicate parameter name"):
            tape.parameter("a", np.eye(2))

    def test_parameters_are_unbatched(self):
        """Test that parameters cannot carry a batch axis"""
        with pytest.raises(AutodiffError, match="unbatched"):
            Tape().parameter("a", np.zeros((3, 2, 2)))

    def test_operands_from_other_tape(self):
        """Test mixing nodes from two tapes"""
        a = Tape().parameter("a", np.eye(2))
        b = Tape().parameter("b", np.eye(2))
        with pytest.raises(AutodiffError, match="belongs to another tape"):
            add(a, b)


class TestBackward:
    def test_entry_indicator(self):
        """Test that d entry(P, 0, 0) / dP is the indicator of (0, 0)"""
        tape = Tape()
        p = tape.parameter("P", np.arange(6.0).reshape(2, 3))
        grads = backward(tape, entry(p, 0, 0))
        expected = np.zeros((2, 3))
        expected[0, 0] = 1.0
        np.testing.assert_array_equal(grads["P"], expected)

    def test_mean_of_squares(self):
        """Test d mean(A_ij^2) / dA = (2/N) A"""
        values = np.array([[1.0, -2.0], [3.0, 0.5]])
        tape = Tape()
        a = tape.parameter("A", values)
        root = mean([square(entry(a, i, j)) for i in range(2) for j in range(2)])
        grads = backward(tape, root)
        np.testing.assert_allclose(grads["A"], 2.0 / 4.0 * values, rtol=0, atol=1e-15)

    def test_untouched_parameter_gets_zero(self):
        """Test that parameters off the root's path get zero gradients"""
        tape = Tape()
        a = tape.parameter("A", np.ones((2, 2)))
        tape.parameter("unused", np.ones((3, 1)))
        grads = backward(tape, entry(a, 1, 1))
        np.testing.assert_array_equal(grads["unused"], np.zeros((3, 1)))

    def test_root_must_be_scalar(self):
        """Test backward on a non-scalar root"""
        tape = Tape()
        a = tape.parameter("A", np.ones((2, 2)))
        with pytest.raises(NotScalarError):
            backward(tape, a)

    def test_root_from_other_tape(self):
        """Test backward with a root recorded elsewhere"""
        other = Tape()
        root = other.parameter("a", np.ones((1, 1)))
        with pytest.raises(AutodiffError):
            backward(Tape(), root)

    def test_accumulates_reuse(self):
        """Test that a parameter used several times sums its contributions"""
        tape = Tape()
        g = tape.parameter("g", np.array([[3.0]]))
        root = add(add(g, g), scale(2.0, g))  # 4g
        assert backward(tape, root)["g"][0, 0] == 4.0

    def test_linearity(self):
        """Test that backward of a sum of roots is the sum of backwards"""
        rng = np.random.default_rng(0)
        a_val = rng.standard_normal((3, 3))
        m_val = rng.standard_normal((3, 3))

        def build():
            tape = Tape()
            a = tape.parameter("A", a_val)
            m = tape.parameter("M", m_val)
            prod = matmul(a, m)
            return tape, square(entry(prod, 0, 1)), entry(hadamard(a, m), 2, 2)

        tape, r1, r2 = build()
        total = backward(tape, add(r1, r2))
        tape1, r1, _ = build()
        tape2, _, r2 = build()
        g1 = backward(tape1, r1)
        g2 = backward(tape2, r2)
        for name in ("A", "M"):
            np.testing.assert_allclose(total[name], g1[name] + g2[name], atol=1e-14)

    def test_replay_is_bit_identical(self):
        """Test determinism of repeated backward passes"""
        rng = np.random.default_rng(1)
        a_val = rng.standard_normal((4, 4))
        z_val = rng.standard_normal((5, 4, 3))

        def grads():
            tape = Tape()
            a = tape.parameter("A", a_val)
            z = tape.constant(z_val)
            out = matmul(a, z)
            return backward(tape, mean(square(entry(out, 1, 2))))["A"]

        np.testing.assert_array_equal(grads(), grads())

    def test_batched_gradient_reduces_over_batch(self):
        """Test that a broadcast parameter sums the per-example gradients"""
        rng = np.random.default_rng(2)
        a_val = rng.standard_normal((2, 2))
        batch = rng.standard_normal((3, 2, 2))

        tape = Tape()
        a = tape.parameter("A", a_val)
        z = tape.constant(batch)
        batched = backward(tape, mean(entry(matmul(a, z), 0, 1)))["A"]

        per_example = []
        for b in range(3):
            tape = Tape()
            a = tape.parameter("A", a_val)
            z = tape.constant(batch[b])
            per_example.append(backward(tape, entry(matmul(a, z), 0, 1))["A"])
        np.testing.assert_allclose(batched, np.mean(per_example, axis=0), atol=1e-15)


class TestUnbroadcast:
    def test_reduces_batch_and_unit_axes(self):
        """Test summing down to a broadcast shape"""
        grad = np.ones((4, 3, 2))
        np.testing.assert_array_equal(unbroadcast(grad, (3, 2)), 4 * np.ones((3, 2)))
        np.testing.assert_array_equal(
            unbroadcast(grad, (4, 1, 1)), 6 * np.ones((4, 1, 1))
        )


class TestGradcheck:
    def test_numerical_gradient_of_quadratic(self):
        """Test central differences on sum(M^2)"""
        value = np.array([[1.0, 2.0], [-1.0, 0.5]])
        numeric = numerical_gradient(lambda m: float(np.sum(m**2)), value)
        np.testing.assert_allclose(numeric, 2 * value, atol=1e-8)

    def test_relative_error(self):
        """Test the max(1, |numeric|) normalisation"""
        assert relative_error(np.array([[1.0]]), np.array([[1.0]])) == 0.0
        assert relative_error(np.array([[0.5]]), np.array([[0.0]])) == 0.5
        assert relative_error(np.array([[110.0]]), np.array([[100.0]])) == pytest.approx(0.1)


class TestExceptions:
    def test_shape_mismatch_pickles(self):
        """Test that shape errors survive a process boundary"""
        error = ShapeMismatchError("matmul", (2, 3), (2, 3))
        restored = pickle.loads(pickle.dumps(error))
        assert restored.op == "matmul"
        assert restored.shapes == ((2, 3), (2, 3))
        assert str(restored) == str(error)

    def test_transpose_roundtrip(self):
        """Test transpose of transpose"""
        tape = Tape()
        a = tape.parameter("A", np.arange(6.0).reshape(2, 3))
        np.testing.assert_array_equal(transpose(transpose(a)).value, a.value)

    def test_sub_shape_error(self):
        """Test that sub names itself in shape errors"""
        tape = Tape()
        with pytest.raises(ShapeMismatchError, match="sub"):
            sub(tape.constant(np.ones((2, 2))), tape.constant(np.ones((2, 1))))
