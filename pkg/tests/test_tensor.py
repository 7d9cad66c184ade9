"""
Tests for L{pyidql.tensor}.
"""
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from pyidql import tensor
from pyidql.tensor import Tensor
from pyidql.exceptions import ShapeMismatch, TapeConsumed

from .base import TestBase


class TensorTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.tensor}.
    """
    def test_basic_properties(self):
        """
        Test the basic properties of a L{pyidql.tensor.Tensor}.
        """
        t = Tensor([[1, 2, 3], [4, 5, 6]])
        self.assertEqual(t.shape, (2, 3))
        self.assertEqual(t.size, 6)
        self.assertEqual(t.data.dtype, np.float64)
        self.assertTrue(t.is_leaf)
        self.assertFalse(t.requires_grad)
        self.assertIsNone(t.grad)
        copy = t.numpy()
        copy[0, 0] = 100.0
        self.assertEqual(t.data[0, 0], 1.0)
        self.assertIn("shape=(2, 3)", repr(t))

    def test_item(self):
        """
        Test L{pyidql.tensor.Tensor.item}.
        """
        self.assertEqual(Tensor(3.5).item(), 3.5)
        self.assertEqual(Tensor([[2.0]]).item(), 2.0)
        with self.assertRaises(ShapeMismatch):
            Tensor([1.0, 2.0]).item()

    def test_operators(self):
        """
        Test the operator overloads.
        """
        a = Tensor([1.0, 2.0])
        b = Tensor([3.0, 5.0])
        np.testing.assert_allclose((a + b).data, [4.0, 7.0])
        np.testing.assert_allclose((a - b).data, [-2.0, -3.0])
        np.testing.assert_allclose((a * b).data, [3.0, 10.0])
        np.testing.assert_allclose((-a).data, [-1.0, -2.0])
        np.testing.assert_allclose((1.0 + a).data, [2.0, 3.0])
        np.testing.assert_allclose((1.0 - a).data, [0.0, -1.0])
        np.testing.assert_allclose((2.0 * a).data, [2.0, 4.0])
        m = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_allclose((m @ Tensor([[1.0], [1.0]])).data, [[3.0], [7.0]])

    def test_no_recording_without_grad(self):
        """
        Test that operations on constants are not recorded.
        """
        out = tensor.add(Tensor([1.0]), Tensor([2.0]))
        self.assertTrue(out.is_leaf)
        self.assertFalse(out.requires_grad)
        # backward on a constant loss is a no-op
        tensor.backward(tensor.sum(out))

    def test_shape_mismatch(self):
        """
        Test that non-conforming shapes raise L{pyidql.exceptions.ShapeMismatch}.
        """
        with self.assertRaises(ShapeMismatch):
            tensor.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
        with self.assertRaises(ShapeMismatch):
            tensor.sub(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
        with self.assertRaises(ShapeMismatch):
            tensor.mul(Tensor(np.ones(2)), Tensor(np.ones(5)))
        with self.assertRaises(ShapeMismatch):
            tensor.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with self.assertRaises(ShapeMismatch):
            tensor.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))
        with self.assertRaises(ShapeMismatch):
            tensor.reshape(Tensor(np.ones(6)), (4, 2))
        with self.assertRaises(ShapeMismatch):
            tensor.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=-1)
        with self.assertRaises(ShapeMismatch):
            tensor.squared_error(Tensor(np.ones(2)), Tensor(np.ones((2, 1))))
        with self.assertRaises(ShapeMismatch):
            tensor.layer_norm(Tensor(np.ones((2, 3))), gamma=Tensor(np.ones(4)))

    def test_broadcast_gradient(self):
        """
        Test that broadcast gradients are summed back to the operand shape.
        """
        x = Tensor(np.ones((4, 3)), requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        tensor.backward(tensor.sum(tensor.add(x, b)))
        np.testing.assert_allclose(x.grad, np.ones((4, 3)))
        np.testing.assert_allclose(b.grad, np.full(3, 4.0))

    def test_gradient_accumulates(self):
        """
        Test that a tensor used twice receives both gradient contributions.
        """
        x = Tensor([2.0, 3.0], requires_grad=True)
        tensor.backward(tensor.sum(tensor.mul(x, x)))
        np.testing.assert_allclose(x.grad, [4.0, 6.0])
        # a second graph accumulates into the same buffer
        tensor.backward(tensor.sum(x))
        np.testing.assert_allclose(x.grad, [5.0, 7.0])
        x.zero_grad()
        self.assertIsNone(x.grad)

    def test_backward_consumes_graph(self):
        """
        Test that a graph can only be backpropagated once.
        """
        x = Tensor([1.0, 2.0], requires_grad=True)
        loss = tensor.mean(tensor.mul(x, x))
        loss.backward()
        with self.assertRaises(TapeConsumed):
            tensor.backward(loss)

    def test_backward_requires_scalar(self):
        """
        Test that backward rejects non-scalar losses.
        """
        x = Tensor([1.0, 2.0], requires_grad=True)
        with self.assertRaises(ShapeMismatch):
            tensor.backward(tensor.mul(x, x))

    def test_detach(self):
        """
        Test L{pyidql.tensor.detach}.
        """
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = tensor.detach(tensor.mul(x, x))
        self.assertFalse(y.requires_grad)
        self.assertTrue(y.is_leaf)
        tensor.backward(tensor.sum(tensor.add(tensor.mul(y, x), x)))
        # d/dx (y * x + x) with constant y
        np.testing.assert_allclose(x.grad, [2.0, 5.0])

    def test_elementwise_gradients(self):
        """
        Compare the gradients of the elementwise operations with finite differences.
        """
        rng = self.get_rng()
        x = rng.normal(size=(3, 4))
        other = rng.normal(size=(3, 4))
        self.check_gradient(lambda t: tensor.sum(tensor.mul(t, other)), x)
        self.check_gradient(lambda t: tensor.sum(tensor.sub(other, t)), x)
        self.check_gradient(lambda t: tensor.sum(tensor.scale(t, -2.5)), x)
        self.check_gradient(lambda t: tensor.mean(tensor.mish(t)), x)
        self.check_gradient(lambda t: tensor.mean(tensor.gelu(t)), x)
        self.check_gradient(lambda t: tensor.mean(tensor.squared_error(t, other)), x)
        self.check_gradient(lambda t: tensor.sum(tensor.apply(t, np.exp, np.exp)), x)

    def test_relu_gradient(self):
        """
        Test the ReLU gradient away from zero.
        """
        x = Tensor([-1.0, 0.5, 2.0], requires_grad=True)
        tensor.backward(tensor.sum(tensor.relu(x)))
        np.testing.assert_allclose(x.grad, [0.0, 1.0, 1.0])

    def test_matmul_gradient(self):
        """
        Compare the matmul gradients with finite differences.
        """
        rng = self.get_rng()
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        self.check_gradient(lambda t: tensor.sum(tensor.mul(tensor.matmul(t, b), tensor.matmul(t, b))), a)
        self.check_gradient(lambda t: tensor.mean(tensor.matmul(a, t)), b)

    def test_structural_gradients(self):
        """
        Compare the gradients of reshape, concat, sum and mean with finite differences.
        """
        rng = self.get_rng()
        x = rng.normal(size=(2, 3))
        other = rng.normal(size=(2, 2))
        weights = rng.normal(size=(2, 5))
        self.check_gradient(lambda t: tensor.sum(tensor.mul(tensor.concat([t, other], axis=-1), weights)), x)
        self.check_gradient(lambda t: tensor.sum(tensor.mul(tensor.reshape(t, (3, 2)), x.reshape(3, 2))), x)
        self.check_gradient(lambda t: tensor.sum(tensor.mul(tensor.sum(t, axis=1), [1.0, -2.0])), x)
        self.check_gradient(lambda t: tensor.sum(tensor.mul(tensor.mean(t, axis=0), [1.0, 2.0, 3.0])), x)

    def test_layer_norm(self):
        """
        Test L{pyidql.tensor.layer_norm}.
        """
        rng = self.get_rng()
        x = rng.normal(loc=3.0, scale=2.0, size=(5, 8))
        out = tensor.layer_norm(Tensor(x)).data
        np.testing.assert_allclose(out.mean(axis=-1), np.zeros(5), atol=1e-10)
        np.testing.assert_allclose(out.std(axis=-1), np.ones(5), atol=1e-6)
        weights = rng.normal(size=(5, 8))
        self.check_gradient(lambda t: tensor.sum(tensor.mul(tensor.layer_norm(t), weights)), x, atol=1e-4)
        gamma = Tensor(rng.normal(size=8), requires_grad=True)
        beta = Tensor(rng.normal(size=8), requires_grad=True)
        tensor.backward(tensor.sum(tensor.layer_norm(Tensor(x), gamma=gamma, beta=beta)))
        np.testing.assert_allclose(beta.grad, np.full(8, 5.0))
        self.assertEqual(gamma.grad.shape, (8, ))

    def test_dropout(self):
        """
        Test L{pyidql.tensor.dropout}.
        """
        x = Tensor(np.ones((200, 50)))
        # eval mode and rate 0 are the identity
        self.assertIs(tensor.dropout(x, 0.5, None, train=False), x)
        self.assertIs(tensor.dropout(x, 0.0, self.get_rng(), train=True), x)
        out = tensor.dropout(x, 0.25, self.get_rng(), train=True).data
        kept = out != 0
        np.testing.assert_allclose(out[kept], 1.0 / 0.75)
        self.assertAlmostEqual(float(np.mean(kept)), 0.75, delta=0.02)
        # the same stream yields the same mask
        again = tensor.dropout(x, 0.25, self.get_rng(), train=True).data
        np.testing.assert_array_equal(out, again)
        with self.assertRaises(ValueError):
            tensor.dropout(x, 1.0, self.get_rng(), train=True)
        with self.assertRaises(ValueError):
            tensor.dropout(x, 0.5, None, train=True)

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(st.floats(min_value=-10, max_value=10), min_size=1, max_size=8),
        st.floats(min_value=-3, max_value=3),
    )
    def test_scale_is_linear(self, values, factor):
        """
        Test that the gradient of a scaled sum is the scale factor.
        """
        x = Tensor(values, requires_grad=True)
        tensor.backward(tensor.sum(tensor.scale(x, factor)))
        np.testing.assert_allclose(x.grad, np.full(len(values), factor))
