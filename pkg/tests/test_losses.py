"""
Tests for L{pyidql.losses}.
"""
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from pyidql import tensor
from pyidql.losses import (
    ConvexLoss, LossKind, DiscreteActionDistribution, solve_value, implicit_policy,
    kl_behavior_to_awr, exponential_value, loss_value, loss_deriv, implicit_weight,
)
from pyidql.oracles import oracle_value
from pyidql.exceptions import LossOverflow, InvalidDistribution, DegenerateWeights

from .base import TestBase


TAUS = st.floats(min_value=0.05, max_value=0.95)
ALPHAS = st.floats(min_value=0.05, max_value=3.0)
SEEDS = st.integers(min_value=0, max_value=2 ** 31)
SIZES = st.integers(min_value=1, max_value=16)


class ConvexLossTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.losses.ConvexLoss}.
    """
    def test_construction(self):
        """
        Test constructing losses and their parameter checks.
        """
        self.assertEqual(ConvexLoss("expectile", 0.7).kind, LossKind.EXPECTILE)
        self.assertEqual(ConvexLoss.quantile(0.3).kind, LossKind.QUANTILE)
        self.assertEqual(ConvexLoss.exponential(2).param, 2.0)
        self.assertEqual(ConvexLoss.expectile(0.7), ConvexLoss(LossKind.EXPECTILE, 0.7))
        self.assertEqual(hash(ConvexLoss.expectile(0.7)), hash(ConvexLoss("EXPECTILE", 0.7)))
        self.assertNotEqual(ConvexLoss.expectile(0.7), ConvexLoss.quantile(0.7))
        for kind, param in (("expectile", 0.0), ("expectile", 1.0), ("quantile", -0.1), ("exponential", 0.0), ("exponential", float("inf"))):
            with self.assertRaises(ValueError):
                ConvexLoss(kind, param)
        with self.assertRaises(ValueError):
            ConvexLoss("huber", 0.5)
        with self.assertRaises(ValueError):
            ConvexLoss("expectile", 0.5, epsilon=0.0)

    def test_parse(self):
        """
        Test L{pyidql.losses.ConvexLoss.parse} and L{pyidql.losses.ConvexLoss.to_string}.
        """
        loss = ConvexLoss.parse("expectile:0.9")
        self.assertEqual(loss, ConvexLoss.expectile(0.9))
        self.assertEqual(loss.to_string(), "expectile:0.9")
        self.assertEqual(ConvexLoss.parse(loss.to_string()), loss)
        self.assertEqual(ConvexLoss.parse("exponential:1.5"), ConvexLoss.exponential(1.5))
        self.assertIn("quantile:0.25", repr(ConvexLoss.quantile(0.25)))
        for s in ("expectile", "expectile:abc", "foo:0.5", "quantile:1.5"):
            with self.assertRaises(ValueError):
                ConvexLoss.parse(s)

    def test_values(self):
        """
        Test the values of the loss families.
        """
        u = np.array([-2.0, 0.0, 3.0])
        np.testing.assert_allclose(ConvexLoss.expectile(0.8).value(u), [0.2 * 4.0, 0.0, 0.8 * 9.0])
        np.testing.assert_allclose(ConvexLoss.quantile(0.8).value(u), [0.2 * 2.0, 0.0, 0.8 * 3.0])
        np.testing.assert_allclose(
            ConvexLoss.exponential(0.5).value(u),
            [np.exp(-1.0) + 1.0, 1.0, np.exp(1.5) - 1.5],
        )
        self.assertEqual(loss_value(ConvexLoss.expectile(0.5), 2.0), 2.0)

    def test_derivatives(self):
        """
        Test that the derivatives match finite differences and vanish at zero.
        """
        u = np.array([-1.7, -0.3, 0.4, 2.2])
        for loss in (ConvexLoss.expectile(0.7), ConvexLoss.quantile(0.3), ConvexLoss.exponential(1.3)):
            self.assertEqual(loss_deriv(loss, 0.0), 0.0)
            h = 1e-6
            numeric = (loss.value(u + h) - loss.value(u - h)) / (2 * h)
            np.testing.assert_allclose(loss.deriv(u), numeric, rtol=1e-5, atol=1e-6)

    def test_tensor_value(self):
        """
        Test that the loss can be backpropagated through.
        """
        loss = ConvexLoss.expectile(0.9)
        u = tensor.Tensor([-1.0, 2.0], requires_grad=True)
        tensor.backward(tensor.sum(loss.tensor_value(u)))
        np.testing.assert_allclose(u.grad, [2 * 0.1 * -1.0, 2 * 0.9 * 2.0])

    def test_overflow(self):
        """
        Test that the exponential loss refuses to overflow.
        """
        loss = ConvexLoss.exponential(10.0)
        with self.assertRaises(LossOverflow):
            loss.value(np.array([100.0]))
        with self.assertRaises(LossOverflow):
            loss.deriv(100.0)
        with self.assertRaises(LossOverflow):
            loss.weight(100.0, 0.0)

    def test_weights(self):
        """
        Test the implicit weights.
        """
        q = np.array([-1.0, 0.0, 2.0])
        np.testing.assert_allclose(ConvexLoss.expectile(0.8).weight(q, 0.5), [0.2, 0.2, 0.8])
        np.testing.assert_allclose(ConvexLoss.quantile(0.8).weight(q, 0.0), [0.2, 0.8 / 1e-8, 0.4])
        alpha = 0.5
        w = ConvexLoss.exponential(alpha).weight(q, 0.0)
        self.assertAlmostEqual(w[1], alpha * alpha)
        self.assertAlmostEqual(w[0], alpha * abs(np.expm1(-alpha)) / 1.0)
        self.assertAlmostEqual(implicit_weight(ConvexLoss.exponential(alpha), 2.0, 0.0), w[2])
        self.assertTrue(np.all(ConvexLoss.exponential(alpha).weight(np.linspace(-3, 3, 41), 0.1) >= 0))
        with self.assertRaises(ValueError):
            ConvexLoss.expectile(0.5).weight([np.nan], 0.0)
        with self.assertRaises(ValueError):
            ConvexLoss.expectile(0.5).weight([1.0], np.inf)

    def test_exponential_weight_continuous(self):
        """
        Test that the exponential weight approaches alpha^2 at zero.
        """
        loss = ConvexLoss.exponential(1.7)
        self.assertAlmostEqual(float(loss.weight(1e-6, 0.0)), 1.7 ** 2, places=4)
        self.assertAlmostEqual(float(loss.weight(-1e-6, 0.0)), 1.7 ** 2, places=4)


class DistributionTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.losses.DiscreteActionDistribution}.
    """
    def test_validation(self):
        """
        Test that invalid distributions are rejected.
        """
        with self.assertRaises(InvalidDistribution):
            DiscreteActionDistribution([], [])
        with self.assertRaises(InvalidDistribution):
            DiscreteActionDistribution([1.0, 2.0], [1.0])
        with self.assertRaises(InvalidDistribution):
            DiscreteActionDistribution([1.0, 2.0], [0.6, 0.6])
        with self.assertRaises(InvalidDistribution):
            DiscreteActionDistribution([1.0, 2.0], [1.5, -0.5])
        with self.assertRaises(InvalidDistribution):
            DiscreteActionDistribution([1.0, np.nan], [0.5, 0.5])
        with self.assertRaises(InvalidDistribution):
            DiscreteActionDistribution.from_weights([1.0], [0.0])
        with self.assertRaises(InvalidDistribution):
            DiscreteActionDistribution.uniform([])

    def test_constructors(self):
        """
        Test the alternative constructors.
        """
        dist = DiscreteActionDistribution.uniform([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(dist.probs, 0.25)
        self.assertEqual(len(dist), 4)
        self.assertAlmostEqual(dist.mean(), 2.5)
        dist = DiscreteActionDistribution.from_weights([0.0, 1.0], [1.0, 3.0])
        np.testing.assert_allclose(dist.probs, [0.25, 0.75])
        dist = self.random_distribution(n=7)
        self.assertEqual(len(dist), 7)
        self.assertTrue(np.all(dist.q_values >= -5.0) and np.all(dist.q_values <= 5.0))
        with self.assertRaises(ValueError):
            dist.q_values[0] = 1.0

    def test_support(self):
        """
        Test that the support merges duplicate values and drops zero mass.
        """
        dist = DiscreteActionDistribution([3.0, 1.0, 3.0, 2.0], [0.25, 0.25, 0.5, 0.0])
        values, masses = dist.support()
        np.testing.assert_array_equal(values, [1.0, 3.0])
        np.testing.assert_allclose(masses, [0.25, 0.75])


class ValueSolverTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.losses.solve_value} and the implicit actor.
    """
    def test_expectile_half_is_mean(self):
        """
        Test that the 0.5-expectile is the mean.
        """
        dist = self.random_distribution(n=9)
        self.assertAlmostEqual(solve_value(ConvexLoss.expectile(0.5), dist), dist.mean(), places=10)

    def test_quantile_median(self):
        """
        Test quantile values, including the midpoint of a non-unique minimizer.
        """
        dist = DiscreteActionDistribution([1.0, 2.0, 3.0], [0.2, 0.3, 0.5])
        self.assertEqual(solve_value(ConvexLoss.quantile(0.3), dist), 2.0)
        self.assertEqual(solve_value(ConvexLoss.quantile(0.9), dist), 3.0)
        self.assertEqual(solve_value(ConvexLoss.quantile(0.1), dist), 1.0)
        dist = DiscreteActionDistribution.uniform([1.0, 3.0])
        self.assertEqual(solve_value(ConvexLoss.quantile(0.5), dist), 2.0)

    def test_single_action(self):
        """
        Test that a single action's value is its Q-value.
        """
        dist = DiscreteActionDistribution([4.2], [1.0])
        for loss in (ConvexLoss.expectile(0.9), ConvexLoss.quantile(0.9), ConvexLoss.exponential(2.0)):
            self.assertAlmostEqual(solve_value(loss, dist), 4.2)
            np.testing.assert_allclose(implicit_policy(loss, dist), [1.0])

    def test_exponential_value(self):
        """
        Test the closed form of the exponential value.
        """
        dist = DiscreteActionDistribution([0.0, 1.0], [0.5, 0.5])
        expected = np.log(0.5 + 0.5 * np.exp(2.0)) / 2.0
        self.assertAlmostEqual(exponential_value(2.0, dist), expected)
        self.assertAlmostEqual(solve_value(ConvexLoss.exponential(2.0), dist), expected)
        with self.assertRaises(ValueError):
            exponential_value(0.0, dist)

    def test_exponential_normalization(self):
        """
        Test that the exponential loss is 1 at zero and its expected value is at least 1 at V*.
        """
        loss = ConvexLoss.exponential(2.0)
        self.assertEqual(loss_value(loss, 0.0), 1.0)
        self.assertEqual(loss_deriv(loss, 0.0), 0.0)
        point = DiscreteActionDistribution([0.7], [1.0])
        v = solve_value(loss, point)
        self.assertAlmostEqual(v, 0.7)
        self.assertAlmostEqual(float(np.dot(point.probs, loss.value(point.q_values - v))), 1.0)
        dist = DiscreteActionDistribution([0.0, 1.0], [0.5, 0.5])
        v = solve_value(loss, dist)
        self.assertGreater(float(np.dot(dist.probs, loss.value(dist.q_values - v))), 1.0)

    def test_solve_value_type(self):
        """
        Test that L{pyidql.losses.solve_value} rejects other types.
        """
        with self.assertRaises(InvalidDistribution):
            solve_value(ConvexLoss.expectile(0.5), [1.0, 2.0])

    def test_degenerate_weights(self):
        """
        Test that an all-zero weight vector raises L{pyidql.exceptions.DegenerateWeights}.
        """
        class ZeroWeights(object):
            def weight(self, q, v):
                return np.zeros_like(q)

        dist = DiscreteActionDistribution([0.0, 1.0], [0.5, 0.5])
        with self.assertRaises(DegenerateWeights):
            implicit_policy(ZeroWeights(), dist, v=0.5)
        # actions without behavior mass keep zero probability
        dist = DiscreteActionDistribution([0.0, 1.0], [1.0, 0.0])
        np.testing.assert_allclose(implicit_policy(ConvexLoss.expectile(0.5), dist), [1.0, 0.0])

    def test_kl_identity(self):
        """
        Test that both forms of KL(mu || pi_exp) agree.
        """
        dist = self.random_distribution(n=6)
        for alpha in (0.1, 1.0, 3.0):
            direct, closed = kl_behavior_to_awr(alpha, dist)
            self.assertAlmostEqual(direct, closed, places=9)
            self.assertGreaterEqual(direct, -1e-12)
        self.assertEqual(kl_behavior_to_awr(0.0, dist), (0.0, 0.0))
        with self.assertRaises(ValueError):
            kl_behavior_to_awr(-1.0, dist)

    @settings(max_examples=60, deadline=None)
    @given(TAUS, SEEDS, SIZES)
    def test_expectile_matches_oracle(self, tau, seed, n):
        """
        Test that the expectile solver matches golden-section search and the implicit actor fixed point.
        """
        dist = DiscreteActionDistribution.random(np.random.default_rng(seed), n)
        loss = ConvexLoss.expectile(tau)
        v = solve_value(loss, dist)
        self.assertAlmostEqual(v, oracle_value("expectile", tau, dist.q_values, dist.probs), delta=1e-7)
        pi = implicit_policy(loss, dist, v=v)
        self.assertAlmostEqual(float(np.dot(pi, dist.q_values)), v, delta=1e-8)
        self.assertAlmostEqual(float(np.sum(pi)), 1.0, delta=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(ALPHAS, SEEDS, SIZES)
    def test_exponential_matches_oracle(self, alpha, seed, n):
        """
        Test that the exponential solver matches golden-section search and the implicit actor fixed point.
        """
        dist = DiscreteActionDistribution.random(np.random.default_rng(seed), n)
        loss = ConvexLoss.exponential(alpha)
        v = solve_value(loss, dist)
        self.assertAlmostEqual(v, oracle_value("exponential", alpha, dist.q_values, dist.probs), delta=1e-6)
        pi = implicit_policy(loss, dist, v=v)
        self.assertAlmostEqual(float(np.dot(pi, dist.q_values)), v, delta=1e-7)

    @settings(max_examples=60, deadline=None)
    @given(TAUS, SEEDS, SIZES)
    def test_quantile_is_minimizer(self, tau, seed, n):
        """
        Test that the quantile value minimizes the expected loss.
        """
        dist = DiscreteActionDistribution.random(np.random.default_rng(seed), n)
        loss = ConvexLoss.quantile(tau)
        v = solve_value(loss, dist)
        best = dist.expected_loss(loss, v)
        for candidate in np.linspace(np.min(dist.q_values), np.max(dist.q_values), 101):
            self.assertLessEqual(best, dist.expected_loss(loss, candidate) + 1e-9)

    @settings(max_examples=40, deadline=None)
    @given(SEEDS, SIZES)
    def test_expectile_monotone_in_tau(self, seed, n):
        """
        Test that the expectile value does not decrease with tau and stays within the Q range.
        """
        dist = DiscreteActionDistribution.random(np.random.default_rng(seed), n)
        values = [solve_value(ConvexLoss.expectile(tau), dist) for tau in (0.1, 0.3, 0.5, 0.7, 0.9)]
        for a, b in zip(values, values[1:]):
            self.assertLessEqual(a, b + 1e-12)
        self.assertGreaterEqual(values[0], np.min(dist.q_values) - 1e-12)
        self.assertLessEqual(values[-1], np.max(dist.q_values) + 1e-12)
