"""
Tests for L{pyidql.awr}.
"""
import math
import unittest

import numpy as np
from hypothesis import given, strategies as st

from pyidql.awr import awr_weights, critic_awr_weights, GaussianPolicy, fit_gaussian_awr
from pyidql.exceptions import EmptyDataset

from .base import TestBase


class SumCritic(object):
    """
    A critic with Q(s, a) = a1 + a2 and a constant value.
    """
    def __init__(self, v):
        self.v = v

    def q_min(self, states, actions):
        return np.sum(actions, axis=1)

    def value(self, states):
        return np.full(len(states), self.v)


class AWRWeightTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.awr.awr_weights} and L{pyidql.awr.critic_awr_weights}.
    """
    def test_weights(self):
        """
        Test the weights against their definition.
        """
        q = np.array([0.0, 1.0, 2.0])
        np.testing.assert_allclose(awr_weights(q, 1.0, 2.0), np.exp(2.0 * (q - 1.0)))
        np.testing.assert_allclose(awr_weights(q, 1.0, 0.0), np.ones(3))
        np.testing.assert_allclose(awr_weights(q, np.array([0.0, 0.0, 2.0]), 1.0), [1.0, math.e, 1.0])

    @given(
        alpha=st.floats(min_value=0.0, max_value=100.0),
        advantage=st.floats(min_value=-1e6, max_value=1e6),
    )
    def test_capped(self, alpha, advantage):
        """
        Test that weights never exceed the cap and never overflow.
        """
        w = awr_weights(np.array([advantage]), 0.0, alpha, max_weight=20.0)
        self.assertTrue(np.all(np.isfinite(w)))
        self.assertTrue(np.all(w >= 0.0))
        self.assertTrue(np.all(w <= 20.0 * (1 + 1e-12)))

    def test_invalid(self):
        """
        Test that invalid parameters are rejected.
        """
        with self.assertRaises(ValueError):
            awr_weights([1.0], 0.0, -1.0)
        with self.assertRaises(ValueError):
            awr_weights([1.0], 0.0, 1.0, max_weight=0.0)

    def test_critic_weights(self):
        """
        Test weights computed from a critic.
        """
        actions = np.array([[0.0, 0.5], [1.0, 1.0]])
        w = critic_awr_weights(SumCritic(1.0), np.zeros((2, 1)), actions, alpha=1.0)
        np.testing.assert_allclose(w, [math.exp(-0.5), math.e])


class GaussianAWRTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.awr.fit_gaussian_awr} and L{pyidql.awr.GaussianPolicy}.
    """
    def test_unweighted(self):
        """
        Test that beta = 0 fits the plain maximum likelihood Gaussian.
        """
        actions = self.get_rng().standard_normal((50, 2))
        policy = fit_gaussian_awr(actions, self.get_rng(1).standard_normal(50), beta=0.0, ridge=0.0)
        np.testing.assert_allclose(policy.mean, np.mean(actions, axis=0))
        np.testing.assert_allclose(policy.cov, np.cov(actions, rowvar=False, bias=True), atol=1e-12)
        self.assertEqual(policy.beta, 0.0)

    def test_weighted(self):
        """
        Test the weighted fit.
        """
        actions = np.array([[0.0], [1.0]])
        policy = fit_gaussian_awr(actions, [0.0, math.log(3.0)], beta=1.0, ridge=0.0)
        # weights 1/4 and 3/4
        np.testing.assert_allclose(policy.mean, [0.75])
        np.testing.assert_allclose(policy.cov, [[0.1875]])
        # a high temperature selects the best action
        policy = fit_gaussian_awr(actions, [0.0, 1.0], beta=1000.0)
        np.testing.assert_allclose(policy.mean, [1.0])
        self.assertLess(policy.cov[0, 0], 1e-5)

    def test_invalid(self):
        """
        Test that invalid fits are rejected.
        """
        with self.assertRaises(EmptyDataset):
            fit_gaussian_awr(np.zeros((0, 2)), [], beta=1.0)
        with self.assertRaises(ValueError):
            fit_gaussian_awr(np.zeros((3, 2)), [0.0, 1.0], beta=1.0)
        with self.assertRaises(ValueError):
            fit_gaussian_awr(np.zeros((3, 2)), [0.0, 1.0, 2.0], beta=-1.0)

    def test_sample(self):
        """
        Test sampling from a Gaussian policy.
        """
        policy = GaussianPolicy([1.0, -2.0], np.diag([0.25, 1.0]), beta=3.0)
        samples = policy.sample([0.0], self.get_rng(), n=5000)
        self.assertEqual(samples.shape, (5000, 2))
        np.testing.assert_allclose(np.mean(samples, axis=0), [1.0, -2.0], atol=0.05)
        np.testing.assert_allclose(np.var(samples, axis=0), [0.25, 1.0], atol=0.06)
        self.assertIn("beta=3.0", repr(policy))
