"""
Tests for L{pyidql.modifiable}.
"""
import unittest

import numpy as np

from pyidql.modifiable import ModifiableMixIn
from pyidql.exceptions import NonMutable

from .base import TestBase


class Weights(ModifiableMixIn):
    """
    A vector of weights updated in place, like a parameter set.

    @ivar values: the weights
    @type values: L{numpy.ndarray}
    @ivar step_count: number of updates applied
    @type step_count: L{int}
    """
    def __init__(self, n=3):
        ModifiableMixIn.__init__(self)
        self.values = np.zeros(n)
        self.step_count = 0

    def step(self, delta):
        """
        Add delta to the weights.
        """
        self.ensure_mutable()
        self.values += delta
        self.step_count += 1
        self.mark_dirty()

    def save(self):
        """
        Pretend to write a checkpoint.

        @return: a copy of the weights
        @rtype: L{numpy.ndarray}
        """
        snapshot = self.values.copy()
        self.after_flush()
        return snapshot


class ModifiableTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.modifiable.ModifiableMixIn}.
    """
    def test_dirty(self):
        """
        Test that updates mark the object as dirty until it is saved.
        """
        weights = Weights()
        self.assertFalse(weights.dirty)
        weights.step(1.0)
        self.assertTrue(weights.dirty)
        np.testing.assert_array_equal(weights.save(), np.ones(3))
        self.assertFalse(weights.dirty)
        weights.dirty = True
        self.assertTrue(weights.dirty)
        weights.dirty = False
        self.assertFalse(weights.dirty)

    def test_freeze(self):
        """
        Test that frozen objects reject updates and stay unchanged.
        """
        weights = Weights()
        weights.step(0.5)
        self.assertTrue(weights.mutable)
        weights.freeze()
        self.assertFalse(weights.mutable)
        with self.assertRaises(NonMutable):
            weights.step(1.0)
        np.testing.assert_array_equal(weights.values, np.full(3, 0.5))
        self.assertEqual(weights.step_count, 1)
        # saving a frozen object is still allowed
        weights.save()
        self.assertFalse(weights.dirty)
