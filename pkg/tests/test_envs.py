"""
Tests for L{pyidql.envs}.
"""
import unittest

import numpy as np

from pyidql import constants
from pyidql.envs import (
    one_hot, decode_discrete, DiscreteBandit, ContinuousBandit2D, GridWorld, Move, make_env,
)

from .base import TestBase


class ActionCodingTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.envs.one_hot} and L{pyidql.envs.decode_discrete}.
    """
    def test_one_hot(self):
        """
        Test L{pyidql.envs.one_hot}.
        """
        np.testing.assert_array_equal(one_hot(2, 4), [0.0, 0.0, 1.0, 0.0])
        self.assertEqual(one_hot(0, 1).dtype, np.dtype(constants.DTYPE))

    def test_decode(self):
        """
        Test L{pyidql.envs.decode_discrete}.
        """
        self.assertEqual(decode_discrete([0.1, 0.7, -3.0], 3), 1)
        self.assertEqual(decode_discrete(one_hot(3, 4), 4), 3)
        # ties go to the lowest index
        self.assertEqual(decode_discrete([0.5, 0.5, 0.1], 3), 0)
        with self.assertRaises(ValueError):
            decode_discrete([1.0, 0.0], 3)


class DiscreteBanditTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.envs.DiscreteBandit}.
    """
    def test_defaults(self):
        """
        Test the default bandit.
        """
        bandit = DiscreteBandit()
        self.assertEqual(bandit.n_arms, len(constants.BANDIT_MEANS))
        self.assertEqual(bandit.state_dim, 1)
        self.assertEqual(bandit.action_dim, bandit.n_arms)
        self.assertEqual(bandit.max_episode_steps, 1)
        np.testing.assert_allclose(bandit.behavior_probs, np.full(bandit.n_arms, 1.0 / bandit.n_arms))

    def test_step(self):
        """
        Test that every step ends the episode with the arm reward.
        """
        bandit = DiscreteBandit(reward_means=[1.0, 2.0, 3.0], noise_std=0.0)
        rng = self.get_rng()
        state = bandit.reset(rng)
        np.testing.assert_array_equal(state, [0.0])
        next_state, reward, done = bandit.step([0.0, 0.0, 1.0], rng)
        self.assertEqual(reward, 3.0)
        self.assertTrue(done)
        np.testing.assert_array_equal(next_state, [0.0])
        # any real vector is decoded by its argmax
        _, reward, _ = bandit.step([0.2, 0.9, 0.1], rng)
        self.assertEqual(reward, 2.0)

    def test_behavior(self):
        """
        Test that behavior actions follow the behavior probabilities.
        """
        bandit = DiscreteBandit(reward_means=[0.0, 1.0], behavior_probs=[0.2, 0.8])
        rng = self.get_rng()
        actions = np.array([bandit.behavior_action(rng) for _ in range(4000)])
        np.testing.assert_array_equal(np.sum(actions, axis=1), np.ones(4000))
        self.assertAlmostEqual(float(np.mean(actions[:, 1])), 0.8, delta=0.03)

    def test_canonical_action(self):
        """
        Test that actions are canonicalized to one-hot vectors.
        """
        bandit = DiscreteBandit()
        np.testing.assert_array_equal(bandit.canonical_action([0.3, 0.1, 0.2]), [1.0, 0.0, 0.0])

    def test_reward_distribution(self):
        """
        Test the arm-level reward distribution.
        """
        bandit = DiscreteBandit(reward_means=[1.0, 4.0], behavior_probs=[0.25, 0.75])
        dist = bandit.reward_distribution()
        np.testing.assert_allclose(dist.q_values, [1.0, 4.0])
        np.testing.assert_allclose(dist.probs, [0.25, 0.75])

    def test_invalid(self):
        """
        Test that invalid parameters are rejected.
        """
        with self.assertRaises(ValueError):
            DiscreteBandit(reward_means=[])
        with self.assertRaises(ValueError):
            DiscreteBandit(noise_std=-1.0)
        with self.assertRaises(ValueError):
            DiscreteBandit(reward_means=[1.0, 2.0], behavior_probs=[0.5, 0.6])
        with self.assertRaises(ValueError):
            DiscreteBandit(reward_means=[1.0, 2.0], behavior_probs=[1.0])

    def test_describe(self):
        """
        Test that the description contains the parameters.
        """
        description = DiscreteBandit(reward_means=[1.0, 2.0], noise_std=0.1).describe()
        self.assertEqual(description["env_id"], "bandit")
        self.assertEqual(description["reward_means"], [1.0, 2.0])
        self.assertEqual(description["noise_std"], 0.1)
        self.assertEqual(description["behavior_probs"], [0.5, 0.5])


class ContinuousBandit2DTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.envs.ContinuousBandit2D}.
    """
    def test_reward(self):
        """
        Test the reward a1 + a2.
        """
        self.assertEqual(ContinuousBandit2D.reward([0.25, 0.5]), 0.75)
        np.testing.assert_allclose(ContinuousBandit2D.reward([[0.0, 1.0], [1.0, 1.0]]), [1.0, 2.0])
        bandit = ContinuousBandit2D()
        rng = self.get_rng()
        bandit.reset(rng)
        _, reward, done = bandit.step(np.array([0.1, 0.3]), rng)
        self.assertAlmostEqual(reward, 0.4)
        self.assertTrue(done)

    def test_box(self):
        """
        Test the action box.
        """
        bandit = ContinuousBandit2D()
        np.testing.assert_array_equal(bandit.action_low, [0.0, 0.0])
        np.testing.assert_array_equal(bandit.action_high, [1.0, 1.0])

    def test_modes(self):
        """
        Test behavior samples, mode assignment and the best mode.
        """
        bandit = ContinuousBandit2D()
        self.assertEqual(bandit.best_mode(), 2)
        rng = self.get_rng()
        actions = np.array([bandit.behavior_action(rng) for _ in range(3000)])
        modes = bandit.nearest_mode(actions)
        counts = np.bincount(modes, minlength=3) / 3000.0
        np.testing.assert_allclose(counts, np.full(3, 1.0 / 3.0), atol=0.04)
        np.testing.assert_array_equal(bandit.nearest_mode(bandit.mode_centers), [0, 1, 2])

    def test_invalid(self):
        """
        Test that invalid parameters are rejected.
        """
        with self.assertRaises(ValueError):
            ContinuousBandit2D(mode_centers=[[0.0, 0.0, 0.0]])
        with self.assertRaises(ValueError):
            ContinuousBandit2D(mode_std=0.0)
        with self.assertRaises(ValueError):
            ContinuousBandit2D(mode_probs=[1.0, 0.0])


class GridWorldTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.envs.GridWorld}.
    """
    def test_defaults(self):
        """
        Test the default grid world.
        """
        grid = GridWorld()
        self.assertEqual(grid.n_states, 25)
        self.assertEqual(grid.n_actions, 4)
        self.assertEqual(grid.start, (0, 0))
        self.assertEqual(grid.goal, (4, 4))
        self.assertEqual(grid.goal_state, 24)
        self.assertEqual(grid.manhattan_distance(), 8)
        self.assertEqual(grid.max_episode_steps, constants.GRID_MAX_STEPS)

    def test_indices(self):
        """
        Test conversions between cells, indices and state vectors.
        """
        grid = GridWorld(width=4, height=3)
        for index in range(grid.n_states):
            self.assertEqual(grid.index(grid.cell(index)), index)
            self.assertEqual(grid.decode_state(grid.encode(index)), index)
        self.assertEqual(grid.index((1, 2)), 6)

    def test_moves(self):
        """
        Test moves, including moves against the border.
        """
        grid = GridWorld(width=3, height=3)
        self.assertEqual(grid.moved((1, 1), Move.UP), (0, 1))
        self.assertEqual(grid.moved((1, 1), Move.DOWN), (2, 1))
        self.assertEqual(grid.moved((1, 1), Move.LEFT), (1, 0))
        self.assertEqual(grid.moved((1, 1), Move.RIGHT), (1, 2))
        self.assertEqual(grid.moved((0, 0), Move.UP), (0, 0))
        self.assertEqual(grid.moved((0, 0), Move.LEFT), (0, 0))
        self.assertEqual(grid.moved((2, 2), Move.RIGHT), (2, 2))

    def test_episode(self):
        """
        Test an episode reaching the goal.
        """
        grid = GridWorld(width=2, height=1)
        rng = self.get_rng()
        state = grid.reset(rng)
        self.assertEqual(grid.decode_state(state), grid.start_state)
        state, reward, done = grid.step(one_hot(Move.RIGHT, 4), rng)
        self.assertEqual(grid.decode_state(state), grid.goal_state)
        self.assertEqual(reward, constants.GRID_STEP_REWARD)
        self.assertFalse(done)
        # any action in the goal collects the goal reward
        state, reward, done = grid.step(one_hot(Move.UP, 4), rng)
        self.assertEqual(reward, constants.GRID_GOAL_REWARD)
        self.assertTrue(done)
        # reset returns to the start
        self.assertEqual(grid.decode_state(grid.reset(rng)), grid.start_state)

    def test_tabular(self):
        """
        Test the tabular model.
        """
        grid = GridWorld(width=3, height=3, slip=0.2)
        p, r, d = grid.tabular()
        self.assertEqual(p.shape, (9, 4, 9))
        np.testing.assert_allclose(np.sum(p, axis=2), np.ones((9, 4)))
        goal = grid.goal_state
        np.testing.assert_array_equal(d[goal], np.ones(4))
        np.testing.assert_array_equal(r[goal], np.full(4, constants.GRID_GOAL_REWARD))
        self.assertEqual(float(np.sum(d)), 4.0)
        # moving right from the center: intended with 0.8 + 0.2 / 4, each other move with 0.05
        center = grid.index((1, 1))
        self.assertAlmostEqual(p[center, Move.RIGHT, grid.index((1, 2))], 0.85)
        self.assertAlmostEqual(p[center, Move.RIGHT, grid.index((0, 1))], 0.05)
        # the model is cached
        self.assertIs(grid.tabular(), grid.tabular())

    def test_tabular_matches_step(self):
        """
        Test that deterministic steps follow the tabular model.
        """
        grid = GridWorld(width=3, height=2)
        p, r, _ = grid.tabular()
        rng = self.get_rng()
        for s in range(grid.n_states):
            if s == grid.goal_state:
                continue
            for a in range(grid.n_actions):
                grid._cell = grid.cell(s)
                state, reward, done = grid.step(one_hot(a, 4), rng)
                self.assertEqual(p[s, a, grid.decode_state(state)], 1.0)
                self.assertEqual(reward, r[s, a])
                self.assertFalse(done)

    def test_slip(self):
        """
        Test that slipping moves are taken.
        """
        grid = GridWorld(width=5, height=5, start=(2, 2), goal=(0, 0), slip=1.0)
        rng = self.get_rng()
        reached = set()
        for _ in range(200):
            grid.reset(rng)
            state, _, _ = grid.step(one_hot(Move.UP, 4), rng)
            reached.add(grid.cell(grid.decode_state(state)))
        self.assertEqual(reached, {(1, 2), (3, 2), (2, 1), (2, 3)})

    def test_canonical_action(self):
        """
        Test that actions are canonicalized to one-hot moves.
        """
        grid = GridWorld()
        np.testing.assert_array_equal(grid.canonical_action([0.0, 0.2, 0.9, -1.0]), one_hot(Move.LEFT, 4))

    def test_invalid(self):
        """
        Test that invalid parameters are rejected.
        """
        with self.assertRaises(ValueError):
            GridWorld(width=0)
        with self.assertRaises(ValueError):
            GridWorld(goal=(5, 5))
        with self.assertRaises(ValueError):
            GridWorld(start=(4, 4))
        with self.assertRaises(ValueError):
            GridWorld(slip=1.5)
        with self.assertRaises(ValueError):
            GridWorld(gamma=-0.1)

    def test_describe(self):
        """
        Test that the description contains the parameters.
        """
        description = GridWorld(width=3, height=2, slip=0.1).describe()
        self.assertEqual(description["env_id"], "gridworld")
        self.assertEqual(description["goal"], [1, 2])
        self.assertEqual(description["slip"], 0.1)


class MakeEnvTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.envs.make_env}.
    """
    def test_make_env(self):
        """
        Test creating environments by identifier.
        """
        self.assertIsInstance(make_env("bandit"), DiscreteBandit)
        self.assertIsInstance(make_env("bandit2d"), ContinuousBandit2D)
        grid = make_env("gridworld", width=3, height=4)
        self.assertIsInstance(grid, GridWorld)
        self.assertEqual(grid.n_states, 12)
        with self.assertRaises(ValueError):
            make_env("cartpole")
