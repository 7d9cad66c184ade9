"""
Desk-scale environments.

All environments share the same interface: states and actions are real
vectors. Discrete actions (bandit arms, grid moves) are one-hot encoded
and any real action vector is decoded by its argmax, so the continuous
behavior model and the (s, a) critics apply to every environment.

@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import enum
import logging

import numpy as np

from . import constants
from .losses import DiscreteActionDistribution


logger = logging.getLogger(__name__)


def one_hot(index, n):
    """
    Return the one-hot vector of an index.

    @param index: the index
    @type index: L{int}
    @param n: length of the vector
    @type n: L{int}
    @rtype: L{numpy.ndarray}
    """
    v = np.zeros(n, dtype=constants.DTYPE)
    v[index] = 1.0
    return v


def decode_discrete(action, n):
    """
    Decode a real action vector into a discrete action by its argmax.

    Ties are broken towards the lowest index.

    @param action: the action vector
    @type action: array-like
    @param n: number of discrete actions
    @type n: L{int}
    @return: the index of the action
    @rtype: L{int}
    @raises ValueError: if the action has the wrong size
    """
    action = np.asarray(action, dtype=constants.DTYPE).reshape(-1)
    if action.size != n:
        raise ValueError("Expected an action of size {}, got {}!".format(n, action.size))
    return int(np.argmax(action))


def _check_probs(probs, n, name):
    probs = np.asarray(probs, dtype=constants.DTYPE).reshape(-1)
    if probs.size != n:
        raise ValueError("Expected {} {}, got {}!".format(n, name, probs.size))
    if np.any(probs < 0) or abs(float(np.sum(probs)) - 1.0) > 1e-12:
        raise ValueError("{} must form a probability simplex!".format(name))
    return probs


class Env(object):
    """
    Base class for environments.

    @cvar env_id: identifier of the environment
    @type env_id: L{str}

    @ivar state_dim: dimension of the state vectors
    @type state_dim: L{int}
    @ivar action_dim: dimension of the action vectors
    @type action_dim: L{int}
    @ivar max_episode_steps: episodes are truncated after this many steps
    @type max_episode_steps: L{int}
    @ivar action_low: lower bound of the action box, or L{None} if unbounded
    @type action_low: L{numpy.ndarray} or L{None}
    @ivar action_high: upper bound of the action box, or L{None} if unbounded
    @type action_high: L{numpy.ndarray} or L{None}
    """
    env_id = None

    def __init__(self, state_dim, action_dim, max_episode_steps, action_low=None, action_high=None):
        """
        The default constructor.
        """
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.max_episode_steps = max_episode_steps
        self.action_low = action_low
        self.action_high = action_high

    def reset(self, rng):
        """
        Start a new episode.

        @param rng: random stream
        @type rng: L{numpy.random.Generator}
        @return: the initial state
        @rtype: L{numpy.ndarray}
        """
        raise NotImplementedError("Env subclasses need to implement reset()!")

    def step(self, action, rng):
        """
        Take an action.

        @param action: the action vector
        @type action: array-like
        @param rng: random stream
        @type rng: L{numpy.random.Generator}
        @return: next state, reward and whether the episode terminated
        @rtype: L{tuple} of (L{numpy.ndarray}, L{float}, L{bool})
        """
        raise NotImplementedError("Env subclasses need to implement step()!")

    def canonical_action(self, action):
        """
        Return the action as it is stored in datasets.

        Discrete environments map any action vector to the one-hot vector
        of the decoded action.

        @param action: the action vector
        @type action: array-like
        @rtype: L{numpy.ndarray}
        """
        return np.asarray(action, dtype=constants.DTYPE).reshape(self.action_dim)

    def describe(self):
        """
        Return a JSON-serializable description of this environment.

        @rtype: L{dict}
        """
        return {"env_id": self.env_id}


class DiscreteBandit(Env):
    """
    A single-state bandit with noisy arm rewards.

    The state is a constant dummy vector C{[0.0]}.

    @ivar reward_means: mean reward per arm
    @type reward_means: L{numpy.ndarray}
    @ivar noise_std: standard deviation of the additive reward noise
    @type noise_std: L{float}
    @ivar behavior_probs: behavior probability per arm
    @type behavior_probs: L{numpy.ndarray}
    """
    env_id = "bandit"

    def __init__(self, reward_means=constants.BANDIT_MEANS, noise_std=constants.BANDIT_NOISE_STD, behavior_probs=None):
        """
        The default constructor.

        @param reward_means: mean reward per arm
        @type reward_means: array-like
        @param noise_std: reward noise
        @type noise_std: L{float}
        @param behavior_probs: behavior probability per arm, uniform by default
        @type behavior_probs: array-like or L{None}
        @raises ValueError: on invalid parameters
        """
        reward_means = np.asarray(reward_means, dtype=constants.DTYPE).reshape(-1)
        if reward_means.size < 1:
            raise ValueError("A bandit needs at least one arm!")
        if noise_std < 0:
            raise ValueError("noise_std must be nonnegative, got {}!".format(noise_std))
        n = reward_means.size
        if behavior_probs is None:
            behavior_probs = np.full(n, 1.0 / n)
        Env.__init__(self, state_dim=1, action_dim=n, max_episode_steps=1)
        self.reward_means = reward_means
        self.noise_std = float(noise_std)
        self.behavior_probs = _check_probs(behavior_probs, n, "behavior_probs")

    @property
    def n_arms(self):
        """
        The number of arms.

        @rtype: L{int}
        """
        return self.reward_means.size

    def reset(self, rng):
        return np.zeros(1, dtype=constants.DTYPE)

    def step(self, action, rng):
        arm = decode_discrete(action, self.n_arms)
        reward = self.reward_means[arm] + self.noise_std * rng.standard_normal()
        return np.zeros(1, dtype=constants.DTYPE), float(reward), True

    def canonical_action(self, action):
        return one_hot(decode_discrete(action, self.n_arms), self.n_arms)

    def behavior_action(self, rng):
        """
        Draw an action from the behavior policy.

        @rtype: L{numpy.ndarray}
        """
        return one_hot(int(rng.choice(self.n_arms, p=self.behavior_probs)), self.n_arms)

    def reward_distribution(self):
        """
        Return the arm-level distribution of mean rewards under the behavior policy.

        @rtype: L{pyidql.losses.DiscreteActionDistribution}
        """
        return DiscreteActionDistribution(self.reward_means, self.behavior_probs)

    def describe(self):
        return {
            "env_id": self.env_id,
            "reward_means": [float(m) for m in self.reward_means],
            "noise_std": self.noise_std,
            "behavior_probs": [float(p) for p in self.behavior_probs],
        }


class ContinuousBandit2D(Env):
    """
    A single-state bandit with a 2D action box and reward a1 + a2.

    The behavior policy is a mixture of isotropic Gaussian modes.

    @ivar mode_centers: centers of the behavior modes, shape (modes, 2)
    @type mode_centers: L{numpy.ndarray}
    @ivar mode_std: standard deviation of each mode
    @type mode_std: L{float}
    @ivar mode_probs: probability of each mode
    @type mode_probs: L{numpy.ndarray}
    """
    env_id = "bandit2d"

    def __init__(self, mode_centers=constants.BANDIT2D_MODES, mode_std=constants.BANDIT2D_MODE_STD, mode_probs=None):
        """
        The default constructor.

        @raises ValueError: on invalid parameters
        """
        centers = np.asarray(mode_centers, dtype=constants.DTYPE)
        if centers.ndim != 2 or centers.shape[0] < 1 or centers.shape[1] != 2:
            raise ValueError("Expected at least one 2D mode center, got shape {}!".format(centers.shape))
        if not mode_std > 0:
            raise ValueError("mode_std must be positive, got {}!".format(mode_std))
        n = centers.shape[0]
        if mode_probs is None:
            mode_probs = np.full(n, 1.0 / n)
        Env.__init__(
            self,
            state_dim=1,
            action_dim=2,
            max_episode_steps=1,
            action_low=np.zeros(2, dtype=constants.DTYPE),
            action_high=np.ones(2, dtype=constants.DTYPE),
        )
        self.mode_centers = centers
        self.mode_std = float(mode_std)
        self.mode_probs = _check_probs(mode_probs, n, "mode_probs")

    @staticmethod
    def reward(actions):
        """
        Return the reward a1 + a2 of one or more actions.

        @param actions: actions of shape (2, ) or (n, 2)
        @type actions: array-like
        @rtype: L{float} or L{numpy.ndarray}
        """
        actions = np.asarray(actions, dtype=constants.DTYPE)
        return actions[..., 0] + actions[..., 1]

    def reset(self, rng):
        return np.zeros(1, dtype=constants.DTYPE)

    def step(self, action, rng):
        action = np.asarray(action, dtype=constants.DTYPE).reshape(2)
        return np.zeros(1, dtype=constants.DTYPE), float(self.reward(action)), True

    def behavior_action(self, rng):
        """
        Draw an action from the behavior mixture.

        @rtype: L{numpy.ndarray}
        """
        mode = int(rng.choice(len(self.mode_centers), p=self.mode_probs))
        return self.mode_centers[mode] + self.mode_std * rng.standard_normal(2)

    def nearest_mode(self, actions):
        """
        Return the index of the nearest mode center per action.

        @param actions: actions of shape (n, 2)
        @type actions: array-like
        @rtype: L{numpy.ndarray}
        """
        actions = np.asarray(actions, dtype=constants.DTYPE).reshape(-1, 2)
        dist = np.linalg.norm(actions[:, None, :] - self.mode_centers[None, :, :], axis=-1)
        return np.argmin(dist, axis=1)

    def best_mode(self):
        """
        Return the index of the mode with the highest reward.

        @rtype: L{int}
        """
        return int(np.argmax(self.reward(self.mode_centers)))

    def describe(self):
        return {
            "env_id": self.env_id,
            "mode_centers": [[float(x) for x in c] for c in self.mode_centers],
            "mode_std": self.mode_std,
            "mode_probs": [float(p) for p in self.mode_probs],
        }


class Move(enum.IntEnum):
    """
    An enum of the grid world moves, as (row, column) offsets.
    """
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3

    @property
    def offset(self):
        """
        The (row, column) offset of this move.

        @rtype: L{tuple} of L{int}
        """
        return {
            Move.UP: (-1, 0),
            Move.DOWN: (1, 0),
            Move.LEFT: (0, -1),
            Move.RIGHT: (0, 1),
        }[self]


class GridWorld(Env):
    """
    A grid world with a sparse, absorbing goal.

    Every step costs C{step_reward}. Moves off the grid keep the agent in
    place. With probability C{slip}, a uniformly random move is taken
    instead of the chosen one. Any action taken in the goal cell yields
    C{goal_reward} and ends the episode. States are one-hot vectors over
    the cells, in row-major order.

    @ivar width: number of columns
    @type width: L{int}
    @ivar height: number of rows
    @type height: L{int}
    @ivar start: start cell (row, column)
    @type start: L{tuple} of L{int}
    @ivar goal: goal cell (row, column)
    @type goal: L{tuple} of L{int}
    @ivar step_reward: reward of every non-goal step
    @type step_reward: L{float}
    @ivar goal_reward: reward collected in the goal
    @type goal_reward: L{float}
    @ivar gamma: discount
    @type gamma: L{float}
    @ivar slip: probability of a random move
    @type slip: L{float}
    """
    env_id = "gridworld"

    def __init__(
        self,
        width=5,
        height=5,
        start=(0, 0),
        goal=None,
        step_reward=constants.GRID_STEP_REWARD,
        goal_reward=constants.GRID_GOAL_REWARD,
        gamma=constants.DEFAULT_DISCOUNT,
        slip=0.0,
        max_episode_steps=constants.GRID_MAX_STEPS,
    ):
        """
        The default constructor.

        @raises ValueError: on invalid parameters
        """
        if width < 1 or height < 1:
            raise ValueError("Grid dimensions must be positive, got {}x{}!".format(width, height))
        if goal is None:
            goal = (height - 1, width - 1)
        start, goal = tuple(start), tuple(goal)
        for name, cell in (("start", start), ("goal", goal)):
            if not (0 <= cell[0] < height and 0 <= cell[1] < width):
                raise ValueError("{} cell {} is outside of the grid!".format(name, cell))
        if start == goal:
            raise ValueError("start and goal must differ!")
        if not (0.0 <= slip <= 1.0):
            raise ValueError("slip must be in [0, 1], got {}!".format(slip))
        if not (0.0 <= gamma <= 1.0):
            raise ValueError("gamma must be in [0, 1], got {}!".format(gamma))
        Env.__init__(self, state_dim=width * height, action_dim=len(Move), max_episode_steps=max_episode_steps)
        self.width = width
        self.height = height
        self.start = start
        self.goal = goal
        self.step_reward = float(step_reward)
        self.goal_reward = float(goal_reward)
        self.gamma = float(gamma)
        self.slip = float(slip)
        self._cell = start
        self._tabular = None

    @property
    def n_states(self):
        """
        The number of cells.

        @rtype: L{int}
        """
        return self.width * self.height

    @property
    def n_actions(self):
        """
        The number of moves.

        @rtype: L{int}
        """
        return len(Move)

    def index(self, cell):
        """
        Return the state index of a cell.

        @rtype: L{int}
        """
        return cell[0] * self.width + cell[1]

    def cell(self, index):
        """
        Return the cell of a state index.

        @rtype: L{tuple} of L{int}
        """
        return divmod(int(index), self.width)

    @property
    def start_state(self):
        """
        The state index of the start cell.

        @rtype: L{int}
        """
        return self.index(self.start)

    @property
    def goal_state(self):
        """
        The state index of the goal cell.

        @rtype: L{int}
        """
        return self.index(self.goal)

    def encode(self, index):
        """
        Return the one-hot state vector of a state index.

        @rtype: L{numpy.ndarray}
        """
        return one_hot(index, self.n_states)

    def decode_state(self, state):
        """
        Return the state index of a state vector.

        @rtype: L{int}
        """
        return decode_discrete(state, self.n_states)

    def moved(self, cell, move):
        """
        Return the cell reached by a move, staying in place at the border.

        @rtype: L{tuple} of L{int}
        """
        dr, dc = Move(move).offset
        r, c = cell[0] + dr, cell[1] + dc
        if 0 <= r < self.height and 0 <= c < self.width:
            return (r, c)
        return cell

    def tabular(self):
        """
        Return the tabular model of this grid world.

        @return: transition probabilities P[s, a, s'], rewards R[s, a] and
            termination flags D[s, a]
        @rtype: L{tuple} of L{numpy.ndarray}
        """
        if self._tabular is None:
            n_s, n_a = self.n_states, self.n_actions
            p = np.zeros((n_s, n_a, n_s), dtype=constants.DTYPE)
            r = np.full((n_s, n_a), self.step_reward, dtype=constants.DTYPE)
            d = np.zeros((n_s, n_a), dtype=constants.DTYPE)
            for s in range(n_s):
                cell = self.cell(s)
                for a in range(n_a):
                    if cell == self.goal:
                        p[s, a, s] = 1.0
                        r[s, a] = self.goal_reward
                        d[s, a] = 1.0
                        continue
                    p[s, a, self.index(self.moved(cell, a))] += 1.0 - self.slip
                    for other in range(n_a):
                        p[s, a, self.index(self.moved(cell, other))] += self.slip / n_a
            self._tabular = (p, r, d)
        return self._tabular

    def manhattan_distance(self):
        """
        Return the Manhattan distance from start to goal.

        @rtype: L{int}
        """
        return abs(self.goal[0] - self.start[0]) + abs(self.goal[1] - self.start[1])

    def reset(self, rng):
        self._cell = self.start
        return self.encode(self.start_state)

    def step(self, action, rng):
        move = decode_discrete(action, self.n_actions)
        if self._cell == self.goal:
            return self.encode(self.goal_state), self.goal_reward, True
        if self.slip > 0 and rng.random() < self.slip:
            move = int(rng.integers(self.n_actions))
        self._cell = self.moved(self._cell, move)
        return self.encode(self.index(self._cell)), self.step_reward, False

    def canonical_action(self, action):
        return one_hot(decode_discrete(action, self.n_actions), self.n_actions)

    def describe(self):
        return {
            "env_id": self.env_id,
            "width": self.width,
            "height": self.height,
            "start": list(self.start),
            "goal": list(self.goal),
            "step_reward": self.step_reward,
            "goal_reward": self.goal_reward,
            "gamma": self.gamma,
            "slip": self.slip,
            "max_episode_steps": self.max_episode_steps,
        }


def make_env(env_id, **kwargs):
    """
    Create an environment by its identifier.

    @param env_id: one of C{"bandit"}, C{"bandit2d"}, C{"gridworld"}
    @type env_id: L{str}
    @param kwargs: constructor arguments
    @type kwargs: L{dict}
    @return: the environment
    @rtype: L{Env}
    @raises ValueError: on an unknown identifier
    """
    for cls in (DiscreteBandit, ContinuousBandit2D, GridWorld):
        if cls.env_id == env_id:
            return cls(**kwargs)
    raise ValueError("Unknown environment: '{}'".format(env_id))
