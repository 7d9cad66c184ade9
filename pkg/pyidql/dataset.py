"""
Offline datasets, their binary file format, batches and the toy 2D datasets.

An offline dataset file consists of a fixed-size header, the environment
identifier, a JSON metadata blob and the transition records::

    header:    magic (4s), version (H), env id length (H), seed (q),
               transition count (Q), state dim (I), action dim (I)
    env id:    utf-8 bytes
    metadata:  length (I) + utf-8 JSON, keys sorted
    records:   count * (s, a, r, s', done) as little-endian float64

@var logger: logger used by this module
@type logger: L{logging.Logger}
@var TOY2D_GENERATORS: names of the toy 2D dataset generators
@type TOY2D_GENERATORS: L{tuple} of L{str}
"""
import io
import json
import logging
import struct

import numpy as np

from . import constants
from .modifiable import ModifiableMixIn
from .envs import DiscreteBandit, ContinuousBandit2D, GridWorld, one_hot
from .exceptions import EmptyDataset, NotADataset, IncompatibleFormat, UnknownGenerator
from .util.ioutil import read_n_bytes, read_string, pack_string
from .util.rngutil import stream


logger = logging.getLogger(__name__)

TOY2D_GENERATORS = ("gaussians8", "moons", "spiral")


class DatasetHeader(object):
    """
    The header of an offline dataset file.

    @cvar FORMAT: the format of the header
    @type FORMAT: L{str}
    @cvar LENGTH: length of the header
    @type LENGTH: L{int}
    """
    FORMAT = constants.ENDIAN + "4sHHqQII"
    LENGTH = struct.calcsize(FORMAT)

    def __init__(self, magic, version, env_id_length, seed, count, state_dim, action_dim):
        """
        The default constructor.

        The arguments are arranged in the same order as they appear in the header.
        """
        self.magic = magic
        self.version = version
        self.env_id_length = env_id_length
        self.seed = seed
        self.count = count
        self.state_dim = state_dim
        self.action_dim = action_dim

    def check_compatible(self):
        """
        Check if this header is compatible, raising an exception if not.

        @raises pyidql.exceptions.NotADataset: when the magic bytes are wrong
        @raises pyidql.exceptions.IncompatibleFormat: when the version is not supported
        """
        if self.magic != constants.DATASET_MAGIC:
            raise NotADataset(
                "Datasets should start with {!r}, but found {!r}!".format(constants.DATASET_MAGIC, self.magic)
            )
        if self.version != constants.DATASET_VERSION:
            raise IncompatibleFormat("Dataset version {} not supported!".format(self.version))

    @classmethod
    def from_bytes(cls, s):
        """
        Construct a header from a bytestring.

        @param s: string to parse
        @type s: L{bytes}
        @return: the header parsed from the bytes
        @rtype: L{DatasetHeader}
        """
        if len(s) != cls.LENGTH:
            raise NotADataset("File too short to contain a dataset header!")
        return cls(*struct.unpack(cls.FORMAT, s))

    def to_bytes(self):
        """
        Dump this header into a bytestring.

        @rtype: L{bytes}
        """
        return struct.pack(
            self.FORMAT,
            self.magic,
            self.version,
            self.env_id_length,
            self.seed,
            self.count,
            self.state_dim,
            self.action_dim,
        )


def _frozen_array(values, shape):
    array = np.array(values, dtype=constants.DTYPE, copy=True).reshape(shape)
    array.flags.writeable = False
    return array


class OfflineDataset(ModifiableMixIn):
    """
    An immutable set of (s, a, r, s', done) transitions.

    @ivar states: states, shape (n, state_dim)
    @type states: L{numpy.ndarray}
    @ivar actions: actions, shape (n, action_dim)
    @type actions: L{numpy.ndarray}
    @ivar rewards: rewards, shape (n, )
    @type rewards: L{numpy.ndarray}
    @ivar next_states: successor states, shape (n, state_dim)
    @type next_states: L{numpy.ndarray}
    @ivar dones: 1.0 for terminal transitions, shape (n, )
    @type dones: L{numpy.ndarray}
    @ivar env_id: identifier of the generating environment
    @type env_id: L{str}
    @ivar seed: seed of the generator, -1 if unknown
    @type seed: L{int}
    @ivar metadata: description of the generating process
    @type metadata: L{dict}
    """
    def __init__(self, states, actions, rewards, next_states, dones, env_id, seed=-1, metadata=None):
        """
        The default constructor.

        @raises ValueError: if the arrays do not agree in length
        """
        ModifiableMixIn.__init__(self)
        states = np.asarray(states, dtype=constants.DTYPE)
        actions = np.asarray(actions, dtype=constants.DTYPE)
        n = states.shape[0]
        if states.ndim != 2 or actions.ndim != 2:
            raise ValueError("states and actions must be 2-dimensional!")
        for name, array in (("actions", actions), ("rewards", rewards), ("next_states", next_states), ("dones", dones)):
            if len(array) != n:
                raise ValueError("Expected {} {}, got {}!".format(n, name, len(array)))
        self.states = _frozen_array(states, states.shape)
        self.actions = _frozen_array(actions, actions.shape)
        self.rewards = _frozen_array(rewards, (n, ))
        self.next_states = _frozen_array(next_states, states.shape)
        self.dones = _frozen_array(dones, (n, ))
        self.env_id = env_id
        self.seed = int(seed)
        self.metadata = dict(metadata or {})
        self.freeze()

    def __len__(self):
        return self.states.shape[0]

    def __repr__(self):
        return "OfflineDataset(env_id={!r}, n={})".format(self.env_id, len(self))

    @property
    def state_dim(self):
        """
        The dimension of the states.

        @rtype: L{int}
        """
        return self.states.shape[1]

    @property
    def action_dim(self):
        """
        The dimension of the actions.

        @rtype: L{int}
        """
        return self.actions.shape[1]

    def episode_returns(self):
        """
        Return the undiscounted return of every completed episode.

        Episodes end at terminal transitions or where the next state of a
        transition is not the state of the following one.

        @rtype: L{numpy.ndarray}
        """
        returns = []
        total = 0.0
        n = len(self)
        for i in range(n):
            total += float(self.rewards[i])
            ends = self.dones[i] > 0 or i == n - 1 or not np.array_equal(self.next_states[i], self.states[i + 1])
            if ends:
                returns.append(total)
                total = 0.0
        return np.asarray(returns, dtype=constants.DTYPE)

    def with_rewards(self, rewards, note):
        """
        Return a copy of this dataset with replaced rewards.

        @param rewards: the new rewards
        @type rewards: L{numpy.ndarray}
        @param note: description appended to the metadata
        @type note: L{str}
        @rtype: L{OfflineDataset}
        """
        metadata = dict(self.metadata)
        metadata["reward_transforms"] = list(metadata.get("reward_transforms", [])) + [note]
        return OfflineDataset(
            self.states, self.actions, rewards, self.next_states, self.dones,
            env_id=self.env_id, seed=self.seed, metadata=metadata,
        )

    # ================ converters =====================

    def to_bytes(self):
        """
        Dump this dataset into a bytestring.

        @rtype: L{bytes}
        """
        env_id = self.env_id.encode(constants.ENCODING)
        header = DatasetHeader(
            magic=constants.DATASET_MAGIC,
            version=constants.DATASET_VERSION,
            env_id_length=len(env_id),
            seed=self.seed,
            count=len(self),
            state_dim=self.state_dim,
            action_dim=self.action_dim,
        )
        records = np.concatenate(
            [
                self.states,
                self.actions,
                self.rewards.reshape(-1, 1),
                self.next_states,
                self.dones.reshape(-1, 1),
            ],
            axis=1,
        )
        return b"".join(
            [
                header.to_bytes(),
                env_id,
                pack_string(json.dumps(self.metadata, sort_keys=True)),
                np.ascontiguousarray(records, dtype="<f8").tobytes(),
            ]
        )

    @classmethod
    def from_file(cls, f):
        """
        Read a dataset from a file object.

        @param f: file-like object to read from
        @type f: file-like
        @return: the dataset
        @rtype: L{OfflineDataset}
        @raises pyidql.exceptions.NotADataset: on wrong magic bytes
        @raises pyidql.exceptions.IncompatibleFormat: on an unsupported version
        @raises IOError: on a truncated file
        """
        header = DatasetHeader.from_bytes(read_n_bytes(f, DatasetHeader.LENGTH))
        header.check_compatible()
        env_id = read_n_bytes(f, header.env_id_length, raise_on_incomplete=True).decode(constants.ENCODING)
        metadata = json.loads(read_string(f))
        sd, ad = header.state_dim, header.action_dim
        width = 2 * sd + ad + 2
        raw = read_n_bytes(f, 8 * width * header.count, raise_on_incomplete=True)
        records = np.frombuffer(raw, dtype="<f8").astype(constants.DTYPE).reshape(header.count, width)
        return cls(
            states=records[:, :sd],
            actions=records[:, sd:sd + ad],
            rewards=records[:, sd + ad],
            next_states=records[:, sd + ad + 1:2 * sd + ad + 1],
            dones=records[:, -1],
            env_id=env_id,
            seed=header.seed,
            metadata=metadata,
        )

    @classmethod
    def from_bytes(cls, s):
        """
        Read a dataset from a bytestring.

        @rtype: L{OfflineDataset}
        """
        return cls.from_file(io.BytesIO(s))

    def save(self, path):
        """
        Write this dataset to a file.

        @param path: path of the file to write
        @type path: L{str}
        """
        with open(path, "wb") as fout:
            fout.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        """
        Load a dataset from a file.

        @param path: path of the dataset file
        @type path: L{str}
        @rtype: L{OfflineDataset}
        """
        with open(path, "rb") as fin:
            return cls.from_file(fin)


class ReplayBuffer(object):
    """
    A growing transition store, initialized from an offline dataset.

    Exposes the same arrays as L{OfflineDataset}, so L{sample_batch}
    works on both.
    """
    def __init__(self, dataset):
        """
        The default constructor.

        @param dataset: the initial transitions
        @type dataset: L{OfflineDataset}
        """
        n = len(dataset)
        capacity = max(2 * n, 16)
        self._n = n
        self._states = np.zeros((capacity, dataset.state_dim), dtype=constants.DTYPE)
        self._actions = np.zeros((capacity, dataset.action_dim), dtype=constants.DTYPE)
        self._rewards = np.zeros(capacity, dtype=constants.DTYPE)
        self._next_states = np.zeros((capacity, dataset.state_dim), dtype=constants.DTYPE)
        self._dones = np.zeros(capacity, dtype=constants.DTYPE)
        self._states[:n] = dataset.states
        self._actions[:n] = dataset.actions
        self._rewards[:n] = dataset.rewards
        self._next_states[:n] = dataset.next_states
        self._dones[:n] = dataset.dones
        self.env_id = dataset.env_id

    def __len__(self):
        return self._n

    @property
    def states(self):
        return self._states[:self._n]

    @property
    def actions(self):
        return self._actions[:self._n]

    @property
    def rewards(self):
        return self._rewards[:self._n]

    @property
    def next_states(self):
        return self._next_states[:self._n]

    @property
    def dones(self):
        return self._dones[:self._n]

    def _grow(self):
        for name in ("_states", "_actions", "_rewards", "_next_states", "_dones"):
            old = getattr(self, name)
            new = np.zeros((2 * old.shape[0], ) + old.shape[1:], dtype=constants.DTYPE)
            new[:old.shape[0]] = old
            setattr(self, name, new)

    def append(self, state, action, reward, next_state, done):
        """
        Append a single transition.
        """
        if self._n == self._states.shape[0]:
            self._grow()
        i = self._n
        self._states[i] = state
        self._actions[i] = action
        self._rewards[i] = reward
        self._next_states[i] = next_state
        self._dones[i] = float(done)
        self._n += 1


class Batch(object):
    """
    A minibatch of transitions.

    @ivar indices: indices of the transitions in the dataset
    @type indices: L{numpy.ndarray}
    @ivar states: states, shape (batch, state_dim)
    @type states: L{numpy.ndarray}
    @ivar actions: actions, shape (batch, action_dim)
    @type actions: L{numpy.ndarray}
    @ivar rewards: rewards, shape (batch, )
    @type rewards: L{numpy.ndarray}
    @ivar next_states: successor states, shape (batch, state_dim)
    @type next_states: L{numpy.ndarray}
    @ivar dones: terminal flags, shape (batch, )
    @type dones: L{numpy.ndarray}
    """
    def __init__(self, states, actions, rewards=None, next_states=None, dones=None, indices=None):
        self.states = np.asarray(states, dtype=constants.DTYPE)
        self.actions = np.asarray(actions, dtype=constants.DTYPE)
        n = self.states.shape[0]
        self.rewards = np.zeros(n) if rewards is None else np.asarray(rewards, dtype=constants.DTYPE)
        self.next_states = self.states if next_states is None else np.asarray(next_states, dtype=constants.DTYPE)
        self.dones = np.ones(n) if dones is None else np.asarray(dones, dtype=constants.DTYPE)
        self.indices = indices

    def __len__(self):
        return self.states.shape[0]


def sample_batch(dataset, batch_size, rng):
    """
    Draw a minibatch uniformly with replacement.

    @param dataset: the dataset
    @type dataset: L{OfflineDataset} or L{ReplayBuffer}
    @param batch_size: number of transitions
    @type batch_size: L{int}
    @param rng: random stream
    @type rng: L{numpy.random.Generator}
    @return: the batch
    @rtype: L{Batch}
    @raises pyidql.exceptions.EmptyDataset: if the dataset is empty
    """
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("Can not sample a batch from an empty dataset!")
    if batch_size < 1:
        raise ValueError("batch_size must be positive, got {}!".format(batch_size))
    idx = rng.integers(0, n, size=batch_size)
    return Batch(
        states=dataset.states[idx],
        actions=dataset.actions[idx],
        rewards=dataset.rewards[idx],
        next_states=dataset.next_states[idx],
        dones=dataset.dones[idx],
        indices=idx,
    )


# ================== generators ======================

def generate_bandit_dataset(bandit, n, rng, seed=-1):
    """
    Generate n one-step episodes of a bandit under its behavior policy.

    @param bandit: the bandit
    @type bandit: L{pyidql.envs.DiscreteBandit} or L{pyidql.envs.ContinuousBandit2D}
    @param n: number of episodes
    @type n: L{int}
    @param rng: random stream
    @type rng: L{numpy.random.Generator}
    @param seed: seed recorded in the dataset
    @type seed: L{int}
    @rtype: L{OfflineDataset}
    """
    if n < 1:
        raise ValueError("n must be at least 1, got {}!".format(n))
    if not isinstance(bandit, (DiscreteBandit, ContinuousBandit2D)):
        raise TypeError("Expected a bandit, got {} instead!".format(type(bandit)))
    logger.info("Generating {} bandit transitions...".format(n))
    actions = np.zeros((n, bandit.action_dim), dtype=constants.DTYPE)
    rewards = np.zeros(n, dtype=constants.DTYPE)
    state = bandit.reset(rng)
    for i in range(n):
        actions[i] = bandit.behavior_action(rng)
        _, rewards[i], _ = bandit.step(actions[i], rng)
    states = np.tile(state, (n, 1))
    metadata = {"generator": "behavior", "env": bandit.describe()}
    return OfflineDataset(
        states, actions, rewards, states, np.ones(n), env_id=bandit.env_id, seed=seed, metadata=metadata,
    )


def generate_gridworld_dataset(grid, optimal_fraction, n_steps, rng, epsilon=0.1, seed=-1):
    """
    Generate trajectories of a mixture of an epsilon-greedy optimal policy and a uniform random policy.

    Each trajectory runs from the start until termination or the step cap
    and uses one of the two policies, the optimal one with probability
    C{optimal_fraction}. Generation stops once n_steps transitions exist.
    The episode counts and the mean return in the metadata cover completed
    trajectories only; a final trajectory cut by the transition budget is
    counted in C{truncated_episodes}.

    @param grid: the grid world
    @type grid: L{pyidql.envs.GridWorld}
    @param optimal_fraction: probability of a trajectory following the near-optimal policy
    @type optimal_fraction: L{float}
    @param n_steps: number of transitions
    @type n_steps: L{int}
    @param rng: random stream
    @type rng: L{numpy.random.Generator}
    @param epsilon: random action probability of the near-optimal policy
    @type epsilon: L{float}
    @param seed: seed recorded in the dataset
    @type seed: L{int}
    @rtype: L{OfflineDataset}
    """
    from .oracles import value_iteration

    if not isinstance(grid, GridWorld):
        raise TypeError("Expected a GridWorld, got {} instead!".format(type(grid)))
    if not (0.0 <= optimal_fraction <= 1.0) or not (0.0 <= epsilon <= 1.0):
        raise ValueError("optimal_fraction and epsilon must be in [0, 1]!")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1, got {}!".format(n_steps))
    logger.info("Generating {} grid world transitions ({:.0%} near-optimal)...".format(n_steps, optimal_fraction))
    _, greedy = value_iteration(grid)
    states, actions, rewards, next_states, dones = [], [], [], [], []
    returns = {"optimal": [], "random": []}
    truncated = 0
    while len(states) < n_steps:
        kind = "optimal" if rng.random() < optimal_fraction else "random"
        state = grid.reset(rng)
        total = 0.0
        for length in range(1, grid.max_episode_steps + 1):
            s = grid.decode_state(state)
            if kind == "optimal" and rng.random() >= epsilon:
                move = int(greedy[s])
            else:
                move = int(rng.integers(grid.n_actions))
            action = one_hot(move, grid.n_actions)
            next_state, reward, done = grid.step(action, rng)
            states.append(state)
            actions.append(action)
            rewards.append(reward)
            next_states.append(next_state)
            dones.append(float(done))
            total += reward
            state = next_state
            if done or len(states) >= n_steps:
                break
        if done or length == grid.max_episode_steps:
            returns[kind].append(total)
        else:
            # cut by the transition budget
            truncated += 1
    completed = returns["optimal"] + returns["random"]
    metadata = {
        "generator": "policy_mix",
        "optimal_fraction": optimal_fraction,
        "epsilon": epsilon,
        "env": grid.describe(),
        "episodes": {k: len(v) for k, v in returns.items()},
        "truncated_episodes": truncated,
        "mean_return": float(np.mean(completed)) if completed else None,
    }
    return OfflineDataset(
        np.asarray(states), np.asarray(actions), np.asarray(rewards), np.asarray(next_states), np.asarray(dones),
        env_id=grid.env_id, seed=seed, metadata=metadata,
    )


# ================== reward transforms ======================

def standardize_rewards(dataset):
    """
    Rescale rewards by the spread of episode returns, scaled to a range of 1000.

    @param dataset: the dataset
    @type dataset: L{OfflineDataset}
    @return: a new dataset with scaled rewards
    @rtype: L{OfflineDataset}
    """
    returns = dataset.episode_returns()
    spread = float(np.max(returns) - np.min(returns)) if returns.size else 0.0
    if spread <= 0:
        logger.warning("Episode returns have no spread, rewards are left unscaled")
        return dataset.with_rewards(dataset.rewards, "standardize:1.0")
    factor = 1000.0 / spread
    return dataset.with_rewards(dataset.rewards * factor, "standardize:{!r}".format(factor))


def shift_rewards(dataset, shift=-1.0):
    """
    Add a constant to every reward.

    @param dataset: the dataset
    @type dataset: L{OfflineDataset}
    @param shift: constant to add
    @type shift: L{float}
    @return: a new dataset with shifted rewards
    @rtype: L{OfflineDataset}
    """
    return dataset.with_rewards(dataset.rewards + shift, "shift:{!r}".format(float(shift)))


# ================== toy 2D datasets ======================

class Toy2DDataset(object):
    """
    Samples of a 2D point distribution.

    @ivar points: the samples, shape (n, 2)
    @type points: L{numpy.ndarray}
    @ivar generator: name of the generator
    @type generator: L{str}
    @ivar seed: seed of the generator
    @type seed: L{int}
    @ivar params: generator parameters
    @type params: L{dict}
    """
    def __init__(self, points, generator, seed, params):
        self.points = _frozen_array(points, (-1, 2))
        self.generator = generator
        self.seed = seed
        self.params = dict(params)

    def __len__(self):
        return self.points.shape[0]

    def mode_centers(self):
        """
        Return the mode centers of a gaussians8 dataset.

        @rtype: L{numpy.ndarray}
        @raises ValueError: for other generators
        """
        if self.generator != "gaussians8":
            raise ValueError("Only gaussians8 datasets have modes!")
        return gaussians8_centers(self.params["radius"])

    def as_offline_dataset(self):
        """
        Wrap the points as actions of a single dummy state.

        @rtype: L{OfflineDataset}
        """
        n = len(self)
        states = np.zeros((n, 1), dtype=constants.DTYPE)
        return OfflineDataset(
            states, self.points, np.zeros(n), states, np.ones(n),
            env_id="toy2d-" + self.generator, seed=self.seed,
            metadata={"generator": self.generator, "params": self.params},
        )


def gaussians8_centers(radius=constants.TOY2D_RADIUS):
    """
    Return the 8 mode centers, equally spaced on a circle.

    @rtype: L{numpy.ndarray}
    """
    angles = 2.0 * np.pi * np.arange(8) / 8.0
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def make_toy2d(generator, n, seed):
    """
    Generate a toy 2D dataset.

    @param generator: one of L{TOY2D_GENERATORS}
    @type generator: L{str}
    @param n: number of points
    @type n: L{int}
    @param seed: seed of the points
    @type seed: L{int}
    @rtype: L{Toy2DDataset}
    @raises pyidql.exceptions.UnknownGenerator: on an unknown generator
    """
    if generator not in TOY2D_GENERATORS:
        raise UnknownGenerator("Unknown toy 2D generator '{}', expected one of {}".format(generator, TOY2D_GENERATORS))
    if n < 1:
        raise ValueError("n must be at least 1, got {}!".format(n))
    rng = stream(seed, "toy2d-" + generator)
    if generator == "gaussians8":
        params = {"radius": constants.TOY2D_RADIUS, "std": constants.TOY2D_STD, "modes": 8}
        modes = rng.integers(0, 8, size=n)
        points = gaussians8_centers(params["radius"])[modes] + params["std"] * rng.standard_normal((n, 2))
    elif generator == "moons":
        params = {"noise": 0.05, "offset": [1.0, 0.5]}
        upper = rng.random(n) < 0.5
        theta = np.pi * rng.random(n)
        x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
        y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
        points = np.stack([x, y], axis=1) + params["noise"] * rng.standard_normal((n, 2))
    else:
        params = {"noise": 0.05, "turns": 1.5, "radius": constants.TOY2D_RADIUS}
        u = np.sqrt(rng.random(n))
        theta = 2.0 * np.pi * params["turns"] * u
        r = params["radius"] * u
        points = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1) + params["noise"] * rng.standard_normal((n, 2))
    return Toy2DDataset(points, generator, seed, params)
