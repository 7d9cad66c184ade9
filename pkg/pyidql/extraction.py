"""
Policy extraction: turn a critic and a behavior model into an executable policy.

For each state N candidate actions are drawn from the behavior model.
In implicit mode one candidate is resampled with probabilities
proportional to the implicit weights w(s, a_i); in greedy mode the
candidate with the highest Q-value is taken.

The behavior model and the critic are duck-typed. A behavior model needs
C{sample(state, rng, n)}, a critic needs C{q_min(states, actions)} and
C{value(states)}.

@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import enum
import logging

import numpy as np

from . import constants
from .losses import ConvexLoss


logger = logging.getLogger(__name__)


class ExtractionMode(enum.IntEnum):
    """
    An enum of the extraction modes.
    """
    IMPLICIT = 0
    GREEDY = 1

    @classmethod
    def parse(cls, name):
        """
        Parse a mode from its (case insensitive) name.

        @rtype: L{ExtractionMode}
        @raises ValueError: on an unknown name
        """
        if isinstance(name, cls):
            return name
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError("Unknown extraction mode: '{}'".format(name))


class ExtractionSpec(object):
    """
    How actions are extracted.

    @ivar n_samples: number of candidates per state
    @type n_samples: L{int}
    @ivar mode: the extraction mode
    @type mode: L{ExtractionMode}
    @ivar loss: the loss defining the implicit weights (implicit mode)
    @type loss: L{pyidql.losses.ConvexLoss} or L{None}
    """
    def __init__(self, n_samples=constants.DEFAULT_N_SAMPLES, mode=ExtractionMode.GREEDY, loss=None):
        """
        The default constructor.

        @raises ValueError: if n_samples < 1
        @raises TypeError: if implicit mode lacks a loss
        """
        if n_samples < 1:
            raise ValueError("n_samples must be at least 1, got {}!".format(n_samples))
        mode = ExtractionMode.parse(mode)
        if mode == ExtractionMode.IMPLICIT and not isinstance(loss, ConvexLoss):
            raise TypeError("Implicit extraction requires a ConvexLoss, got {!r}".format(loss))
        self.n_samples = n_samples
        self.mode = mode
        self.loss = loss

    def __repr__(self):
        return "<ExtractionSpec mode={} n_samples={} loss={!r}>".format(self.mode.name.lower(), self.n_samples, self.loss)


def selection_probabilities(spec, q, v):
    """
    Return the selection probabilities of candidates.

    @param spec: the extraction spec
    @type spec: L{ExtractionSpec}
    @param q: Q-value of every candidate
    @type q: L{numpy.ndarray}
    @param v: value of the state
    @type v: L{float}
    @return: probabilities summing to 1
    @rtype: L{numpy.ndarray}
    """
    q = np.asarray(q, dtype=constants.DTYPE).reshape(-1)
    n = q.size
    if spec.mode == ExtractionMode.GREEDY:
        p = np.zeros(n)
        # np.argmax picks the lowest index on ties
        p[int(np.argmax(q))] = 1.0
        return p
    w = spec.loss.weight(q, v)
    total = float(np.sum(w))
    if not (total > 0 and np.isfinite(total)):
        logger.warning("All {} candidate weights are zero, selecting uniformly".format(n))
        return np.full(n, 1.0 / n)
    return w / total


def act(spec, state, behavior, critic, rng, action_map=None):
    """
    Select an action for a state.

    @param spec: the extraction spec
    @type spec: L{ExtractionSpec}
    @param state: the state
    @type state: L{numpy.ndarray}
    @param behavior: the behavior model
    @type behavior: L{pyidql.diffusion.BehaviorModel}
    @param critic: the critic
    @type critic: L{pyidql.critic.CriticNets}
    @param rng: random stream of sampling and selection
    @type rng: L{numpy.random.Generator}
    @param action_map: applied to every candidate before it is scored, e.g.
        L{pyidql.envs.Env.canonical_action}
    @type action_map: callable or L{None}
    @return: the action
    @rtype: L{numpy.ndarray}
    """
    state = np.asarray(state, dtype=constants.DTYPE).reshape(-1)
    candidates = np.asarray(behavior.sample(state, rng, spec.n_samples), dtype=constants.DTYPE)
    candidates = candidates.reshape(spec.n_samples, -1)
    if action_map is not None:
        candidates = np.stack([action_map(c) for c in candidates], axis=0)
    if spec.n_samples == 1:
        return candidates[0]
    states = np.repeat(state[None, :], spec.n_samples, axis=0)
    q = critic.q_min(states, candidates)
    v = 0.0 if spec.mode == ExtractionMode.GREEDY else float(critic.value(state[None, :])[0])
    p = selection_probabilities(spec, q, v)
    if spec.mode == ExtractionMode.GREEDY:
        index = int(np.argmax(p))
    else:
        index = int(rng.choice(spec.n_samples, p=p))
    logger.log(constants.LOG_LEVEL_SAMPLE, "Selected candidate {} of {} (q={})".format(index, spec.n_samples, q[index]))
    return candidates[index]


def act_many(spec, state, behavior, critic, rng, m, chunk_size=4096):
    """
    Select m actions for the same state.

    Equivalent to m calls of L{act}, with the candidate sets of several
    calls drawn in one batch of at most C{chunk_size} candidates.

    @param spec: the extraction spec
    @type spec: L{ExtractionSpec}
    @param state: the state
    @type state: L{numpy.ndarray}
    @param behavior: the behavior model
    @param critic: the critic
    @param rng: random stream of sampling and selection
    @type rng: L{numpy.random.Generator}
    @param m: number of actions
    @type m: L{int}
    @param chunk_size: largest number of candidates drawn at once
    @type chunk_size: L{int}
    @return: actions of shape (m, action_dim)
    @rtype: L{numpy.ndarray}
    """
    state = np.asarray(state, dtype=constants.DTYPE).reshape(-1)
    n = spec.n_samples
    per_chunk = max(1, chunk_size // n)
    v = 0.0 if (spec.mode == ExtractionMode.GREEDY or n == 1) else float(critic.value(state[None, :])[0])
    chosen = []
    done = 0
    while done < m:
        k = min(per_chunk, m - done)
        candidates = np.asarray(behavior.sample(state, rng, n * k), dtype=constants.DTYPE).reshape(n * k, -1)
        if n == 1:
            chosen.append(candidates)
        else:
            q = critic.q_min(np.repeat(state[None, :], n * k, axis=0), candidates).reshape(k, n)
            candidates = candidates.reshape(k, n, -1)
            for i in range(k):
                p = selection_probabilities(spec, q[i], v)
                index = int(np.argmax(p)) if spec.mode == ExtractionMode.GREEDY else int(rng.choice(n, p=p))
                chosen.append(candidates[i, index][None, :])
        done += k
    return np.concatenate(chosen, axis=0)


class EvaluationResult(object):
    """
    Return statistics of policy rollouts.

    @ivar returns: undiscounted return of every episode
    @type returns: L{numpy.ndarray}
    @ivar discounted_returns: discounted returns, if requested
    @type discounted_returns: L{numpy.ndarray} or L{None}
    @ivar truncated: number of episodes cut at the step cap
    @type truncated: L{int}
    """
    def __init__(self, returns, discounted_returns=None, truncated=0):
        self.returns = np.asarray(returns, dtype=constants.DTYPE)
        self.discounted_returns = None if discounted_returns is None else np.asarray(discounted_returns, dtype=constants.DTYPE)
        self.truncated = truncated

    @property
    def episodes(self):
        return self.returns.size

    @property
    def mean(self):
        return float(np.mean(self.returns))

    @property
    def std(self):
        return float(np.std(self.returns))

    @property
    def any_truncated(self):
        return self.truncated > 0

    def to_dict(self):
        """
        Return a JSON-serializable summary.

        @rtype: L{dict}
        """
        d = {
            "mean_return": self.mean,
            "std_return": self.std,
            "episodes": self.episodes,
            "truncated": self.truncated,
        }
        if self.discounted_returns is not None:
            d["mean_discounted_return"] = float(np.mean(self.discounted_returns))
            d["std_discounted_return"] = float(np.std(self.discounted_returns))
        return d


def evaluate_policy(spec, env, behavior, critic, episodes, rng, discounted=False, gamma=None):
    """
    Roll out the extracted policy.

    @param spec: the extraction spec
    @type spec: L{ExtractionSpec}
    @param env: the environment
    @type env: L{pyidql.envs.Env}
    @param behavior: the behavior model
    @param critic: the critic
    @param episodes: number of episodes
    @type episodes: L{int}
    @param rng: random stream of the environment and the policy
    @type rng: L{numpy.random.Generator}
    @param discounted: whether to also compute discounted returns
    @type discounted: L{bool}
    @param gamma: discount, defaults to the one of the environment
    @type gamma: L{float} or L{None}
    @return: the return statistics
    @rtype: L{EvaluationResult}
    @raises ValueError: if episodes < 1
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1, got {}!".format(episodes))
    if gamma is None:
        gamma = getattr(env, "gamma", constants.DEFAULT_DISCOUNT)
    returns = []
    discounted_returns = []
    truncated = 0
    for _ in range(episodes):
        state = env.reset(rng)
        total = 0.0
        discounted_total = 0.0
        done = False
        for t in range(env.max_episode_steps):
            action = act(spec, state, behavior, critic, rng, action_map=getattr(env, "canonical_action", None))
            state, reward, done = env.step(action, rng)
            total += reward
            discounted_total += (gamma ** t) * reward
            if done:
                break
        if not done:
            truncated += 1
        returns.append(total)
        discounted_returns.append(discounted_total)
    if truncated:
        logger.warning("{} of {} episodes were truncated at {} steps".format(truncated, episodes, env.max_episode_steps))
    logger.info("Evaluated {} episodes: mean return {:.4f}".format(episodes, float(np.mean(returns))))
    return EvaluationResult(returns, discounted_returns if discounted else None, truncated)
