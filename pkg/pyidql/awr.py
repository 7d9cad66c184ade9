"""
Advantage weighted regression: weights for the AWR-weighted diffusion loss and a unimodal Gaussian baseline.

@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import logging
import math

import numpy as np

from . import constants
from .exceptions import EmptyDataset


logger = logging.getLogger(__name__)


def awr_weights(q, v, alpha, max_weight=constants.DEFAULT_AWR_MAX_WEIGHT):
    """
    Return the clipped advantage weights min(exp(alpha * (q - v)), max_weight).

    @param q: Q-values
    @type q: L{numpy.ndarray}
    @param v: values, broadcast against q
    @type v: L{numpy.ndarray} or L{float}
    @param alpha: inverse temperature
    @type alpha: L{float}
    @param max_weight: cap of the weights
    @type max_weight: L{float}
    @return: the weights
    @rtype: L{numpy.ndarray}
    @raises ValueError: on a negative alpha or a non-positive cap
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative, got {}!".format(alpha))
    if not max_weight > 0:
        raise ValueError("max_weight must be positive, got {}!".format(max_weight))
    advantage = np.asarray(q, dtype=constants.DTYPE) - np.asarray(v, dtype=constants.DTYPE)
    # clip in log space, exp never overflows
    exponent = np.minimum(alpha * advantage, math.log(max_weight))
    return np.exp(exponent)


def critic_awr_weights(critic, states, actions, alpha, max_weight=constants.DEFAULT_AWR_MAX_WEIGHT):
    """
    Return the AWR weights of state-action pairs under a critic.

    @param critic: the critic, providing C{q_min(states, actions)} and C{value(states)}
    @type critic: L{pyidql.critic.CriticNets}
    @param states: states, shape (n, state_dim)
    @type states: L{numpy.ndarray}
    @param actions: actions, shape (n, action_dim)
    @type actions: L{numpy.ndarray}
    @param alpha: inverse temperature
    @type alpha: L{float}
    @param max_weight: cap of the weights
    @type max_weight: L{float}
    @return: weights of shape (n, )
    @rtype: L{numpy.ndarray}
    """
    return awr_weights(critic.q_min(states, actions), critic.value(states), alpha, max_weight)


class GaussianPolicy(object):
    """
    A state independent Gaussian policy.

    Provides the same C{sample(state, rng, n)} interface as the
    diffusion behavior model.

    @ivar mean: mean action
    @type mean: L{numpy.ndarray}
    @ivar cov: covariance of the actions
    @type cov: L{numpy.ndarray}
    @ivar beta: the inverse temperature this policy was fitted with
    @type beta: L{float}
    """
    def __init__(self, mean, cov, beta=None):
        self.mean = np.asarray(mean, dtype=constants.DTYPE).reshape(-1)
        self.cov = np.asarray(cov, dtype=constants.DTYPE).reshape(self.mean.size, self.mean.size)
        self.beta = beta

    def __repr__(self):
        return "<GaussianPolicy mean={} beta={}>".format(self.mean.tolist(), self.beta)

    def sample(self, state, rng, n=1):
        """
        Draw actions, ignoring the state.

        @rtype: L{numpy.ndarray}
        """
        return rng.multivariate_normal(self.mean, self.cov, size=n)


def fit_gaussian_awr(actions, advantages, beta, ridge=1e-6):
    """
    Fit a Gaussian by exp(beta * A) weighted maximum likelihood.

    The weighted mean and covariance are the closed form maximizers.

    @param actions: actions, shape (n, action_dim)
    @type actions: L{numpy.ndarray}
    @param advantages: advantage of every action, shape (n, )
    @type advantages: L{numpy.ndarray}
    @param beta: inverse temperature
    @type beta: L{float}
    @param ridge: added to the diagonal of the covariance
    @type ridge: L{float}
    @return: the fitted policy
    @rtype: L{GaussianPolicy}
    @raises pyidql.exceptions.EmptyDataset: if there are no actions
    """
    actions = np.asarray(actions, dtype=constants.DTYPE)
    if actions.ndim == 1:
        actions = actions.reshape(-1, 1)
    advantages = np.asarray(advantages, dtype=constants.DTYPE).reshape(-1)
    if actions.shape[0] == 0:
        raise EmptyDataset("Can not fit a policy without actions!")
    if advantages.shape[0] != actions.shape[0]:
        raise ValueError("Got {} advantages for {} actions".format(advantages.shape[0], actions.shape[0]))
    if beta < 0:
        raise ValueError("beta must be nonnegative, got {}!".format(beta))
    logits = beta * (advantages - np.max(advantages))
    w = np.exp(logits)
    w /= np.sum(w)
    mean = w @ actions
    centered = actions - mean
    cov = (centered * w[:, None]).T @ centered + ridge * np.eye(actions.shape[1])
    logger.debug("AWR fit with beta={}: mean={}".format(beta, mean.tolist()))
    return GaussianPolicy(mean, cov, beta=beta)
