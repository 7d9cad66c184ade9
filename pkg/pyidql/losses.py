"""
The convex loss family of the generalized implicit critic.

A critic trained with a convex loss f fits V(s) to the minimizer of
E_mu[f(Q(s, a) - V(s))]. For every such f with f'(0) = 0 this value is
also the mean of Q under an implicit actor pi_imp(a|s) proportional to
mu(a|s) * |f'(Q - V)| / |Q - V|. This module provides the three supported
families, exact value solvers on discrete distributions, the implicit
weights and the implicit actor itself.

Families (u = Q - V):

    - expectile(tau):   f(u) = |tau - 1(u < 0)| * u^2
    - quantile(tau):    f(u) = |tau - 1(u < 0)| * |u|, with f'(0) = 0
    - exponential(a):   f(u) = exp(a * u) - a * u, whose minimizer is the
                        log-sum-exp value (1 / a) * log sum_a mu * exp(a * Q)
                        and f(0) = 1; the constant offset leaves V* and
                        the weights unchanged

The value solvers here are exact: closed forms or sorted scans of the
support. Golden-section search is only used as an independent check in
L{pyidql.oracles}.

@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import enum
import logging

import numpy as np

from . import constants
from . import tensor as tg
from .exceptions import LossOverflow, InvalidDistribution, DegenerateWeights


logger = logging.getLogger(__name__)


class LossKind(enum.IntEnum):
    """
    An enum of the supported loss families.
    """
    EXPECTILE = 0
    QUANTILE = 1
    EXPONENTIAL = 2


class ConvexLoss(object):
    """
    A member of the convex loss family.

    @ivar kind: the loss family
    @type kind: L{LossKind}
    @ivar param: tau in (0, 1) for expectile/quantile, alpha > 0 for exponential
    @type param: L{float}
    @ivar epsilon: clamp for the singular denominators of the implicit weights
    @type epsilon: L{float}
    """
    def __init__(self, kind, param, epsilon=constants.EPSILON):
        """
        The default constructor.

        @param kind: the loss family
        @type kind: L{LossKind} or L{str}
        @param param: parameter of the loss
        @type param: L{float}
        @param epsilon: clamp for singular weight denominators
        @type epsilon: L{float}
        @raises ValueError: if the parameter is out of range for the family
        """
        if isinstance(kind, str):
            try:
                kind = LossKind[kind.upper()]
            except KeyError:
                raise ValueError("Unknown loss family: '{}'".format(kind))
        kind = LossKind(kind)
        param = float(param)
        if kind in (LossKind.EXPECTILE, LossKind.QUANTILE):
            if not (0.0 < param < 1.0):
                raise ValueError("tau must be in (0, 1) for the {} loss, got {}!".format(kind.name.lower(), param))
        elif not (0.0 < param < np.inf):
            raise ValueError("alpha must be in (0, inf) for the exponential loss, got {}!".format(param))
        if not epsilon > 0:
            raise ValueError("epsilon must be positive, got {}!".format(epsilon))
        self.kind = kind
        self.param = param
        self.epsilon = float(epsilon)

    @classmethod
    def expectile(cls, tau):
        """
        Shortcut for an expectile loss.

        @rtype: L{ConvexLoss}
        """
        return cls(LossKind.EXPECTILE, tau)

    @classmethod
    def quantile(cls, tau):
        """
        Shortcut for a quantile loss.

        @rtype: L{ConvexLoss}
        """
        return cls(LossKind.QUANTILE, tau)

    @classmethod
    def exponential(cls, alpha):
        """
        Shortcut for an exponential (linex) loss.

        f(u) = exp(alpha * u) - alpha * u is normalized so that f(0) = 1
        rather than 0. Only f' enters V* and the implicit weights.

        @rtype: L{ConvexLoss}
        """
        return cls(LossKind.EXPONENTIAL, alpha)

    @classmethod
    def parse(cls, s):
        """
        Parse a loss from its string form, e.g. C{"expectile:0.9"}.

        @param s: string to parse
        @type s: L{str}
        @return: the loss
        @rtype: L{ConvexLoss}
        @raises ValueError: on a malformed string
        """
        if ":" not in s:
            raise ValueError("Expected '<family>:<param>', got '{}'".format(s))
        name, param = s.split(":", 1)
        try:
            value = float(param)
        except ValueError:
            raise ValueError("Invalid loss parameter '{}' in '{}'".format(param, s))
        return cls(name.strip(), value)

    def to_string(self):
        """
        Dump this loss as a string that L{ConvexLoss.parse} accepts.

        @rtype: L{str}
        """
        return "{}:{!r}".format(self.kind.name.lower(), self.param)

    def __repr__(self):
        return "ConvexLoss({})".format(self.to_string())

    def __eq__(self, other):
        if not isinstance(other, ConvexLoss):
            return NotImplemented
        return (self.kind, self.param, self.epsilon) == (other.kind, other.param, other.epsilon)

    def __hash__(self):
        return hash((self.kind, self.param, self.epsilon))

    # ================ elementwise functions ==================

    def _asym(self, u):
        return np.where(u < 0, 1.0 - self.param, self.param)

    def value(self, u):
        """
        Evaluate f elementwise.

        @param u: residuals Q - V
        @type u: L{float} or L{numpy.ndarray}
        @return: f(u)
        @rtype: L{numpy.ndarray}
        @raises pyidql.exceptions.LossOverflow: if the exponential would overflow
        """
        u = np.asarray(u, dtype=constants.DTYPE)
        if self.kind == LossKind.EXPECTILE:
            return self._asym(u) * u * u
        elif self.kind == LossKind.QUANTILE:
            return self._asym(u) * np.abs(u)
        else:
            z = self._checked_exponent(u)
            return np.exp(z) - z

    def deriv(self, u):
        """
        Evaluate f' elementwise.

        @param u: residuals Q - V
        @type u: L{float} or L{numpy.ndarray}
        @return: f'(u), with f'(0) = 0 for every family
        @rtype: L{numpy.ndarray}
        @raises pyidql.exceptions.LossOverflow: if the exponential would overflow
        """
        u = np.asarray(u, dtype=constants.DTYPE)
        if self.kind == LossKind.EXPECTILE:
            return 2.0 * self._asym(u) * u
        elif self.kind == LossKind.QUANTILE:
            return self._asym(u) * np.sign(u)
        else:
            z = self._checked_exponent(u)
            return self.param * np.expm1(z)

    def _checked_exponent(self, u):
        z = self.param * u
        if np.any(z > constants.EXP_OVERFLOW):
            raise LossOverflow(
                "Exponential loss overflow: alpha * (Q - V) = {} > {}; rescale the Q-values or lower alpha".format(
                    float(np.max(z)), constants.EXP_OVERFLOW,
                )
            )
        return z

    def weight(self, q, v):
        """
        Evaluate the implicit weight |f'(q - v)| / |q - v| elementwise.

        For the expectile the factor 2 of f' is dropped, it cancels in the
        normalization. The quantile weight clamps the denominator at
        epsilon. The exponential weight uses its limit alpha^2 where
        |q - v| < epsilon.

        @param q: Q-values
        @type q: L{float} or L{numpy.ndarray}
        @param v: values, broadcast against q
        @type v: L{float} or L{numpy.ndarray}
        @return: the nonnegative weights
        @rtype: L{numpy.ndarray}
        @raises ValueError: on non-finite inputs
        """
        q = np.asarray(q, dtype=constants.DTYPE)
        v = np.asarray(v, dtype=constants.DTYPE)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise ValueError("Implicit weights require finite q and v!")
        u = q - v
        if self.kind == LossKind.EXPECTILE:
            return self._asym(u)
        elif self.kind == LossKind.QUANTILE:
            return self._asym(u) / np.maximum(np.abs(u), self.epsilon)
        else:
            alpha = self.param
            small = np.abs(u) < self.epsilon
            safe_u = np.where(small, 1.0, u)
            w = alpha * np.abs(np.expm1(self._checked_exponent(safe_u))) / np.abs(safe_u)
            return np.where(small, alpha * alpha, w)

    def tensor_value(self, u):
        """
        Apply f to a tensor of residuals, with gradient support.

        @param u: residuals
        @type u: L{pyidql.tensor.Tensor}
        @return: f(u)
        @rtype: L{pyidql.tensor.Tensor}
        """
        return tg.apply(u, self.value, self.deriv)


def loss_value(loss, u):
    """
    Return f(u) for a single residual.

    @param loss: the loss
    @type loss: L{ConvexLoss}
    @param u: the residual
    @type u: L{float}
    @return: f(u)
    @rtype: L{float}
    """
    return float(loss.value(u))


def loss_deriv(loss, u):
    """
    Return f'(u) for a single residual.

    @param loss: the loss
    @type loss: L{ConvexLoss}
    @param u: the residual
    @type u: L{float}
    @return: f'(u)
    @rtype: L{float}
    """
    return float(loss.deriv(u))


def implicit_weight(loss, q, v):
    """
    Return the implicit weight w for a Q-value and a value.

    @param loss: the loss
    @type loss: L{ConvexLoss}
    @param q: the Q-value
    @type q: L{float}
    @param v: the value
    @type v: L{float}
    @return: the weight
    @rtype: L{float}
    """
    return float(loss.weight(q, v))


class DiscreteActionDistribution(object):
    """
    Q-values and behavior probabilities over a finite set of actions.

    @ivar q_values: Q(s, a) per action
    @type q_values: L{numpy.ndarray}
    @ivar probs: mu(a|s) per action
    @type probs: L{numpy.ndarray}
    """
    PROB_TOLERANCE = 1e-12

    def __init__(self, q_values, probs):
        """
        The default constructor.

        @param q_values: Q-value per action
        @type q_values: array-like
        @param probs: behavior probability per action
        @type probs: array-like
        @raises pyidql.exceptions.InvalidDistribution: if the inputs are not valid
        """
        q_values = np.array(q_values, dtype=constants.DTYPE).reshape(-1)
        probs = np.array(probs, dtype=constants.DTYPE).reshape(-1)
        if q_values.size == 0:
            raise InvalidDistribution("A distribution needs at least one action!")
        if q_values.shape != probs.shape:
            raise InvalidDistribution(
                "Got {} Q-values but {} probabilities!".format(q_values.size, probs.size)
            )
        if not (np.all(np.isfinite(q_values)) and np.all(np.isfinite(probs))):
            raise InvalidDistribution("Q-values and probabilities must be finite!")
        if np.any(probs < 0):
            raise InvalidDistribution("Probabilities must be nonnegative!")
        total = float(np.sum(probs))
        if abs(total - 1.0) > self.PROB_TOLERANCE:
            raise InvalidDistribution("Probabilities must sum to 1, got {!r}!".format(total))
        self.q_values = q_values
        self.probs = probs
        self.q_values.flags.writeable = False
        self.probs.flags.writeable = False

    def __len__(self):
        return self.q_values.size

    def __repr__(self):
        return "DiscreteActionDistribution(n_actions={})".format(len(self))

    @classmethod
    def uniform(cls, q_values):
        """
        Create a distribution with uniform behavior probabilities.

        @param q_values: Q-value per action
        @type q_values: array-like
        @rtype: L{DiscreteActionDistribution}
        """
        q_values = np.asarray(q_values, dtype=constants.DTYPE).reshape(-1)
        if q_values.size == 0:
            raise InvalidDistribution("A distribution needs at least one action!")
        return cls(q_values, np.full(q_values.size, 1.0 / q_values.size))

    @classmethod
    def from_weights(cls, q_values, weights):
        """
        Create a distribution from unnormalized nonnegative behavior weights.

        @param q_values: Q-value per action
        @type q_values: array-like
        @param weights: unnormalized probabilities
        @type weights: array-like
        @rtype: L{DiscreteActionDistribution}
        """
        weights = np.asarray(weights, dtype=constants.DTYPE).reshape(-1)
        total = float(np.sum(weights))
        if not total > 0:
            raise InvalidDistribution("Behavior weights must have a positive sum!")
        return cls(q_values, weights / total)

    @classmethod
    def random(cls, rng, n_actions, low=-5.0, high=5.0):
        """
        Draw a random distribution, Q ~ U[low, high] and mu from a flat Dirichlet.

        @param rng: random stream
        @type rng: L{numpy.random.Generator}
        @param n_actions: number of actions
        @type n_actions: L{int}
        @rtype: L{DiscreteActionDistribution}
        """
        q = rng.uniform(low, high, size=n_actions)
        mu = rng.dirichlet(np.ones(n_actions))
        return cls.from_weights(q, mu)

    def mean(self):
        """
        Return E_mu[Q].

        @rtype: L{float}
        """
        return float(np.dot(self.probs, self.q_values))

    def expected_loss(self, loss, v):
        """
        Return E_mu[f(Q - v)].

        @param loss: the loss
        @type loss: L{ConvexLoss}
        @param v: candidate value
        @type v: L{float}
        @rtype: L{float}
        """
        return float(np.dot(self.probs, loss.value(self.q_values - v)))

    def support(self):
        """
        Return the sorted distinct Q-values with positive mass and their masses.

        @return: (values, masses)
        @rtype: L{tuple} of L{numpy.ndarray}
        """
        mask = self.probs > 0
        values, inverse = np.unique(self.q_values[mask], return_inverse=True)
        masses = np.zeros(values.size, dtype=constants.DTYPE)
        np.add.at(masses, inverse, self.probs[mask])
        return values, masses


def _check_exponential_scale(alpha, dist):
    spread = float(np.max(dist.q_values) - np.min(dist.q_values))
    if alpha * spread > constants.EXP_SCALE_WARNING:
        logger.warning(
            "alpha * (max Q - min Q) = {:.3g} exceeds {}; the exponential loss may overflow, consider rescaling Q".format(
                alpha * spread, constants.EXP_SCALE_WARNING,
            )
        )


def exponential_value(alpha, dist):
    """
    Return the log-sum-exp value (1 / alpha) * log sum_a exp(alpha * Q(a) + log mu(a)).

    @param alpha: inverse temperature, positive
    @type alpha: L{float}
    @param dist: the distribution
    @type dist: L{DiscreteActionDistribution}
    @rtype: L{float}
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive, got {}!".format(alpha))
    mask = dist.probs > 0
    z = alpha * dist.q_values[mask] + np.log(dist.probs[mask])
    return float(np.logaddexp.reduce(z) / alpha)


def _expectile_value(tau, values, masses):
    # E[w(V) * (Q - V)] is piecewise linear and decreasing in V, root found per segment
    if values.size == 1:
        return float(values[0])
    mq = masses * values
    below_m = np.cumsum(masses)[:-1]
    below_mq = np.cumsum(mq)[:-1]
    above_m = masses.sum() - below_m
    above_mq = mq.sum() - below_mq
    a = (1.0 - tau) * below_mq + tau * above_mq
    b = (1.0 - tau) * below_m + tau * above_m
    roots = a / b
    lo, hi = values[:-1], values[1:]
    violation = np.maximum(np.maximum(lo - roots, roots - hi), 0.0)
    j = int(np.argmin(violation))
    return float(np.clip(roots[j], lo[j], hi[j]))


def _quantile_value(tau, values, masses, tolerance):
    cdf = np.cumsum(masses)
    j = int(np.searchsorted(cdf, tau - tolerance, side="left"))
    j = min(j, values.size - 1)
    if abs(cdf[j] - tau) <= tolerance and j + 1 < values.size:
        # every point of [values[j], values[j + 1]] is a minimizer
        return float(0.5 * (values[j] + values[j + 1]))
    return float(values[j])


def solve_value(loss, dist):
    """
    Return V*, the minimizer of E_mu[f(Q - V)].

    The expectile is found as the root of its piecewise linear
    stationarity condition, the quantile as the weighted quantile (the
    midpoint of the minimizing interval if it is not unique) and the
    exponential value by its closed log-sum-exp form.

    @param loss: the loss
    @type loss: L{ConvexLoss}
    @param dist: the distribution
    @type dist: L{DiscreteActionDistribution}
    @return: V*, within [min Q, max Q]
    @rtype: L{float}
    @raises pyidql.exceptions.InvalidDistribution: if dist is not a distribution
    """
    if not isinstance(dist, DiscreteActionDistribution):
        raise InvalidDistribution("Expected a DiscreteActionDistribution, got {} instead!".format(type(dist)))
    if loss.kind == LossKind.EXPONENTIAL:
        _check_exponential_scale(loss.param, dist)
        v = exponential_value(loss.param, dist)
    else:
        values, masses = dist.support()
        if loss.kind == LossKind.EXPECTILE:
            v = _expectile_value(loss.param, values, masses)
        else:
            v = _quantile_value(loss.param, values, masses, DiscreteActionDistribution.PROB_TOLERANCE)
    return float(np.clip(v, np.min(dist.q_values), np.max(dist.q_values)))


def implicit_policy(loss, dist, v=None):
    """
    Return the implicit actor pi_imp(a) proportional to mu(a) * w(a).

    @param loss: the loss
    @type loss: L{ConvexLoss}
    @param dist: the distribution
    @type dist: L{DiscreteActionDistribution}
    @param v: the value to weight against, defaults to L{solve_value}
    @type v: L{float} or L{None}
    @return: probability per action
    @rtype: L{numpy.ndarray}
    @raises pyidql.exceptions.DegenerateWeights: if all weights vanish
    """
    if v is None:
        v = solve_value(loss, dist)
    unnormalized = dist.probs * loss.weight(dist.q_values, v)
    z = float(np.sum(unnormalized))
    if not z > 0:
        raise DegenerateWeights("All implicit weights are zero for {!r}!".format(loss))
    return unnormalized / z


def kl_behavior_to_awr(alpha, dist):
    """
    Return KL(mu || pi_exp) for pi_exp proportional to mu * exp(alpha * Q).

    Two numbers are computed: the direct sum of mu * log(mu / pi_exp) and
    the closed form E_mu[alpha * (V_exp - Q)]. They agree analytically.

    @param alpha: inverse temperature, nonnegative
    @type alpha: L{float}
    @param dist: the distribution
    @type dist: L{DiscreteActionDistribution}
    @return: (direct, closed_form)
    @rtype: L{tuple} of L{float}
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative, got {}!".format(alpha))
    if alpha == 0:
        return 0.0, 0.0
    mask = dist.probs > 0
    q = dist.q_values[mask]
    mu = dist.probs[mask]
    unnormalized = mu * np.exp(alpha * (q - np.max(q)))
    pi_exp = unnormalized / np.sum(unnormalized)
    direct = float(np.sum(mu * np.log(mu / pi_exp)))
    v_exp = exponential_value(alpha, dist)
    closed = float(np.sum(mu * alpha * (v_exp - q)))
    return direct, closed
