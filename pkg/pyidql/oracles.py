"""
Brute-force verifiers for the closed forms and solvers of this package.

Nothing in this module reuses the solvers it checks: the loss families
are re-stated here from their definitions and every value is found by
golden-section search or by plain tabular dynamic programming.

@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import logging
import math

import numpy as np

from . import constants


logger = logging.getLogger(__name__)

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_MAX_ITERATIONS = 500


def minimize_1d_convex(objective, lo, hi, tol=constants.GOLDEN_TOLERANCE, difference=None):
    """
    Minimize a convex (or unimodal) function on an interval by golden-section search.

    The search stops once the bracket is narrower than tol and returns
    its midpoint.

    @param objective: function to minimize
    @type objective: callable taking and returning a L{float}
    @param lo: lower end of the interval
    @type lo: L{float}
    @param hi: upper end of the interval
    @type hi: L{float}
    @param tol: width of the final bracket
    @type tol: L{float}
    @param difference: optional callable (x, y) -> objective(x) - objective(y), for
        objectives whose difference can be computed with less cancellation
    @type difference: callable or L{None}
    @return: the approximate minimizer
    @rtype: L{float}
    @raises ValueError: if lo >= hi or tol is not positive
    """
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValueError("Expected lo < hi, got lo={}, hi={}".format(lo, hi))
    if not tol > 0:
        raise ValueError("tol must be positive, got {}!".format(tol))
    if difference is None:
        def difference(x, y):
            return objective(x) - objective(y)
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    iterations = 0
    while (b - a) > tol and iterations < _MAX_ITERATIONS:
        if difference(c, d) < 0:
            b = d
            d = c
            c = b - _INV_PHI * (b - a)
        else:
            a = c
            c = d
            d = a + _INV_PHI * (b - a)
        iterations += 1
    return 0.5 * (a + b)


# ================== loss families, restated ==================

def _asymmetry(tau, u):
    return np.where(u < 0, 1.0 - tau, tau)


def family_loss(kind, param, u):
    """
    Evaluate a loss family by its definition.

    @param kind: one of C{"expectile"}, C{"quantile"}, C{"exponential"}
    @type kind: L{str}
    @param param: tau or alpha
    @type param: L{float}
    @param u: residuals
    @type u: L{numpy.ndarray}
    @rtype: L{numpy.ndarray}
    """
    u = np.asarray(u, dtype=constants.DTYPE)
    if kind == "expectile":
        return _asymmetry(param, u) * u ** 2
    elif kind == "quantile":
        return _asymmetry(param, u) * np.abs(u)
    elif kind == "exponential":
        return np.exp(param * u) - param * u
    raise ValueError("Unknown loss family: '{}'".format(kind))


def family_derivative(kind, param, u):
    """
    Evaluate the derivative of a loss family by its definition, with f'(0) = 0.

    @param kind: one of C{"expectile"}, C{"quantile"}, C{"exponential"}
    @type kind: L{str}
    @param param: tau or alpha
    @type param: L{float}
    @param u: residuals
    @type u: L{numpy.ndarray}
    @rtype: L{numpy.ndarray}
    """
    u = np.asarray(u, dtype=constants.DTYPE)
    if kind == "expectile":
        return 2.0 * _asymmetry(param, u) * u
    elif kind == "quantile":
        return np.where(u > 0, param, np.where(u < 0, param - 1.0, 0.0))
    elif kind == "exponential":
        return param * (np.exp(param * u) - 1.0)
    raise ValueError("Unknown loss family: '{}'".format(kind))


def _objective_difference(kind, param, q, mu):
    """
    Return a callable (x, y) -> E_mu[f(Q - x)] - E_mu[f(Q - y)] with little cancellation.
    """
    if kind == "expectile":
        def difference(x, y):
            ux, uy = q - x, q - y
            ax, ay = _asymmetry(param, ux), _asymmetry(param, uy)
            same = ax == ay
            # a * (ux^2 - uy^2) = a * (y - x) * (2q - x - y) where both sides share a weight
            terms = np.where(same, ax * (y - x) * (2.0 * q - x - y), ax * ux ** 2 - ay * uy ** 2)
            return float(np.dot(mu, terms))
        return difference
    elif kind == "exponential":
        def difference(x, y):
            # exp(a(q - x)) - exp(a(q - y)) = -exp(a(q - x)) * expm1(a(x - y))
            terms = -np.exp(param * (q - x)) * np.expm1(param * (x - y))
            return float(np.dot(mu, terms)) - param * (y - x)
        return difference
    return None


def oracle_value(kind, param, q_values, probs, tol=constants.GOLDEN_TOLERANCE):
    """
    Minimize E_mu[f(Q - V)] over [min Q, max Q] by golden-section search.

    @param kind: one of C{"expectile"}, C{"quantile"}, C{"exponential"}
    @type kind: L{str}
    @param param: tau or alpha
    @type param: L{float}
    @param q_values: Q-value per action
    @type q_values: array-like
    @param probs: behavior probability per action
    @type probs: array-like
    @param tol: width of the final bracket
    @type tol: L{float}
    @return: the minimizing value
    @rtype: L{float}
    """
    q = np.asarray(q_values, dtype=constants.DTYPE)
    mu = np.asarray(probs, dtype=constants.DTYPE)
    lo, hi = float(np.min(q)), float(np.max(q))
    if lo == hi:
        return lo

    def objective(v):
        return float(np.dot(mu, family_loss(kind, param, q - v)))

    return minimize_1d_convex(objective, lo, hi, tol=tol, difference=_objective_difference(kind, param, q, mu))


class AuditReport(object):
    """
    Residuals of one implicit actor audit.

    @ivar family: name of the loss family
    @type family: L{str}
    @ivar param: tau or alpha
    @type param: L{float}
    @ivar n_actions: number of actions of the audited distribution
    @type n_actions: L{int}
    @ivar v_solver: V* computed by the family solver
    @type v_solver: L{float}
    @ivar v_oracle: V* computed by golden-section search
    @type v_oracle: L{float}
    @ivar value_residual: |v_solver - v_oracle|
    @type value_residual: L{float}
    @ivar fixed_point_residual: |E_pi_imp[Q] - v_solver|
    @type fixed_point_residual: L{float}
    @ivar stationarity_residual: |E_mu[f'(Q - v_solver)]|
    @type stationarity_residual: L{float}
    @ivar stationarity_bound: largest acceptable stationarity residual
    @type stationarity_bound: L{float}
    @ivar tolerance: tolerance applied to the value and fixed point residuals
    @type tolerance: L{float}
    """
    FIELDS = (
        "family", "param", "n_actions", "v_solver", "v_oracle", "value_residual",
        "fixed_point_residual", "stationarity_residual", "stationarity_bound", "passed",
    )

    def __init__(self, family, param, n_actions, v_solver, v_oracle, fixed_point_residual, stationarity_residual, stationarity_bound, tolerance):
        self.family = family
        self.param = param
        self.n_actions = n_actions
        self.v_solver = v_solver
        self.v_oracle = v_oracle
        self.value_residual = abs(v_solver - v_oracle)
        self.fixed_point_residual = fixed_point_residual
        self.stationarity_residual = stationarity_residual
        self.stationarity_bound = stationarity_bound
        self.tolerance = tolerance

    @property
    def passed(self):
        """
        True if every residual is within its bound.

        @rtype: L{bool}
        """
        return (
            self.value_residual <= self.tolerance
            and self.fixed_point_residual <= self.tolerance
            and self.stationarity_residual <= self.stationarity_bound
        )

    def to_dict(self):
        """
        Return this report as a JSON-serializable dict.

        @rtype: L{dict}
        """
        return {name: getattr(self, name) for name in self.FIELDS}


def fixed_point_audit(loss, dist, tolerance=1e-6):
    """
    Audit the implicit actor of a loss on a discrete distribution.

    V* is computed by the family solver of L{pyidql.losses} and by
    golden-section search. The implicit actor must reproduce V* as its
    expected Q-value, and E_mu[f'(Q - V*)] must vanish. For the quantile
    loss the latter is relaxed to the subgradient condition: the
    residual may not exceed the mass of the atoms at V*.

    Failures are reported, never raised.

    @param loss: the loss
    @type loss: L{pyidql.losses.ConvexLoss}
    @param dist: the distribution
    @type dist: L{pyidql.losses.DiscreteActionDistribution}
    @param tolerance: tolerance of the value and fixed point residuals
    @type tolerance: L{float}
    @return: the residuals
    @rtype: L{AuditReport}
    """
    from .losses import solve_value, implicit_policy

    family = loss.kind.name.lower()
    q, mu = dist.q_values, dist.probs
    v_solver = solve_value(loss, dist)
    v_oracle = oracle_value(family, loss.param, q, mu)
    pi_imp = implicit_policy(loss, dist, v=v_solver)
    fixed_point = abs(float(np.dot(pi_imp, q)) - v_solver)
    stationarity = abs(float(np.dot(mu, family_derivative(family, loss.param, q - v_solver))))
    if family == "quantile":
        at_kink = np.abs(q - v_solver) <= loss.epsilon
        bound = float(np.sum(mu[at_kink])) + tolerance
    else:
        bound = tolerance
    report = AuditReport(
        family=family,
        param=loss.param,
        n_actions=len(dist),
        v_solver=v_solver,
        v_oracle=v_oracle,
        fixed_point_residual=fixed_point,
        stationarity_residual=stationarity,
        stationarity_bound=bound,
        tolerance=tolerance,
    )
    if not report.passed:
        logger.warning("Audit failed for {}:{}: {}".format(family, loss.param, report.to_dict()))
    return report


# ===================== tabular oracles =======================

def value_iteration(grid, tol=1e-10, gamma=None):
    """
    Compute the optimal value table and a greedy policy of a grid world.

    @param grid: the grid world
    @type grid: L{pyidql.envs.GridWorld}
    @param tol: stop once successive tables differ by less than this in sup-norm
    @type tol: L{float}
    @param gamma: discount, defaults to the discount of the grid
    @type gamma: L{float} or L{None}
    @return: the value per state and the greedy action per state (lowest index on ties)
    @rtype: L{tuple} of (L{numpy.ndarray}, L{numpy.ndarray})
    """
    gamma = grid.gamma if gamma is None else gamma
    if not (0.0 <= gamma < 1.0):
        raise ValueError("Value iteration requires a discount in [0, 1), got {}!".format(gamma))
    p, r, d = grid.tabular()
    continuation = p * (1.0 - d)[:, :, None]
    v = np.zeros(grid.n_states, dtype=constants.DTYPE)
    iterations = 0
    while True:
        q = r + gamma * continuation @ v
        new_v = q.max(axis=1)
        delta = float(np.max(np.abs(new_v - v)))
        v = new_v
        iterations += 1
        if delta < tol:
            break
    q = r + gamma * continuation @ v
    policy = np.argmax(q, axis=1)
    logger.debug("Value iteration converged after {} iterations".format(iterations))
    return v, policy


def _policy_matrix(grid, policy):
    policy = np.asarray(policy)
    if policy.ndim == 1:
        matrix = np.zeros((grid.n_states, grid.n_actions), dtype=constants.DTYPE)
        matrix[np.arange(grid.n_states), policy.astype(int)] = 1.0
        return matrix
    return np.asarray(policy, dtype=constants.DTYPE)


def policy_evaluation(grid, policy, gamma=None, horizon=None):
    """
    Evaluate a policy on a grid world exactly.

    @param grid: the grid world
    @type grid: L{pyidql.envs.GridWorld}
    @param policy: action per state, or a (states, actions) matrix of probabilities
    @type policy: L{numpy.ndarray}
    @param gamma: discount, defaults to the discount of the grid
    @type gamma: L{float} or L{None}
    @param horizon: if given, evaluate the return over this many steps, otherwise over an unbounded horizon
    @type horizon: L{int} or L{None}
    @return: the value per state
    @rtype: L{numpy.ndarray}
    """
    gamma = grid.gamma if gamma is None else gamma
    pi = _policy_matrix(grid, policy)
    p, r, d = grid.tabular()
    r_pi = np.sum(pi * r, axis=1)
    p_pi = np.einsum("sa,sat->st", pi * (1.0 - d), p)
    if horizon is None:
        return np.linalg.solve(np.eye(grid.n_states) - gamma * p_pi, r_pi)
    v = np.zeros(grid.n_states, dtype=constants.DTYPE)
    for _ in range(horizon):
        v = r_pi + gamma * p_pi @ v
    return v


def optimal_return(grid):
    """
    Return the expected undiscounted episode return of the optimal policy from the start state.

    The policy is the greedy policy of L{value_iteration}, episodes are
    capped at the step limit of the grid, matching how policies are
    evaluated in the environment.

    @param grid: the grid world
    @type grid: L{pyidql.envs.GridWorld}
    @rtype: L{float}
    """
    _, policy = value_iteration(grid)
    v = policy_evaluation(grid, policy, gamma=1.0, horizon=grid.max_episode_steps)
    return float(v[grid.start_state])
