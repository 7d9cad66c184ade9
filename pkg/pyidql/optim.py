"""
Optimizers: Adam with optional cosine learning rate decay, and the EMA update of target networks.

@var logger: logger used by the optimizers
@type logger: L{logging.Logger}
"""
import logging
import math

import numpy as np

from . import constants
from .paramset import ParamSet


logger = logging.getLogger(__name__)


class OptimizerState(object):
    """
    Adam moment accumulators for one L{pyidql.paramset.ParamSet}.

    The step index used for the bias correction and for the learning
    rate schedule is the C{step_count} of the parameter set minus
    C{start_step}, the step count at which this state was created.

    @ivar lr: base learning rate
    @type lr: L{float}
    @ivar horizon: number of steps of the cosine decay, L{None} for a constant rate
    @type horizon: L{int} or L{None}
    @ivar beta1: decay of the first moment
    @type beta1: L{float}
    @ivar beta2: decay of the second moment
    @type beta2: L{float}
    @ivar eps: denominator epsilon
    @type eps: L{float}
    @ivar start_step: step count of the parameter set at step 0 of the schedule
    @type start_step: L{int}
    @ivar m: first moments, keyed by parameter path
    @type m: L{dict} of L{str} -> L{numpy.ndarray}
    @ivar v: second moments, keyed by parameter path
    @type v: L{dict} of L{str} -> L{numpy.ndarray}
    """
    def __init__(self, params, lr=constants.DEFAULT_LR, horizon=None, beta1=0.9, beta2=0.999, eps=1e-8, start_step=None):
        """
        The default constructor.

        @param params: the parameters this state belongs to
        @type params: L{pyidql.paramset.ParamSet}
        @param lr: base learning rate
        @type lr: L{float}
        @param horizon: number of steps of the cosine decay, L{None} to disable it
        @type horizon: L{int} or L{None}
        @param beta1: decay of the first moment
        @type beta1: L{float}
        @param beta2: decay of the second moment
        @type beta2: L{float}
        @param eps: denominator epsilon
        @type eps: L{float}
        @param start_step: step count at step 0 of the schedule, L{None} for the current one
        @type start_step: L{int} or L{None}
        """
        assert isinstance(params, ParamSet)
        if lr < 0:
            raise ValueError("Learning rate must not be negative, got {}!".format(lr))
        if horizon is not None and (not isinstance(horizon, int) or horizon < 1):
            raise ValueError("Decay horizon must be a positive integer or None, got {!r}!".format(horizon))
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("Adam betas must be in [0, 1), got {} and {}!".format(beta1, beta2))
        self.lr = float(lr)
        self.horizon = horizon
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.start_step = params.step_count if start_step is None else int(start_step)
        self.m = {path: np.zeros(t.shape, dtype=constants.DTYPE) for path, t in params.items()}
        self.v = {path: np.zeros(t.shape, dtype=constants.DTYPE) for path, t in params.items()}

    def learning_rate(self, step):
        """
        Return the effective learning rate at a step.

        With cosine decay, this is lr * 0.5 * (1 + cos(pi * step / horizon)),
        clamped at 0 for steps beyond the horizon.

        @param step: index of the step
        @type step: L{int}
        @return: the learning rate, in [0, lr]
        @rtype: L{float}
        """
        if self.horizon is None:
            return self.lr
        progress = min(step, self.horizon) / self.horizon
        return max(0.0, self.lr * 0.5 * (1.0 + math.cos(math.pi * progress)))


def adam_step(params, opt):
    """
    Apply one Adam update with bias correction to all parameters with a gradient.

    Parameters without a gradient are left untouched. The step count of
    the parameter set is incremented.

    @param params: parameters to update, gradients populated
    @type params: L{pyidql.paramset.ParamSet}
    @param opt: optimizer state of these parameters
    @type opt: L{OptimizerState}
    @return: the learning rate used for this step
    @rtype: L{float}
    @raises pyidql.exceptions.NonMutable: if the parameters are frozen
    """
    assert isinstance(params, ParamSet)
    assert isinstance(opt, OptimizerState)
    with params.lock:
        params.ensure_mutable()
        step = params.step_count - opt.start_step
        lr = opt.learning_rate(step)
        t = step + 1
        c1 = 1.0 - opt.beta1 ** t
        c2 = 1.0 - opt.beta2 ** t
        for path, tensor in params.items():
            if tensor.grad is None:
                continue
            g = tensor.grad
            m = opt.m[path]
            v = opt.v[path]
            m *= opt.beta1
            m += (1.0 - opt.beta1) * g
            v *= opt.beta2
            v += (1.0 - opt.beta2) * g * g
            tensor.data -= lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
        params.step_count += 1
        params.mark_dirty()
    logger.log(constants.LOG_LEVEL_STEP, "Adam step {} with lr={}".format(t, lr))
    return lr


def ema_update(target, online, eta):
    """
    Move the target parameters towards the online parameters.

    Elementwise target <- (1 - eta) * target + eta * online.

    @param target: parameters to update
    @type target: L{pyidql.paramset.ParamSet}
    @param online: parameters to track
    @type online: L{pyidql.paramset.ParamSet}
    @param eta: tracking rate in [0, 1]
    @type eta: L{float}
    @return: the target
    @rtype: L{pyidql.paramset.ParamSet}
    @raises pyidql.exceptions.ParamMismatch: if paths or shapes differ
    @raises pyidql.exceptions.NonMutable: if the target is frozen
    """
    if not (0.0 <= eta <= 1.0):
        raise ValueError("EMA rate must be in [0, 1], got {}!".format(eta))
    target.assert_compatible(online)
    with target.lock:
        target.ensure_mutable()
        for path, tensor in target.items():
            tensor.data[...] = (1.0 - eta) * tensor.data + eta * online[path].data
        target.mark_dirty()
    return target
