"""
DDPM behavior cloning: noise schedules, the noise prediction loss, ancestral sampling and the score networks.

A behavior model mu_phi(a|s) learns to predict the noise eps that
produced a_t = sqrt(abar_t) * a + sqrt(1 - abar_t) * eps from (a_t, s, t).
Actions are drawn by running the reverse chain from a_T ~ N(0, I)::

    a_{t-1} = (a_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t) + sqrt(beta_t) * z

where no noise is added in the last step unless requested.

@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import enum
import logging
import math

import numpy as np

from . import constants
from . import tensor as tg
from .layers import MLP, LNResNet, Activation, time_embedding, constant_input
from .optim import OptimizerState, adam_step
from .paramset import ParamSet
from .exceptions import DivergenceError
from .processor import call_processors


logger = logging.getLogger(__name__)


class ScheduleKind(enum.IntEnum):
    """
    An enum of the supported beta schedules.
    """
    LINEAR = 0
    COSINE = 1
    VP = 2

    @classmethod
    def parse(cls, name):
        """
        Parse a schedule kind from its (case insensitive) name.

        @rtype: L{ScheduleKind}
        @raises ValueError: on an unknown name
        """
        if isinstance(name, cls):
            return name
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError("Unknown beta schedule: '{}'".format(name))


class DiffusionSchedule(object):
    """
    Noise coefficients of a diffusion process with T steps.

    Arrays are indexed by t - 1 for t = 1..T.

    @ivar kind: the schedule kind, L{None} for explicit betas
    @type kind: L{ScheduleKind} or L{None}
    @ivar betas: beta_t
    @type betas: L{numpy.ndarray}
    @ivar alphas: alpha_t = 1 - beta_t
    @type alphas: L{numpy.ndarray}
    @ivar alpha_bars: running products of alpha_t
    @type alpha_bars: L{numpy.ndarray}
    """
    def __init__(self, betas, kind=None):
        """
        The default constructor.

        @param betas: beta_t for t = 1..T
        @type betas: array-like
        @param kind: the schedule kind these betas stem from
        @type kind: L{ScheduleKind} or L{None}
        @raises ValueError: if a beta is outside of (0, 1) or there are none
        """
        betas = np.array(betas, dtype=constants.DTYPE).reshape(-1)
        if betas.size < 1:
            raise ValueError("A schedule needs at least one step!")
        if not (np.all(betas > 0.0) and np.all(betas < 1.0)):
            raise ValueError("Every beta must be in (0, 1), got {}".format(betas.tolist()))
        self.kind = kind
        self.betas = betas
        self.alphas = 1.0 - betas
        self.alpha_bars = np.cumprod(self.alphas)

    @property
    def T(self):
        """
        The number of diffusion steps.

        @rtype: L{int}
        """
        return self.betas.size

    def check_step(self, t):
        """
        Ensure diffusion steps are within [1, T].

        @param t: the steps
        @type t: L{int} or L{numpy.ndarray}
        @return: the steps as an integer array
        @rtype: L{numpy.ndarray}
        @raises ValueError: if any step is out of range
        """
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T) or not np.all(np.equal(np.mod(t, 1), 0)):
            raise ValueError("Diffusion steps must be integers in [1, {}], got {}".format(self.T, t))
        return t.astype(np.int64)

    def describe(self):
        """
        Return a JSON-serializable description of this schedule.

        @rtype: L{dict}
        """
        return {
            "kind": None if self.kind is None else self.kind.name.lower(),
            "T": self.T,
            "betas": [float(b) for b in self.betas],
        }


def make_schedule(kind, T, beta_min=None, beta_max=None, offset=constants.COSINE_OFFSET, max_beta=constants.COSINE_MAX_BETA):
    """
    Create a beta schedule.

        - linear: betas evenly spaced from beta_min to beta_max. The
          defaults are 1e-4 and 0.02 scaled by 1000 / T, with the largest
          beta capped at max_beta.
        - cosine: abar_t = g(t / T) / g(0) with
          g(u) = cos((u + offset) / (1 + offset) * pi / 2)^2 and
          beta_t = 1 - abar_t / abar_{t-1}, capped at max_beta.
        - vp: the discretized variance preserving process,
          beta_t = 1 - exp(-beta_min / T - (beta_max - beta_min) * (2t - 1) / (2 T^2)),
          by default with beta_min=0.1 and beta_max=20.

    @param kind: the schedule kind
    @type kind: L{ScheduleKind} or L{str}
    @param T: number of steps
    @type T: L{int}
    @param beta_min: smallest beta (linear) or smallest rate (vp)
    @type beta_min: L{float} or L{None}
    @param beta_max: largest beta (linear) or largest rate (vp)
    @type beta_max: L{float} or L{None}
    @param offset: offset of the cosine schedule
    @type offset: L{float}
    @param max_beta: cap of the linear defaults and the cosine betas
    @type max_beta: L{float}
    @return: the schedule
    @rtype: L{DiffusionSchedule}
    @raises ValueError: if T < 1 or the resulting betas are outside of (0, 1)
    """
    kind = ScheduleKind.parse(kind)
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ValueError("T must be a positive integer, got {!r}!".format(T))
    t = np.arange(1, T + 1, dtype=constants.DTYPE)
    if kind == ScheduleKind.LINEAR:
        scale = 1000.0 / T
        start = constants.LINEAR_BETA_START * scale if beta_min is None else beta_min
        end = min(constants.LINEAR_BETA_END * scale, max_beta) if beta_max is None else beta_max
        betas = np.linspace(start, end, T)
    elif kind == ScheduleKind.COSINE:
        def g(u):
            return np.cos((u + offset) / (1.0 + offset) * math.pi / 2.0) ** 2
        grid = np.arange(0, T + 1, dtype=constants.DTYPE) / T
        abar = g(grid) / g(0.0)
        betas = np.minimum(1.0 - abar[1:] / abar[:-1], max_beta)
    else:
        lo = constants.VP_BETA_MIN if beta_min is None else beta_min
        hi = constants.VP_BETA_MAX if beta_max is None else beta_max
        betas = -np.expm1(-lo / T - (hi - lo) * (2.0 * t - 1.0) / (2.0 * T * T))
    return DiffusionSchedule(betas, kind=kind)


def forward_noise(schedule, a0, t, eps):
    """
    Noise clean actions to step t in closed form.

    @param schedule: the schedule
    @type schedule: L{DiffusionSchedule}
    @param a0: clean actions, shape (batch, action_dim)
    @type a0: L{numpy.ndarray}
    @param t: step per element, or a single step
    @type t: L{int} or L{numpy.ndarray}
    @param eps: standard normal noise of the same shape as a0
    @type eps: L{numpy.ndarray}
    @return: sqrt(abar_t) * a0 + sqrt(1 - abar_t) * eps
    @rtype: L{numpy.ndarray}
    @raises ValueError: if t is out of range or the shapes differ
    """
    a0 = np.asarray(a0, dtype=constants.DTYPE)
    eps = np.asarray(eps, dtype=constants.DTYPE)
    if a0.shape != eps.shape:
        raise ValueError("Noise shape {} does not match action shape {}".format(eps.shape, a0.shape))
    t = schedule.check_step(t)
    abar = schedule.alpha_bars[t - 1]
    if abar.ndim == 1 and a0.ndim == 2:
        abar = abar.reshape(-1, 1)
    return np.sqrt(abar) * a0 + np.sqrt(1.0 - abar) * eps


def forward_step(schedule, a_prev, t, eps):
    """
    Apply a single noising step q(a_t | a_{t-1}).

    @param schedule: the schedule
    @type schedule: L{DiffusionSchedule}
    @param a_prev: actions at step t - 1
    @type a_prev: L{numpy.ndarray}
    @param t: the step
    @type t: L{int}
    @param eps: standard normal noise of the same shape
    @type eps: L{numpy.ndarray}
    @return: sqrt(1 - beta_t) * a_prev + sqrt(beta_t) * eps
    @rtype: L{numpy.ndarray}
    """
    t = int(schedule.check_step(t))
    beta = schedule.betas[t - 1]
    return math.sqrt(1.0 - beta) * np.asarray(a_prev, dtype=constants.DTYPE) + math.sqrt(beta) * eps


class Arch(enum.IntEnum):
    """
    An enum of the score network architectures.
    """
    MLP = 0
    LNRESNET = 1

    @classmethod
    def parse(cls, name):
        """
        Parse an architecture from its (case insensitive) name.

        @rtype: L{Arch}
        @raises ValueError: on an unknown name
        """
        if isinstance(name, cls):
            return name
        try:
            return cls[name.upper().replace("_", "")]
        except KeyError:
            raise ValueError("Unknown score network architecture: '{}'".format(name))


class ScoreNetConfig(object):
    """
    Configuration of a score network.

    @ivar arch: the architecture
    @type arch: L{Arch}
    @ivar state_dim: state dimension
    @type state_dim: L{int}
    @ivar action_dim: action dimension
    @type action_dim: L{int}
    @ivar hidden_dim: width of the hidden layers
    @type hidden_dim: L{int}
    @ivar n_blocks: number of residual blocks (LNResNet)
    @type n_blocks: L{int}
    @ivar mlp_layers: number of hidden layers (MLP)
    @type mlp_layers: L{int}
    @ivar dropout: dropout rate of the residual blocks
    @type dropout: L{float}
    @ivar use_layer_norm: whether the residual blocks normalize
    @type use_layer_norm: L{bool}
    @ivar time_embed_dim: dimension of the sinusoidal step embedding
    @type time_embed_dim: L{int}
    @ivar activation: activation function
    @type activation: L{pyidql.layers.Activation}
    """
    def __init__(
        self,
        state_dim,
        action_dim,
        arch=Arch.LNRESNET,
        hidden_dim=constants.DEFAULT_HIDDEN_DIM,
        n_blocks=constants.DEFAULT_N_BLOCKS,
        mlp_layers=2,
        dropout=constants.DEFAULT_DROPOUT,
        use_layer_norm=True,
        time_embed_dim=constants.DEFAULT_TIME_EMBED_DIM,
        activation=Activation.MISH,
    ):
        """
        The default constructor.

        @raises ValueError: on invalid dimensions or dropout rate
        """
        if min(state_dim, action_dim, hidden_dim, time_embed_dim) < 1 or n_blocks < 0 or mlp_layers < 1:
            raise ValueError("Score network dimensions must be positive!")
        if time_embed_dim % 2:
            raise ValueError("time_embed_dim must be even, got {}!".format(time_embed_dim))
        if not (0.0 <= dropout < 1.0):
            raise ValueError("Dropout rate must be in [0, 1), got {}!".format(dropout))
        self.arch = Arch.parse(arch)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hidden_dim = hidden_dim
        self.n_blocks = n_blocks
        self.mlp_layers = mlp_layers
        self.dropout = dropout
        self.use_layer_norm = use_layer_norm
        self.time_embed_dim = time_embed_dim
        self.activation = Activation.parse(activation)

    @property
    def input_dim(self):
        """
        Input dimension of the network: action, state and step embedding.

        @rtype: L{int}
        """
        return self.action_dim + self.state_dim + self.time_embed_dim


def build_score_net(config):
    """
    Build the structure of a score network.

    @param config: the configuration
    @type config: L{ScoreNetConfig}
    @return: the network, outputting zero at initialization
    @rtype: L{pyidql.layers.MLP} or L{pyidql.layers.LNResNet}
    """
    assert isinstance(config, ScoreNetConfig)
    if config.arch == Arch.MLP:
        return MLP(
            "score",
            config.input_dim,
            config.action_dim,
            config.hidden_dim,
            n_hidden=config.mlp_layers,
            activation=config.activation,
            zero_head=True,
        )
    return LNResNet(
        "score",
        config.input_dim,
        config.action_dim,
        hidden_dim=config.hidden_dim,
        n_blocks=config.n_blocks,
        activation=config.activation,
        dropout=config.dropout,
        use_layer_norm=config.use_layer_norm,
    )


class DiffusionConfig(object):
    """
    Configuration of the diffusion process and the loss.

    @ivar kind: the beta schedule
    @type kind: L{ScheduleKind}
    @ivar T: number of diffusion steps
    @type T: L{int}
    @ivar beta_min: schedule parameter, L{None} for the default
    @type beta_min: L{float} or L{None}
    @ivar beta_max: schedule parameter, L{None} for the default
    @type beta_max: L{float} or L{None}
    @ivar norm: C{"l2"} for the squared error, C{"l1"} for the absolute error
    @type norm: L{str}
    @ivar final_step_noise: if nonzero, add noise in the last reverse step too
    @type final_step_noise: L{bool}
    @ivar clip_actions: if nonzero, clip samples to the action box of the environment
    @type clip_actions: L{bool}
    """
    def __init__(
        self,
        kind=ScheduleKind.VP,
        T=constants.DEFAULT_DIFFUSION_STEPS,
        beta_min=None,
        beta_max=None,
        norm="l2",
        final_step_noise=False,
        clip_actions=False,
    ):
        """
        The default constructor.

        @raises ValueError: on invalid values
        """
        if norm not in ("l1", "l2"):
            raise ValueError("norm must be 'l1' or 'l2', got '{}'!".format(norm))
        if T < 1:
            raise ValueError("T must be positive, got {}!".format(T))
        self.kind = ScheduleKind.parse(kind)
        self.T = T
        self.beta_min = beta_min
        self.beta_max = beta_max
        self.norm = norm
        self.final_step_noise = final_step_noise
        self.clip_actions = clip_actions

    def make_schedule(self):
        """
        Create the schedule of this configuration.

        @rtype: L{DiffusionSchedule}
        """
        return make_schedule(self.kind, self.T, beta_min=self.beta_min, beta_max=self.beta_max)


class ActorConfig(object):
    """
    Configuration of behavior model training.

    @ivar lr: base learning rate
    @type lr: L{float}
    @ivar batch_size: actor batch size
    @type batch_size: L{int}
    @ivar steps: number of training steps
    @type steps: L{int}
    @ivar cosine_decay: whether the learning rate decays over C{steps}
    @type cosine_decay: L{bool}
    @ivar report_interval: emit a report every this many steps
    @type report_interval: L{int}
    @ivar awr_alpha: inverse temperature of the AWR-weighted loss, L{None} to disable
    @type awr_alpha: L{float} or L{None}
    @ivar awr_max_weight: cap of the AWR weights
    @type awr_max_weight: L{float}
    """
    def __init__(
        self,
        lr=constants.DEFAULT_LR,
        batch_size=constants.DEFAULT_ACTOR_BATCH_SIZE,
        steps=20000,
        cosine_decay=True,
        report_interval=1000,
        awr_alpha=None,
        awr_max_weight=constants.DEFAULT_AWR_MAX_WEIGHT,
    ):
        """
        The default constructor.

        @raises ValueError: on invalid values
        """
        if lr <= 0 or batch_size < 1 or steps < 0 or report_interval < 1:
            raise ValueError("Invalid actor configuration: lr={}, batch_size={}, steps={}".format(lr, batch_size, steps))
        if awr_alpha is not None and awr_alpha < 0:
            raise ValueError("awr_alpha must be nonnegative, got {}!".format(awr_alpha))
        if not awr_max_weight > 0:
            raise ValueError("awr_max_weight must be positive, got {}!".format(awr_max_weight))
        self.lr = lr
        self.batch_size = batch_size
        self.steps = steps
        self.cosine_decay = cosine_decay
        self.report_interval = report_interval
        self.awr_alpha = awr_alpha
        self.awr_max_weight = awr_max_weight


class BehaviorModel(object):
    """
    A diffusion model of the behavior policy mu_phi(a|s).

    @ivar config: configuration of the score network
    @type config: L{ScoreNetConfig}
    @ivar diffusion: configuration of the process
    @type diffusion: L{DiffusionConfig}
    @ivar schedule: the noise schedule
    @type schedule: L{DiffusionSchedule}
    @ivar net: structure of the score network
    @type net: L{pyidql.layers.MLP} or L{pyidql.layers.LNResNet}
    @ivar params: parameters of the score network
    @type params: L{pyidql.paramset.ParamSet}
    @ivar opt: optimizer state, created by the first training step
    @type opt: L{pyidql.optim.OptimizerState} or L{None}
    @ivar action_low: lower bound of the action box, if any
    @type action_low: L{numpy.ndarray} or L{None}
    @ivar action_high: upper bound of the action box, if any
    @type action_high: L{numpy.ndarray} or L{None}
    """
    def __init__(self, config, diffusion, rng, action_low=None, action_high=None):
        """
        The default constructor.

        @param config: configuration of the score network
        @type config: L{ScoreNetConfig}
        @param diffusion: configuration of the process
        @type diffusion: L{DiffusionConfig}
        @param rng: random stream of the initialization
        @type rng: L{numpy.random.Generator}
        @param action_low: lower bound of the action box
        @type action_low: array-like or L{None}
        @param action_high: upper bound of the action box
        @type action_high: array-like or L{None}
        """
        assert isinstance(config, ScoreNetConfig)
        assert isinstance(diffusion, DiffusionConfig)
        self.config = config
        self.diffusion = diffusion
        self.schedule = diffusion.make_schedule()
        self.net = build_score_net(config)
        self.params = ParamSet()
        self.net.init(self.params, rng)
        self.opt = None
        self.action_low = action_low
        self.action_high = action_high

    @property
    def action_dim(self):
        return self.config.action_dim

    @property
    def state_dim(self):
        return self.config.state_dim

    def predict_noise(self, a_t, states, t, rng=None, train=False):
        """
        Predict the noise in noised actions.

        @param a_t: noised actions, shape (batch, action_dim)
        @type a_t: L{numpy.ndarray}
        @param states: states, shape (batch, state_dim)
        @type states: L{numpy.ndarray}
        @param t: step per element, shape (batch, )
        @type t: L{numpy.ndarray}
        @param rng: random stream for dropout
        @type rng: L{numpy.random.Generator} or L{None}
        @param train: whether dropout is active
        @type train: L{bool}
        @return: the predicted noise, shape (batch, action_dim)
        @rtype: L{pyidql.tensor.Tensor}
        """
        x = np.concatenate(
            [
                np.asarray(a_t, dtype=constants.DTYPE).reshape(-1, self.action_dim),
                np.asarray(states, dtype=constants.DTYPE).reshape(-1, self.state_dim),
                time_embedding(t, self.config.time_embed_dim),
            ],
            axis=1,
        )
        return self.net.forward(self.params, constant_input(x), rng=rng, train=train)

    def sample(self, state, rng, n=1):
        """
        Draw actions by running the reverse chain.

        Every sample runs its own chain with its own noise; the chains are
        evaluated together.

        @param state: a single state of shape (state_dim, ), or one state per sample of shape (n, state_dim)
        @type state: array-like
        @param rng: random stream
        @type rng: L{numpy.random.Generator}
        @param n: number of samples
        @type n: L{int}
        @return: actions of shape (n, action_dim)
        @rtype: L{numpy.ndarray}
        """
        states = np.asarray(state, dtype=constants.DTYPE).reshape(-1, self.state_dim)
        if states.shape[0] == 1 and n > 1:
            states = np.repeat(states, n, axis=0)
        elif states.shape[0] != n:
            raise ValueError("Got {} states for {} samples!".format(states.shape[0], n))
        sched = self.schedule
        a = rng.standard_normal((n, self.action_dim))
        for t in range(sched.T, 0, -1):
            eps_hat = self.predict_noise(a, states, np.full(n, t)).data
            beta = sched.betas[t - 1]
            a = (a - beta / math.sqrt(1.0 - sched.alpha_bars[t - 1]) * eps_hat) / math.sqrt(sched.alphas[t - 1])
            if t > 1 or self.diffusion.final_step_noise:
                a = a + math.sqrt(beta) * rng.standard_normal(a.shape)
        logger.log(constants.LOG_LEVEL_SAMPLE, "Sampled {} actions over {} steps".format(n, sched.T))
        if self.diffusion.clip_actions and self.action_low is not None:
            a = np.clip(a, self.action_low, self.action_high)
        return a

    def freeze(self):
        """
        Make the parameters read-only.
        """
        self.params.freeze()

    def save(self, path):
        """
        Write the parameters as a checkpoint.

        @param path: path of the checkpoint
        @type path: L{str}
        """
        self.params.save(path)

    def load(self, path):
        """
        Load parameters from a checkpoint written by L{BehaviorModel.save}.

        @param path: path of the checkpoint
        @type path: L{str}
        @raises pyidql.exceptions.ParamMismatch: if the checkpoint does not match the structure
        """
        self.params.load_values(ParamSet.load(path))
        self.opt = None


class BCReport(object):
    """
    Loss of one behavior cloning step.

    @ivar step: number of completed steps
    @type step: L{int}
    @ivar loss: the loss of the step
    @type loss: L{float}
    @ivar lr: learning rate of the step
    @type lr: L{float}
    """
    FIELDS = ("step", "loss", "lr")

    def __init__(self, step, loss, lr):
        self.step = step
        self.loss = loss
        self.lr = lr

    def to_row(self):
        """
        Return the values of this report in the order of L{BCReport.FIELDS}.

        @rtype: L{list}
        """
        return [self.step, self.loss, self.lr]


def draw_noise(schedule, n, action_dim, rng):
    """
    Draw uniform steps and standard normal noise for a batch.

    @return: steps of shape (n, ) and noise of shape (n, action_dim)
    @rtype: L{tuple} of L{numpy.ndarray}
    """
    t = rng.integers(1, schedule.T + 1, size=n)
    eps = rng.standard_normal((n, action_dim))
    return t, eps


def bc_loss(model, states, actions, rng, weights=None, t=None, noise=None, train=True):
    """
    Return the noise prediction loss of a batch.

    Each element is noised to a uniformly drawn step; the loss is the
    batch mean of the squared L2 (or L1) error of the predicted noise,
    optionally multiplied per element by weights.

    @param model: the behavior model
    @type model: L{BehaviorModel}
    @param states: states, shape (batch, state_dim)
    @type states: L{numpy.ndarray}
    @param actions: clean actions, shape (batch, action_dim)
    @type actions: L{numpy.ndarray}
    @param rng: random stream for steps, noise and dropout
    @type rng: L{numpy.random.Generator}
    @param weights: optional per-element weights, shape (batch, )
    @type weights: L{numpy.ndarray} or L{None}
    @param t: steps to use instead of drawing them
    @type t: L{numpy.ndarray} or L{None}
    @param noise: noise to use instead of drawing it
    @type noise: L{numpy.ndarray} or L{None}
    @param train: whether dropout is active
    @type train: L{bool}
    @return: the scalar loss
    @rtype: L{pyidql.tensor.Tensor}
    """
    actions = np.asarray(actions, dtype=constants.DTYPE).reshape(-1, model.action_dim)
    n = actions.shape[0]
    drawn_t, drawn_noise = draw_noise(model.schedule, n, model.action_dim, rng)
    t = drawn_t if t is None else np.asarray(t)
    eps = drawn_noise if noise is None else np.asarray(noise, dtype=constants.DTYPE)
    a_t = forward_noise(model.schedule, actions, t, eps)
    diff = tg.sub(model.predict_noise(a_t, states, t, rng=rng, train=train), eps)
    if model.diffusion.norm == "l2":
        per_element = tg.sum(tg.mul(diff, diff), axis=1)
    else:
        per_element = tg.sum(tg.apply(diff, np.abs, np.sign), axis=1)
    if weights is not None:
        per_element = tg.mul(per_element, np.asarray(weights, dtype=constants.DTYPE).reshape(-1))
    return tg.mean(per_element)


def bc_step(model, states, actions, rng, actor_config, weights=None):
    """
    Run one behavior cloning step.

    @param model: the behavior model
    @type model: L{BehaviorModel}
    @param states: batch states
    @type states: L{numpy.ndarray}
    @param actions: batch actions
    @type actions: L{numpy.ndarray}
    @param rng: random stream
    @type rng: L{numpy.random.Generator}
    @param actor_config: the training configuration
    @type actor_config: L{ActorConfig}
    @param weights: optional per-element loss weights
    @type weights: L{numpy.ndarray} or L{None}
    @return: the report of the step
    @rtype: L{BCReport}
    @raises pyidql.exceptions.NonMutable: if the model is frozen
    @raises pyidql.exceptions.DivergenceError: on a non-finite loss
    """
    model.params.ensure_mutable()
    if model.opt is None:
        horizon = actor_config.steps if (actor_config.cosine_decay and actor_config.steps > 0) else None
        model.opt = OptimizerState(model.params, lr=actor_config.lr, horizon=horizon)
    model.params.zero_grad()
    loss = bc_loss(model, states, actions, rng, weights=weights)
    value = loss.item()
    if not np.isfinite(value):
        raise DivergenceError(
            "Behavior cloning loss diverged at step {}".format(model.params.step_count),
            {"step": model.params.step_count, "loss": value, "norms": model.params.norms()},
        )
    tg.backward(loss)
    lr = adam_step(model.params, model.opt)
    return BCReport(step=model.params.step_count, loss=value, lr=lr)


def train_behavior(model, states, actions, actor_config, rng, weights=None, processors=()):
    """
    Fit a behavior model to state-action pairs.

    @param model: the behavior model
    @type model: L{BehaviorModel}
    @param states: dataset states, shape (n, state_dim)
    @type states: L{numpy.ndarray}
    @param actions: dataset actions, shape (n, action_dim)
    @type actions: L{numpy.ndarray}
    @param actor_config: the training configuration
    @type actor_config: L{ActorConfig}
    @param rng: random stream of minibatches, steps and noise
    @type rng: L{numpy.random.Generator}
    @param weights: optional per-pair loss weights, shape (n, )
    @type weights: L{numpy.ndarray} or L{None}
    @param processors: processors receiving the reports
    @type processors: L{list} of L{pyidql.processor.BaseProcessor}
    @return: the emitted reports
    @rtype: L{list} of L{BCReport}
    """
    states = np.asarray(states, dtype=constants.DTYPE)
    actions = np.asarray(actions, dtype=constants.DTYPE)
    n = actions.shape[0]
    if n == 0:
        raise ValueError("Can not train a behavior model without data!")
    for processor in processors:
        processor.on_install("behavior")
    logger.info("Training behavior model ({}) for {} steps...".format(model.config.arch.name, actor_config.steps))
    reports = []
    for i in range(actor_config.steps):
        idx = rng.integers(0, n, size=actor_config.batch_size)
        batch_weights = None if weights is None else weights[idx]
        try:
            report = bc_step(model, states[idx], actions[idx], rng, actor_config, weights=batch_weights)
        except DivergenceError as e:
            call_processors(processors, "on_divergence", snapshot=e.snapshot)
            raise
        if (i + 1) % actor_config.report_interval == 0 or i == actor_config.steps - 1:
            reports.append(report)
            call_processors(processors, "on_report", report=report)
    call_processors(processors, "after_train")
    return reports
