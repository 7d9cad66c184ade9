"""
Q and V networks and the implicit critic training loop.

Per iteration, the value network is fit to the convex-loss statistic of
the target Q-values on dataset actions, the Q networks regress onto
r + gamma * (1 - done) * V(s') and the target networks track the online
Q networks by an EMA step. Only dataset actions are ever evaluated.

@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import logging
import os

import numpy as np

from . import constants
from . import tensor as tg
from .layers import MLP, Activation, constant_input
from .losses import ConvexLoss
from .optim import OptimizerState, adam_step, ema_update
from .paramset import ParamSet
from .dataset import sample_batch
from .exceptions import EmptyDataset, DivergenceError, LossOverflow
from .processor import call_processors


logger = logging.getLogger(__name__)


class CriticConfig(object):
    """
    Configuration of the critic networks and their training.

    @ivar loss: convex loss of the value network
    @type loss: L{pyidql.losses.ConvexLoss}
    @ivar hidden_dim: width of the hidden layers
    @type hidden_dim: L{int}
    @ivar n_hidden: number of hidden layers
    @type n_hidden: L{int}
    @ivar activation: activation function
    @type activation: L{pyidql.layers.Activation}
    @ivar lr: learning rate of Q and V
    @type lr: L{float}
    @ivar batch_size: critic batch size
    @type batch_size: L{int}
    @ivar discount: discount gamma
    @type discount: L{float}
    @ivar target_ema: rate of the target network update
    @type target_ema: L{float}
    @ivar twin: whether to use two Q networks and their minimum
    @type twin: L{bool}
    @ivar steps: number of training iterations
    @type steps: L{int}
    @ivar report_interval: emit a report every this many iterations
    @type report_interval: L{int}
    """
    def __init__(
        self,
        loss=None,
        hidden_dim=constants.DEFAULT_HIDDEN_DIM,
        n_hidden=2,
        activation=Activation.RELU,
        lr=constants.DEFAULT_LR,
        batch_size=constants.DEFAULT_CRITIC_BATCH_SIZE,
        discount=constants.DEFAULT_DISCOUNT,
        target_ema=constants.DEFAULT_TARGET_EMA,
        twin=True,
        steps=10000,
        report_interval=1000,
    ):
        """
        The default constructor.

        @raises ValueError: on invalid values
        """
        if loss is None:
            loss = ConvexLoss.expectile(0.9)
        if not isinstance(loss, ConvexLoss):
            raise TypeError("Expected a ConvexLoss, got {} instead!".format(type(loss)))
        if hidden_dim < 1 or n_hidden < 1:
            raise ValueError("Critic networks need positive width and depth!")
        if lr <= 0:
            raise ValueError("Learning rate must be positive, got {}!".format(lr))
        if batch_size < 1:
            raise ValueError("Batch size must be positive, got {}!".format(batch_size))
        if not (0.0 <= discount < 1.0):
            raise ValueError("Discount must be in [0, 1), got {}!".format(discount))
        if not (0.0 <= target_ema <= 1.0):
            raise ValueError("Target EMA rate must be in [0, 1], got {}!".format(target_ema))
        if steps < 0 or report_interval < 1:
            raise ValueError("steps must be nonnegative and report_interval positive!")
        self.loss = loss
        self.hidden_dim = hidden_dim
        self.n_hidden = n_hidden
        self.activation = Activation.parse(activation)
        self.lr = lr
        self.batch_size = batch_size
        self.discount = discount
        self.target_ema = target_ema
        self.twin = twin
        self.steps = steps
        self.report_interval = report_interval


class TrainReport(object):
    """
    Losses and statistics of one critic training iteration.

    @ivar step: number of completed iterations
    @type step: L{int}
    @ivar v_loss: value loss of the iteration
    @type v_loss: L{float}
    @ivar q_loss: Q loss of the iteration
    @type q_loss: L{float}
    @ivar mean_v: mean V over the batch
    @type mean_v: L{float}
    @ivar mean_q: mean target Q over the batch
    @type mean_q: L{float}
    """
    FIELDS = ("step", "v_loss", "q_loss", "mean_v", "mean_q")

    def __init__(self, step, v_loss, q_loss, mean_v, mean_q):
        self.step = step
        self.v_loss = v_loss
        self.q_loss = q_loss
        self.mean_v = mean_v
        self.mean_q = mean_q

    def __repr__(self):
        return "TrainReport({})".format(", ".join("{}={}".format(k, v) for k, v in zip(self.FIELDS, self.to_row())))

    def to_row(self):
        """
        Return the values of this report in the order of L{TrainReport.FIELDS}.

        @rtype: L{list}
        """
        return [self.step, self.v_loss, self.q_loss, self.mean_v, self.mean_q]


class CriticNets(object):
    """
    The online Q networks, their EMA target and the value network.

    Twin Q networks share one parameter set under the paths C{q1/...}
    and C{q2/...}.

    @ivar state_dim: state dimension
    @type state_dim: L{int}
    @ivar action_dim: action dimension
    @type action_dim: L{int}
    @ivar config: the critic configuration
    @type config: L{CriticConfig}
    @ivar q_nets: structures of the Q networks
    @type q_nets: L{list} of L{pyidql.layers.MLP}
    @ivar v_net: structure of the value network
    @type v_net: L{pyidql.layers.MLP}
    @ivar q_params: online Q parameters
    @type q_params: L{pyidql.paramset.ParamSet}
    @ivar q_target: target Q parameters
    @type q_target: L{pyidql.paramset.ParamSet}
    @ivar v_params: value parameters
    @type v_params: L{pyidql.paramset.ParamSet}
    """
    def __init__(self, state_dim, action_dim, config, rng):
        """
        The default constructor.

        @param state_dim: state dimension
        @type state_dim: L{int}
        @param action_dim: action dimension
        @type action_dim: L{int}
        @param config: the critic configuration
        @type config: L{CriticConfig}
        @param rng: random stream of the initialization
        @type rng: L{numpy.random.Generator}
        """
        assert isinstance(config, CriticConfig)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.config = config
        names = ("q1", "q2") if config.twin else ("q1", )
        self.q_nets = [
            MLP(name, state_dim + action_dim, 1, config.hidden_dim, config.n_hidden, config.activation)
            for name in names
        ]
        self.v_net = MLP("v", state_dim, 1, config.hidden_dim, config.n_hidden, config.activation)
        self.q_params = ParamSet()
        for net in self.q_nets:
            net.init(self.q_params, rng)
        self.q_target = self.q_params.copy()
        self.v_params = ParamSet()
        self.v_net.init(self.v_params, rng)
        self.q_opt = OptimizerState(self.q_params, lr=config.lr)
        self.v_opt = OptimizerState(self.v_params, lr=config.lr)

    @staticmethod
    def _as_batch(values, dim):
        values = np.asarray(values, dtype=constants.DTYPE)
        return values.reshape(-1, dim)

    def q_outputs(self, params, states, actions):
        """
        Evaluate every Q network on (state, action) pairs.

        @param params: Q parameters to use (online or target)
        @type params: L{pyidql.paramset.ParamSet}
        @param states: states, shape (batch, state_dim)
        @type states: L{numpy.ndarray}
        @param actions: actions, shape (batch, action_dim)
        @type actions: L{numpy.ndarray}
        @return: one output of shape (batch, ) per Q network
        @rtype: L{list} of L{pyidql.tensor.Tensor}
        """
        x = constant_input(
            np.concatenate([self._as_batch(states, self.state_dim), self._as_batch(actions, self.action_dim)], axis=1)
        )
        return [tg.reshape(net.forward(params, x), (-1, )) for net in self.q_nets]

    def _min_of(self, params, states, actions):
        outputs = self.q_outputs(params, states, actions)
        return np.min(np.stack([o.data for o in outputs], axis=0), axis=0)

    def q_min(self, states, actions):
        """
        Return the minimum over the online Q networks.

        @param states: states, shape (batch, state_dim)
        @type states: L{numpy.ndarray}
        @param actions: actions, shape (batch, action_dim)
        @type actions: L{numpy.ndarray}
        @return: Q-values of shape (batch, )
        @rtype: L{numpy.ndarray}
        """
        return self._min_of(self.q_params, states, actions)

    def q_target_min(self, states, actions):
        """
        Return the minimum over the target Q networks.

        @rtype: L{numpy.ndarray}
        """
        return self._min_of(self.q_target, states, actions)

    def v_output(self, states):
        """
        Evaluate the value network with gradient support.

        @param states: states, shape (batch, state_dim)
        @type states: L{numpy.ndarray}
        @return: values of shape (batch, )
        @rtype: L{pyidql.tensor.Tensor}
        """
        x = constant_input(self._as_batch(states, self.state_dim))
        return tg.reshape(self.v_net.forward(self.v_params, x), (-1, ))

    def value(self, states):
        """
        Return V(s).

        @param states: states, shape (batch, state_dim)
        @type states: L{numpy.ndarray}
        @return: values of shape (batch, )
        @rtype: L{numpy.ndarray}
        """
        return self.v_output(states).numpy()

    def freeze(self):
        """
        Make all parameters read-only.
        """
        for params in (self.q_params, self.q_target, self.v_params):
            params.freeze()

    def norms(self):
        """
        Return the parameter norms of all networks, for diagnostics.

        @rtype: L{dict}
        """
        norms = {}
        for prefix, params in (("q", self.q_params), ("q_target", self.q_target), ("v", self.v_params)):
            for path, value in params.norms().items():
                norms["{}:{}".format(prefix, path)] = value
        return norms

    def save(self, directory):
        """
        Write the checkpoints of all networks into a directory.

        @param directory: the directory, created if necessary
        @type directory: L{str}
        @return: the paths of the written files
        @rtype: L{list} of L{str}
        """
        os.makedirs(directory, exist_ok=True)
        paths = []
        for name, params in (("q", self.q_params), ("q_target", self.q_target), ("v", self.v_params)):
            path = os.path.join(directory, "critic_{}.ckpt".format(name))
            params.save(path)
            paths.append(path)
        return paths

    def load(self, directory):
        """
        Load the checkpoints written by L{CriticNets.save}.

        @param directory: the directory
        @type directory: L{str}
        @raises pyidql.exceptions.ParamMismatch: if the checkpoints do not match the structure
        """
        for name, params in (("q", self.q_params), ("q_target", self.q_target), ("v", self.v_params)):
            params.load_values(ParamSet.load(os.path.join(directory, "critic_{}.ckpt".format(name))))
        self.q_opt = OptimizerState(self.q_params, lr=self.config.lr)
        self.v_opt = OptimizerState(self.v_params, lr=self.config.lr)


def value_loss(loss, batch, nets):
    """
    Return the convex-loss value objective mean f(Q_target(s, a) - V(s)).

    Gradients only flow into the value network.

    @param loss: the convex loss
    @type loss: L{pyidql.losses.ConvexLoss}
    @param batch: batch of dataset transitions
    @type batch: L{pyidql.dataset.Batch}
    @param nets: the critic networks
    @type nets: L{CriticNets}
    @return: the scalar loss
    @rtype: L{pyidql.tensor.Tensor}
    @raises pyidql.exceptions.EmptyDataset: on an empty batch
    """
    if len(batch) == 0:
        raise EmptyDataset("value_loss() needs a non-empty batch!")
    q = nets.q_target_min(batch.states, batch.actions)
    v = nets.v_output(batch.states)
    return tg.mean(loss.tensor_value(tg.sub(q, v)))


def q_loss(batch, nets, discount):
    """
    Return the TD objective, mean over batch and Q networks of (r + gamma * (1 - done) * V(s') - Q(s, a))^2.

    V(s') is a constant target.

    @param batch: batch of dataset transitions
    @type batch: L{pyidql.dataset.Batch}
    @param nets: the critic networks
    @type nets: L{CriticNets}
    @param discount: discount gamma in [0, 1)
    @type discount: L{float}
    @return: the scalar loss
    @rtype: L{pyidql.tensor.Tensor}
    @raises ValueError: if the discount is outside of [0, 1)
    @raises pyidql.exceptions.EmptyDataset: on an empty batch
    """
    if not (0.0 <= discount < 1.0):
        raise ValueError("Discount must be in [0, 1), got {}!".format(discount))
    if len(batch) == 0:
        raise EmptyDataset("q_loss() needs a non-empty batch!")
    target = batch.rewards + discount * (1.0 - batch.dones) * nets.value(batch.next_states)
    outputs = nets.q_outputs(nets.q_params, batch.states, batch.actions)
    total = None
    for q in outputs:
        term = tg.mean(tg.squared_error(q, target))
        total = term if total is None else tg.add(total, term)
    return tg.scale(total, 1.0 / len(outputs))


def _snapshot(nets, step, v_loss_value, q_loss_value):
    return {
        "step": step,
        "v_loss": v_loss_value,
        "q_loss": q_loss_value,
        "norms": nets.norms(),
    }


def update(nets, batch, config=None):
    """
    Run one critic iteration: a value step, a Q step and an EMA step.

    @param nets: the critic networks
    @type nets: L{CriticNets}
    @param batch: batch of dataset transitions
    @type batch: L{pyidql.dataset.Batch}
    @param config: configuration to use, defaults to the one of the networks
    @type config: L{CriticConfig} or L{None}
    @return: the report of this iteration
    @rtype: L{TrainReport}
    @raises pyidql.exceptions.DivergenceError: on a non-finite loss or an overflowing exponential loss
    """
    config = config or nets.config
    step = nets.q_params.step_count

    nets.v_params.zero_grad()
    try:
        lv = value_loss(config.loss, batch, nets)
    except LossOverflow as e:
        raise DivergenceError("Value loss overflowed at step {}: {}".format(step, e), _snapshot(nets, step, None, None))
    v_value = lv.item()
    if not np.isfinite(v_value):
        raise DivergenceError("Value loss diverged at step {}".format(step), _snapshot(nets, step, v_value, None))
    tg.backward(lv)
    adam_step(nets.v_params, nets.v_opt)

    nets.q_params.zero_grad()
    lq = q_loss(batch, nets, config.discount)
    q_value = lq.item()
    if not np.isfinite(q_value):
        raise DivergenceError("Q loss diverged at step {}".format(step), _snapshot(nets, step, v_value, q_value))
    tg.backward(lq)
    adam_step(nets.q_params, nets.q_opt)

    ema_update(nets.q_target, nets.q_params, config.target_ema)

    report = TrainReport(
        step=nets.q_params.step_count,
        v_loss=v_value,
        q_loss=q_value,
        mean_v=float(np.mean(nets.value(batch.states))),
        mean_q=float(np.mean(nets.q_target_min(batch.states, batch.actions))),
    )
    logger.log(constants.LOG_LEVEL_STEP, "Critic step: {!r}".format(report))
    return report


def train_critic(config, dataset, rng, nets=None, steps=None, processors=()):
    """
    Train the critic networks on an offline dataset.

    @param config: the critic configuration
    @type config: L{CriticConfig}
    @param dataset: the transitions
    @type dataset: L{pyidql.dataset.OfflineDataset} or L{pyidql.dataset.ReplayBuffer}
    @param rng: random stream of the initialization and the minibatches
    @type rng: L{numpy.random.Generator}
    @param nets: networks to continue training, created if L{None}
    @type nets: L{CriticNets} or L{None}
    @param steps: number of iterations, defaults to C{config.steps}
    @type steps: L{int} or L{None}
    @param processors: processors receiving the reports
    @type processors: L{list} of L{pyidql.processor.BaseProcessor}
    @return: the networks and the emitted reports
    @rtype: L{tuple} of (L{CriticNets}, L{list} of L{TrainReport})
    @raises pyidql.exceptions.EmptyDataset: if the dataset is empty
    @raises pyidql.exceptions.DivergenceError: on a non-finite loss
    """
    if len(dataset) == 0:
        raise EmptyDataset("Can not train a critic on an empty dataset!")
    steps = config.steps if steps is None else steps
    if steps > constants.CRITIC_STABLE_STEPS:
        logger.warning(
            "{} critic steps exceed {}; critic training tends to become unstable".format(steps, constants.CRITIC_STABLE_STEPS)
        )
    if nets is None:
        nets = CriticNets(dataset.states.shape[1], dataset.actions.shape[1], config, rng)
    for processor in processors:
        processor.on_install("critic")
    logger.info("Training critic with {!r} for {} steps...".format(config.loss, steps))
    reports = []
    for i in range(steps):
        batch = sample_batch(dataset, config.batch_size, rng)
        try:
            report = update(nets, batch, config)
        except DivergenceError as e:
            call_processors(processors, "on_divergence", snapshot=e.snapshot)
            raise
        if (i + 1) % config.report_interval == 0 or i == steps - 1:
            reports.append(report)
            call_processors(processors, "on_report", report=report)
    call_processors(processors, "after_train")
    return nets, reports
