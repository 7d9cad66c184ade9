"""
Online finetuning of pretrained IDQL models.

Two modes are supported:

    - C{max}: the behavior model is frozen, actions are the argmax
      candidates and only the critic is finetuned.
    - C{imp}: actions are sampled from the implicit policy, the critic
      and the behavior model are both finetuned.

Every environment step appends one transition to a replay buffer that
starts as the offline dataset; minibatches are drawn uniformly from it.

@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import copy
import enum
import logging

from . import constants
from .critic import update as critic_update
from .dataset import ReplayBuffer, sample_batch
from .diffusion import ActorConfig, bc_step
from .exceptions import DivergenceError
from .extraction import ExtractionSpec, ExtractionMode, act, evaluate_policy
from .optim import OptimizerState
from .processor import call_processors
from .util.rngutil import spawn


logger = logging.getLogger(__name__)


class FinetuneMode(enum.IntEnum):
    """
    An enum of the finetuning modes.
    """
    MAX = 0
    IMP = 1

    @classmethod
    def parse(cls, name):
        """
        Parse a mode from its (case insensitive) name.

        @rtype: L{FinetuneMode}
        @raises ValueError: on an unknown name
        """
        if isinstance(name, cls):
            return name
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError("Unknown finetuning mode: '{}'".format(name))


class FinetuneConfig(object):
    """
    Configuration of an online finetuning run.

    @ivar mode: the finetuning mode
    @type mode: L{FinetuneMode}
    @ivar env_steps: environment step budget
    @type env_steps: L{int}
    @ivar critic_steps: critic iterations per environment step
    @type critic_steps: L{int}
    @ivar actor_steps: behavior model steps per environment step (imp mode)
    @type actor_steps: L{int}
    @ivar eval_interval: evaluate every this many environment steps
    @type eval_interval: L{int}
    @ivar eval_episodes: episodes per evaluation
    @type eval_episodes: L{int}
    @ivar n_samples: candidates per state, for exploration and evaluation
    @type n_samples: L{int}
    """
    def __init__(
        self,
        mode=FinetuneMode.MAX,
        env_steps=20000,
        critic_steps=1,
        actor_steps=2,
        eval_interval=1000,
        eval_episodes=10,
        n_samples=constants.DEFAULT_N_SAMPLES,
    ):
        """
        The default constructor.

        @raises ValueError: on invalid values
        """
        if env_steps < 0:
            raise ValueError("env_steps must be nonnegative, got {}!".format(env_steps))
        if critic_steps < 0 or actor_steps < 0:
            raise ValueError("Gradient steps per environment step must be nonnegative!")
        if eval_interval < 1 or eval_episodes < 1 or n_samples < 1:
            raise ValueError("eval_interval, eval_episodes and n_samples must be positive!")
        self.mode = FinetuneMode.parse(mode)
        self.env_steps = env_steps
        self.critic_steps = critic_steps
        self.actor_steps = actor_steps
        self.eval_interval = eval_interval
        self.eval_episodes = eval_episodes
        self.n_samples = n_samples


class CurvePoint(object):
    """
    One evaluation of a finetuning run.
    """
    FIELDS = ("env_step", "eval_return_mean", "eval_return_std")

    def __init__(self, env_step, mean, std):
        self.env_step = env_step
        self.mean = mean
        self.std = std

    def __repr__(self):
        return "<CurvePoint env_step={} mean={:.4f} std={:.4f}>".format(self.env_step, self.mean, self.std)

    def to_row(self):
        return [self.env_step, self.mean, self.std]


def exploration_spec(config, critic):
    """
    Return the extraction spec used to act during finetuning.

    @param config: the finetuning configuration
    @type config: L{FinetuneConfig}
    @param critic: the critic, whose loss defines the implicit policy
    @type critic: L{pyidql.critic.CriticNets}
    @rtype: L{pyidql.extraction.ExtractionSpec}
    """
    if config.mode == FinetuneMode.MAX:
        return ExtractionSpec(n_samples=config.n_samples, mode=ExtractionMode.GREEDY)
    return ExtractionSpec(n_samples=config.n_samples, mode=ExtractionMode.IMPLICIT, loss=critic.config.loss)


def finetune(critic, behavior, env, dataset, config, rng, actor_config=None, processors=()):
    """
    Finetune pretrained models online.

    @param critic: the pretrained critic, updated in place
    @type critic: L{pyidql.critic.CriticNets}
    @param behavior: the pretrained behavior model, updated in place in imp mode
    @type behavior: L{pyidql.diffusion.BehaviorModel}
    @param env: the environment
    @type env: L{pyidql.envs.Env}
    @param dataset: the offline dataset seeding the replay buffer
    @type dataset: L{pyidql.dataset.OfflineDataset}
    @param config: the finetuning configuration
    @type config: L{FinetuneConfig}
    @param rng: random stream
    @type rng: L{numpy.random.Generator}
    @param actor_config: configuration of the behavior model steps
    @type actor_config: L{pyidql.diffusion.ActorConfig} or L{None}
    @param processors: processors receiving reports and evaluations
    @type processors: L{list} of L{pyidql.processor.BaseProcessor}
    @return: the replay buffer and the evaluation curve
    @rtype: L{tuple} of (L{pyidql.dataset.ReplayBuffer}, L{list} of L{CurvePoint})
    @raises pyidql.exceptions.DivergenceError: on a non-finite loss
    """
    assert isinstance(config, FinetuneConfig)
    actor_config = actor_config or ActorConfig()
    if config.mode == FinetuneMode.MAX:
        behavior.freeze()
    else:
        # the pretraining schedule is spent, finetuning starts its own
        n_steps = config.env_steps * config.actor_steps
        horizon = n_steps if (actor_config.cosine_decay and n_steps > 0) else None
        behavior.opt = OptimizerState(behavior.params, lr=actor_config.lr, horizon=horizon)
    for processor in processors:
        processor.on_install("finetune")
    eval_rng, explore_rng, train_rng = spawn(rng, 3)
    explore = exploration_spec(config, critic)
    evaluation = ExtractionSpec(n_samples=config.n_samples, mode=ExtractionMode.GREEDY)
    buffer = ReplayBuffer(dataset)
    curve = []

    def evaluate(env_step):
        # evaluation episodes must not disturb the exploration episode
        result = evaluate_policy(evaluation, copy.deepcopy(env), behavior, critic, config.eval_episodes, eval_rng)
        point = CurvePoint(env_step, result.mean, result.std)
        curve.append(point)
        call_processors(processors, "on_evaluation", step=env_step, mean=point.mean, std=point.std)
        logger.info("Finetuning ({}) at env step {}: {:.4f} +- {:.4f}".format(config.mode.name.lower(), env_step, point.mean, point.std))

    logger.info("Finetuning in {} mode for {} env steps...".format(config.mode.name.lower(), config.env_steps))
    evaluate(0)
    state = env.reset(explore_rng)
    episode_steps = 0
    for env_step in range(1, config.env_steps + 1):
        action = act(explore, state, behavior, critic, explore_rng, action_map=env.canonical_action)
        next_state, reward, done = env.step(action, explore_rng)
        buffer.append(state, action, reward, next_state, done)
        episode_steps += 1
        if done or episode_steps >= env.max_episode_steps:
            state = env.reset(explore_rng)
            episode_steps = 0
        else:
            state = next_state
        try:
            for _ in range(config.critic_steps):
                report = critic_update(critic, sample_batch(buffer, critic.config.batch_size, train_rng))
            if config.mode == FinetuneMode.IMP:
                for _ in range(config.actor_steps):
                    batch = sample_batch(buffer, actor_config.batch_size, train_rng)
                    bc_step(behavior, batch.states, batch.actions, train_rng, actor_config)
        except DivergenceError as e:
            call_processors(processors, "on_divergence", snapshot=e.snapshot)
            raise
        if env_step % config.eval_interval == 0 or env_step == config.env_steps:
            if config.critic_steps:
                call_processors(processors, "on_report", report=report)
            evaluate(env_step)
    call_processors(processors, "after_train")
    return buffer, curve
