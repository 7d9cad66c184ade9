"""
Declarative experiment configurations.

An L{ExperimentConfig} is a flat mapping of dotted keys
(C{section.key}) to typed values. Every key is declared in L{SCHEMA}
with its type, default and constraint. The text form has one
C{key = value} line per key, sorted by key, with C{#} comments::

    # pyidql experiment configuration
    critic.lr = 0.0003
    experiment.kind = train-offline
    ...

Floats are written with C{repr}, so the text form round-trips exactly.

@var SCHEMA: the declared keys, by key
@type SCHEMA: L{dict} of L{str} -> L{ConfigField}
@var EXPERIMENT_KINDS: the supported experiments
@type EXPERIMENT_KINDS: L{tuple} of L{str}
@var OUTPUT_ROOT_ENV: environment variable naming the output root
@type OUTPUT_ROOT_ENV: L{str}
@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import logging
import os

from . import constants
from .critic import CriticConfig
from .dataset import TOY2D_GENERATORS
from .diffusion import ScoreNetConfig, DiffusionConfig, ActorConfig
from .envs import make_env
from .exceptions import ConfigError
from .extraction import ExtractionSpec
from .finetune import FinetuneConfig
from .layers import Activation
from .losses import ConvexLoss
from .util.hashing import sha256_bytes


logger = logging.getLogger(__name__)


EXPERIMENT_KINDS = (
    "audit", "bandit-sweep", "figure2", "ddpm-train", "ddpm-sample", "figure4",
    "train-offline", "evaluate", "finetune", "figure1",
)
OUTPUT_ROOT_ENV = "PYIDQL_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"


# ================== value types ======================

def _parse_bool(s):
    lowered = s.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError("not a boolean: '{}'".format(s))


def _format_bool(v):
    return "true" if v else "false"


def _parse_optional_float(s):
    if s.strip().lower() == "none":
        return None
    return float(s)


def _format_optional_float(v):
    return "none" if v is None else repr(float(v))


def _parse_floats(s):
    return tuple(float(part) for part in s.split(",") if part.strip())


def _format_floats(v):
    return ",".join(repr(float(x)) for x in v)


# name -> (parse, format)
VALUE_TYPES = {
    "int": (int, str),
    "float": (float, lambda v: repr(float(v))),
    "bool": (_parse_bool, _format_bool),
    "str": (lambda s: s.strip(), str),
    "optional_float": (_parse_optional_float, _format_optional_float),
    "floats": (_parse_floats, _format_floats),
}


# ================== constraints ======================

def positive(v):
    return v > 0


def nonnegative(v):
    return v >= 0


def unit_interval(v):
    return 0.0 <= v <= 1.0


def half_open_unit(v):
    return 0.0 <= v < 1.0


def one_of(*choices):
    def check(v):
        return v in choices
    check.description = "one of {}".format(", ".join(choices))
    return check


def optional_positive(v):
    return v is None or v > 0


def all_positive(v):
    return len(v) > 0 and all(x > 0 for x in v)


def all_finite(v):
    return len(v) > 0 and all(x == x and abs(x) != float("inf") for x in v)


def _describe(constraint):
    if constraint is None:
        return "any value"
    return getattr(constraint, "description", constraint.__name__.replace("_", " "))


class ConfigField(object):
    """
    Declaration of a configuration key.

    @ivar key: the dotted key
    @type key: L{str}
    @ivar type: name of the value type, a key of L{VALUE_TYPES}
    @type type: L{str}
    @ivar default: the default value
    @ivar constraint: predicate every value must satisfy, or L{None}
    @type constraint: callable or L{None}
    @ivar description: human readable description
    @type description: L{str}
    """
    def __init__(self, key, type, default, constraint=None, description=""):
        assert type in VALUE_TYPES
        assert key.count(".") == 1
        self.key = key
        self.type = type
        self.default = default
        self.constraint = constraint
        self.description = description

    def parse(self, text):
        """
        Parse and check the textual form of a value.

        @param text: the text
        @type text: L{str}
        @return: the value
        @raises pyidql.exceptions.ConfigError: on unparseable or invalid values
        """
        try:
            value = VALUE_TYPES[self.type][0](text)
        except ValueError:
            raise ConfigError("Invalid value for '{}': expected {}, got '{}'".format(self.key, self.type, text.strip()))
        return self.check(value)

    def format(self, value):
        """
        Return the textual form of a value.

        @rtype: L{str}
        """
        return VALUE_TYPES[self.type][1](value)

    def check(self, value):
        """
        Check a value against the constraint.

        @return: the value
        @raises pyidql.exceptions.ConfigError: if the constraint is violated
        """
        if self.type == "float" and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if self.constraint is not None and not self.constraint(value):
            raise ConfigError("Invalid value for '{}': must be {}, got {!r}".format(self.key, _describe(self.constraint), value))
        return value


_FIELDS = [
    # experiment
    ConfigField("experiment.kind", "str", "train-offline", one_of(*EXPERIMENT_KINDS), "experiment to run"),
    ConfigField("experiment.seed", "int", 0, nonnegative, "seed of all random streams"),
    # environment
    ConfigField("env.id", "str", "gridworld", one_of("bandit", "bandit2d", "gridworld"), "environment"),
    ConfigField("env.width", "int", 5, positive, "grid world width"),
    ConfigField("env.height", "int", 5, positive, "grid world height"),
    ConfigField("env.slip", "float", 0.0, unit_interval, "grid world random move probability"),
    ConfigField("env.gamma", "float", constants.DEFAULT_DISCOUNT, unit_interval, "grid world discount of the oracles"),
    ConfigField("env.max_steps", "int", constants.GRID_MAX_STEPS, positive, "grid world episode step cap"),
    ConfigField("env.bandit_means", "floats", tuple(float(m) for m in constants.BANDIT_MEANS), all_finite, "mean reward per bandit arm"),
    ConfigField("env.bandit_noise", "float", constants.BANDIT_NOISE_STD, nonnegative, "bandit reward noise"),
    # dataset
    ConfigField("dataset.size", "int", 20000, positive, "number of transitions (or toy 2D points)"),
    ConfigField("dataset.optimal_fraction", "float", 0.5, unit_interval, "share of near-optimal grid world trajectories"),
    ConfigField("dataset.epsilon", "float", 0.1, unit_interval, "random move probability of the near-optimal policy"),
    ConfigField("dataset.generator", "str", "gaussians8", one_of(*TOY2D_GENERATORS), "toy 2D dataset"),
    ConfigField("dataset.reward_transform", "str", "none", one_of("none", "standardize", "shift"), "reward preprocessing"),
    # loss
    ConfigField("loss.family", "str", "expectile", one_of("expectile", "quantile", "exponential"), "convex value loss"),
    ConfigField("loss.param", "float", 0.9, positive, "tau (expectile, quantile) or alpha (exponential)"),
    # critic
    ConfigField("critic.lr", "float", constants.DEFAULT_LR, positive, "critic learning rate"),
    ConfigField("critic.batch_size", "int", constants.DEFAULT_CRITIC_BATCH_SIZE, positive, "critic batch size"),
    ConfigField("critic.steps", "int", 10000, nonnegative, "critic iterations"),
    ConfigField("critic.hidden_dim", "int", constants.DEFAULT_HIDDEN_DIM, positive, "critic hidden width"),
    ConfigField("critic.n_hidden", "int", 2, positive, "critic hidden layers"),
    ConfigField("critic.activation", "str", "relu", one_of("relu", "mish", "gelu"), "critic activation"),
    ConfigField("critic.discount", "float", constants.DEFAULT_DISCOUNT, half_open_unit, "TD discount"),
    ConfigField("critic.target_ema", "float", constants.DEFAULT_TARGET_EMA, unit_interval, "target network EMA rate"),
    ConfigField("critic.twin", "bool", True, None, "use twin Q networks"),
    ConfigField("critic.report_interval", "int", 1000, positive, "critic report interval"),
    # diffusion
    ConfigField("diffusion.T", "int", constants.DEFAULT_DIFFUSION_STEPS, positive, "diffusion steps"),
    ConfigField("diffusion.schedule", "str", "vp", one_of("vp", "linear", "cosine"), "beta schedule"),
    ConfigField("diffusion.beta_min", "optional_float", None, optional_positive, "schedule parameter, none for the default"),
    ConfigField("diffusion.beta_max", "optional_float", None, optional_positive, "schedule parameter, none for the default"),
    ConfigField("diffusion.norm", "str", "l2", one_of("l1", "l2"), "noise prediction error"),
    ConfigField("diffusion.final_step_noise", "bool", False, None, "add noise in the last reverse step"),
    ConfigField("diffusion.clip_actions", "bool", False, None, "clip samples to the action box"),
    # score network
    ConfigField("score.arch", "str", "lnresnet", one_of("mlp", "lnresnet"), "score network architecture"),
    ConfigField("score.hidden_dim", "int", constants.DEFAULT_HIDDEN_DIM, positive, "score network width"),
    ConfigField("score.n_blocks", "int", constants.DEFAULT_N_BLOCKS, nonnegative, "residual blocks"),
    ConfigField("score.mlp_layers", "int", 2, positive, "hidden layers of the mlp architecture"),
    ConfigField("score.dropout", "float", constants.DEFAULT_DROPOUT, half_open_unit, "residual block dropout"),
    ConfigField("score.layer_norm", "bool", True, None, "residual block layer norm"),
    ConfigField("score.time_embed_dim", "int", constants.DEFAULT_TIME_EMBED_DIM, positive, "step embedding dimension"),
    ConfigField("score.activation", "str", "mish", one_of("relu", "mish", "gelu"), "score network activation"),
    # actor
    ConfigField("actor.lr", "float", constants.DEFAULT_LR, positive, "behavior model learning rate"),
    ConfigField("actor.batch_size", "int", constants.DEFAULT_ACTOR_BATCH_SIZE, positive, "behavior model batch size"),
    ConfigField("actor.steps", "int", 20000, nonnegative, "behavior model steps"),
    ConfigField("actor.cosine_decay", "bool", True, None, "cosine learning rate decay over the actor steps"),
    ConfigField("actor.report_interval", "int", 1000, positive, "behavior model report interval"),
    ConfigField("actor.awr_alpha", "optional_float", None, optional_positive, "AWR weighting of the diffusion loss, none to disable"),
    ConfigField("actor.awr_max_weight", "float", constants.DEFAULT_AWR_MAX_WEIGHT, positive, "cap of the AWR weights"),
    # extraction and evaluation
    ConfigField("extraction.mode", "str", "greedy", one_of("greedy", "implicit"), "policy extraction"),
    ConfigField("extraction.n_samples", "int", constants.DEFAULT_N_SAMPLES, positive, "candidates per state"),
    ConfigField("eval.episodes", "int", 10, positive, "evaluation episodes"),
    ConfigField("eval.discounted", "bool", False, None, "also report discounted returns"),
    # finetuning
    ConfigField("finetune.mode", "str", "max", one_of("max", "imp"), "finetuning mode"),
    ConfigField("finetune.env_steps", "int", 20000, nonnegative, "environment step budget"),
    ConfigField("finetune.critic_steps", "int", 1, nonnegative, "critic iterations per environment step"),
    ConfigField("finetune.actor_steps", "int", 2, nonnegative, "behavior model steps per environment step"),
    ConfigField("finetune.eval_interval", "int", 1000, positive, "environment steps between evaluations"),
    # inputs of experiments continuing earlier runs
    ConfigField("input.run_dir", "str", "", None, "run directory of a pretrained model, empty to pretrain in the run"),
    ConfigField("sample.n", "int", 10000, positive, "number of samples to draw"),
    # audit
    ConfigField("audit.n_bandits", "int", 1000, positive, "random distributions per loss"),
    ConfigField("audit.min_actions", "int", 2, positive, "smallest number of actions"),
    ConfigField("audit.max_actions", "int", 32, positive, "largest number of actions"),
    ConfigField("audit.tolerance", "float", 1e-6, positive, "residual tolerance"),
    # sweeps
    ConfigField("sweep.expectile", "floats", (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99), all_positive, "swept expectile taus"),
    ConfigField("sweep.quantile", "floats", (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99), all_positive, "swept quantile taus"),
    ConfigField("sweep.exponential", "floats", (0.1, 0.25, 0.5, 1.0, 2.0, 5.0), all_positive, "swept exponential alphas"),
    ConfigField("sweep.draws", "int", 10000, positive, "arm draws per implicit actor"),
    ConfigField("figure1.betas", "floats", (0.5, 3.0, 10.0), all_positive, "inverse temperatures of the Gaussian AWR baseline"),
]

SCHEMA = {f.key: f for f in _FIELDS}


class ExperimentConfig(object):
    """
    A complete, validated experiment configuration.

    Values are accessed by key, e.g. C{config["critic.lr"]}.
    """
    def __init__(self, values=None):
        """
        The default constructor.

        @param values: values overriding the defaults
        @type values: L{dict} or L{None}
        @raises pyidql.exceptions.ConfigError: on unknown keys or invalid values
        """
        self._values = {key: field.default for key, field in SCHEMA.items()}
        for key, value in (values or {}).items():
            if key not in SCHEMA:
                raise ConfigError("Unknown configuration key '{}'".format(key))
            self._values[key] = SCHEMA[key].check(value)
        self.validate()

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise KeyError("Unknown configuration key '{}'".format(key))
        return self._values[key]

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self._values == other._values

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "<ExperimentConfig kind={} seed={} hash={}>".format(self.kind, self.seed, self.config_hash()[:12])

    @property
    def kind(self):
        return self._values["experiment.kind"]

    @property
    def seed(self):
        return self._values["experiment.seed"]

    def to_dict(self):
        """
        Return a copy of all values.

        @rtype: L{dict}
        """
        return dict(self._values)

    def validate(self):
        """
        Check constraints spanning several keys.

        @raises pyidql.exceptions.ConfigError: on a violated constraint
        """
        try:
            self.loss()
        except ValueError as e:
            raise ConfigError("Invalid value for 'loss.param': {}".format(e))
        if self["audit.min_actions"] > self["audit.max_actions"]:
            raise ConfigError("Invalid value for 'audit.min_actions': must not exceed audit.max_actions")
        if self["score.time_embed_dim"] % 2:
            raise ConfigError("Invalid value for 'score.time_embed_dim': must be even, got {}".format(self["score.time_embed_dim"]))
        if self["env.id"] == "gridworld" and self["env.width"] * self["env.height"] < 2:
            raise ConfigError("Invalid value for 'env.width': a grid world needs at least 2 cells")
        if self.kind in ("evaluate", "ddpm-sample") and not self["input.run_dir"]:
            raise ConfigError("Invalid value for 'input.run_dir': required by the {} experiment".format(self.kind))
        for family in ("expectile", "quantile"):
            if any(p >= 1.0 for p in self["sweep." + family]):
                raise ConfigError("Invalid value for 'sweep.{}': every tau must be in (0, 1)".format(family))
        try:
            self.diffusion_config().make_schedule()
        except ValueError as e:
            raise ConfigError("Invalid value for 'diffusion.beta_min': {}".format(e))

    # ============== text form ================

    def to_string(self):
        """
        Return the canonical text form.

        @rtype: L{str}
        """
        lines = ["# pyidql experiment configuration"]
        for key in sorted(SCHEMA):
            lines.append("{} = {}".format(key, SCHEMA[key].format(self._values[key])))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_string(cls, s, defaults=None, overrides=None):
        """
        Parse the text form. Missing keys keep their defaults.

        Validation happens once, after the overrides are applied.

        @param s: the text
        @type s: L{str}
        @param defaults: values applied before the text
        @type defaults: L{dict} or L{None}
        @param overrides: values applied after the text
        @type overrides: L{dict} or L{None}
        @rtype: L{ExperimentConfig}
        @raises pyidql.exceptions.ConfigError: on malformed lines, duplicate or unknown keys and invalid values
        """
        values = dict(defaults or {})
        seen = set()
        for lineno, raw in enumerate(s.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("Line {}: expected 'key = value', got '{}'".format(lineno, raw.strip()))
            key, text = (part.strip() for part in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError("Line {}: unknown configuration key '{}'".format(lineno, key))
            if key in seen:
                raise ConfigError("Line {}: duplicate configuration key '{}'".format(lineno, key))
            seen.add(key)
            values[key] = SCHEMA[key].parse(text)
        values.update(overrides or {})
        return cls(values)

    def to_file(self, path):
        """
        Write the text form to a file.

        @param path: path of the file
        @type path: L{str}
        """
        with open(path, "w", encoding=constants.ENCODING, newline="\n") as fout:
            fout.write(self.to_string())

    @classmethod
    def from_file(cls, path):
        """
        Read a configuration file.

        @param path: path of the file
        @type path: L{str}
        @rtype: L{ExperimentConfig}
        """
        with open(path, "r", encoding=constants.ENCODING) as fin:
            return cls.from_string(fin.read())

    def with_overrides(self, overrides):
        """
        Return a copy with C{key=value} overrides applied.

        @param overrides: overrides in the text form, e.g. C{["critic.lr=1e-3"]}
        @type overrides: L{list} of L{str} or L{dict}
        @rtype: L{ExperimentConfig}
        @raises pyidql.exceptions.ConfigError: on malformed overrides
        """
        values = self.to_dict()
        if isinstance(overrides, dict):
            for key, value in overrides.items():
                if key not in SCHEMA:
                    raise ConfigError("Unknown configuration key '{}'".format(key))
                values[key] = SCHEMA[key].parse(value) if isinstance(value, str) else value
            return ExperimentConfig(values)
        for override in overrides:
            if "=" not in override:
                raise ConfigError("Expected an override of the form key=value, got '{}'".format(override))
            key, text = (part.strip() for part in override.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError("Unknown configuration key '{}'".format(key))
            values[key] = SCHEMA[key].parse(text)
        return ExperimentConfig(values)

    def config_hash(self):
        """
        Return the sha256 of the canonical text form.

        @rtype: L{str}
        """
        return sha256_bytes(self.to_string().encode(constants.ENCODING))

    # ============== component configurations ================

    def loss(self):
        """
        @rtype: L{pyidql.losses.ConvexLoss}
        """
        return ConvexLoss.parse("{}:{!r}".format(self["loss.family"], self["loss.param"]))

    def critic_config(self):
        """
        @rtype: L{pyidql.critic.CriticConfig}
        """
        return CriticConfig(
            loss=self.loss(),
            hidden_dim=self["critic.hidden_dim"],
            n_hidden=self["critic.n_hidden"],
            activation=Activation.parse(self["critic.activation"]),
            lr=self["critic.lr"],
            batch_size=self["critic.batch_size"],
            discount=self["critic.discount"],
            target_ema=self["critic.target_ema"],
            twin=self["critic.twin"],
            steps=self["critic.steps"],
            report_interval=self["critic.report_interval"],
        )

    def score_config(self, state_dim, action_dim, arch=None):
        """
        @param arch: architecture overriding C{score.arch}
        @type arch: L{str} or L{None}
        @rtype: L{pyidql.diffusion.ScoreNetConfig}
        """
        return ScoreNetConfig(
            state_dim=state_dim,
            action_dim=action_dim,
            arch=arch or self["score.arch"],
            hidden_dim=self["score.hidden_dim"],
            n_blocks=self["score.n_blocks"],
            mlp_layers=self["score.mlp_layers"],
            dropout=self["score.dropout"],
            use_layer_norm=self["score.layer_norm"],
            time_embed_dim=self["score.time_embed_dim"],
            activation=Activation.parse(self["score.activation"]),
        )

    def diffusion_config(self):
        """
        @rtype: L{pyidql.diffusion.DiffusionConfig}
        """
        return DiffusionConfig(
            kind=self["diffusion.schedule"],
            T=self["diffusion.T"],
            beta_min=self["diffusion.beta_min"],
            beta_max=self["diffusion.beta_max"],
            norm=self["diffusion.norm"],
            final_step_noise=self["diffusion.final_step_noise"],
            clip_actions=self["diffusion.clip_actions"],
        )

    def actor_config(self):
        """
        @rtype: L{pyidql.diffusion.ActorConfig}
        """
        return ActorConfig(
            lr=self["actor.lr"],
            batch_size=self["actor.batch_size"],
            steps=self["actor.steps"],
            cosine_decay=self["actor.cosine_decay"],
            report_interval=self["actor.report_interval"],
            awr_alpha=self["actor.awr_alpha"],
            awr_max_weight=self["actor.awr_max_weight"],
        )

    def extraction_spec(self):
        """
        @rtype: L{pyidql.extraction.ExtractionSpec}
        """
        return ExtractionSpec(n_samples=self["extraction.n_samples"], mode=self["extraction.mode"], loss=self.loss())

    def finetune_config(self):
        """
        @rtype: L{pyidql.finetune.FinetuneConfig}
        """
        return FinetuneConfig(
            mode=self["finetune.mode"],
            env_steps=self["finetune.env_steps"],
            critic_steps=self["finetune.critic_steps"],
            actor_steps=self["finetune.actor_steps"],
            eval_interval=self["finetune.eval_interval"],
            eval_episodes=self["eval.episodes"],
            n_samples=self["extraction.n_samples"],
        )

    def make_env(self):
        """
        Create the configured environment.

        @rtype: L{pyidql.envs.Env}
        """
        env_id = self["env.id"]
        if env_id == "gridworld":
            return make_env(
                env_id,
                width=self["env.width"],
                height=self["env.height"],
                slip=self["env.slip"],
                gamma=self["env.gamma"],
                max_episode_steps=self["env.max_steps"],
            )
        if env_id == "bandit":
            return make_env(env_id, reward_means=self["env.bandit_means"], noise_std=self["env.bandit_noise"])
        return make_env(env_id)


def output_root(explicit=None):
    """
    Return the directory runs are written to.

    @param explicit: a root given on the command line, preferred if set
    @type explicit: L{str} or L{None}
    @rtype: L{str}
    """
    if explicit:
        return explicit
    return os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT
