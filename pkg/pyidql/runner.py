"""
Experiment runner.

L{run} executes an L{pyidql.config.ExperimentConfig} and writes a run
directory::

    <root>/<experiment>-s<seed>-<hash12>/
        config.txt          the configuration, in its canonical text form
        ...                 checkpoints, CSV and JSON outputs of the experiment
        divergence.json     only if training diverged
        manifest.json       {"config_hash", "experiment", "files": {name: sha256}, "seed"}

All randomness is drawn from named streams of the experiment seed, so a
configuration always produces byte-identical outputs on one platform.

@var EXPERIMENTS: the experiment implementations, by kind
@type EXPERIMENTS: L{dict} of L{str} -> callable
@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import csv
import json
import logging
import os

import numpy as np

from . import constants
from .awr import critic_awr_weights, fit_gaussian_awr
from .config import ExperimentConfig, output_root
from .critic import CriticNets, update as critic_update
from .dataset import (
    OfflineDataset, sample_batch, generate_bandit_dataset, generate_gridworld_dataset,
    standardize_rewards, shift_rewards, make_toy2d,
)
from .diffusion import BehaviorModel, bc_loss, bc_step, draw_noise, train_behavior
from .envs import DiscreteBandit, ContinuousBandit2D, GridWorld, decode_discrete
from .exceptions import DivergenceError, ConfigError, LossOverflow
from .extraction import ExtractionSpec, ExtractionMode, act_many, evaluate_policy
from .finetune import finetune, CurvePoint
from .losses import ConvexLoss, DiscreteActionDistribution, solve_value, implicit_policy, kl_behavior_to_awr, exponential_value
from .oracles import fixed_point_audit, oracle_value, optimal_return
from .processor import CsvReportWriter, call_processors
from .util.hashing import sha256_file
from .util.rngutil import stream


logger = logging.getLogger(__name__)


EXPERIMENTS = {}

# losses audited by the audit experiment
AUDIT_LOSSES = (
    ("expectile", 0.6), ("expectile", 0.7), ("expectile", 0.8), ("expectile", 0.9),
    ("quantile", 0.6), ("quantile", 0.8),
    ("exponential", 0.5), ("exponential", 1.0), ("exponential", 2.0),
)
# evaluation batch of the diffusion loss before and after training
BC_EVAL_SIZE = 1024


def experiment(kind):
    """
    Register a function as the implementation of an experiment.

    @param kind: the experiment kind
    @type kind: L{str}
    """
    def decorator(f):
        EXPERIMENTS[kind] = f
        return f
    return decorator


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError("Object of type {} is not JSON serializable".format(type(o)))


def _format_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class RunContext(object):
    """
    The run directory of an experiment and its random streams.

    @ivar config: the configuration
    @type config: L{pyidql.config.ExperimentConfig}
    @ivar run_dir: path of the run directory
    @type run_dir: L{str}
    @ivar files: names of the files written so far
    @type files: L{list} of L{str}
    """
    def __init__(self, config, root):
        """
        The default constructor.

        @param config: the configuration
        @type config: L{pyidql.config.ExperimentConfig}
        @param root: directory to create the run directory in
        @type root: L{str}
        """
        self.config = config
        name = "{}-s{}-{}".format(config.kind, config.seed, config.config_hash()[:12])
        self.run_dir = os.path.join(root, name)
        os.makedirs(self.run_dir, exist_ok=True)
        self.files = []

    def stream(self, name):
        """
        Return a named random stream of the experiment seed.

        @rtype: L{numpy.random.Generator}
        """
        return stream(self.config.seed, name)

    def path(self, name):
        """
        Return the path of a file in the run directory and record it for the manifest.

        @param name: name of the file
        @type name: L{str}
        @rtype: L{str}
        """
        if name not in self.files:
            self.files.append(name)
        return os.path.join(self.run_dir, name)

    def write_json(self, name, obj):
        with open(self.path(name), "w", encoding=constants.ENCODING, newline="\n") as fout:
            json.dump(obj, fout, sort_keys=True, indent=2, default=_json_default)
            fout.write("\n")

    def write_csv(self, name, fields, rows):
        with open(self.path(name), "w", encoding=constants.ENCODING, newline="") as fout:
            writer = csv.writer(fout, lineterminator="\n")
            writer.writerow(fields)
            for row in rows:
                writer.writerow([_format_cell(v) for v in row])

    def write_manifest(self):
        """
        Hash every recorded file and write C{manifest.json}.

        Recorded files that were never written (e.g. a report file of a
        loop that diverged before its first report) are left out.

        @return: the manifest
        @rtype: L{dict}
        """
        written = [name for name in sorted(self.files) if os.path.isfile(os.path.join(self.run_dir, name))]
        manifest = {
            "experiment": self.config.kind,
            "seed": self.config.seed,
            "config_hash": self.config.config_hash(),
            "files": {name: sha256_file(os.path.join(self.run_dir, name)) for name in written},
        }
        with open(os.path.join(self.run_dir, "manifest.json"), "w", encoding=constants.ENCODING, newline="\n") as fout:
            json.dump(manifest, fout, sort_keys=True, indent=2)
            fout.write("\n")
        return manifest


class RunResult(object):
    """
    The outcome of L{run}.

    @ivar run_dir: path of the run directory
    @type run_dir: L{str}
    @ivar manifest: the written manifest
    @type manifest: L{dict}
    """
    def __init__(self, run_dir, manifest):
        self.run_dir = run_dir
        self.manifest = manifest

    def __repr__(self):
        return "<RunResult {}>".format(self.run_dir)


def run(config, root=None):
    """
    Run an experiment.

    @param config: the configuration
    @type config: L{pyidql.config.ExperimentConfig}
    @param root: output root, see L{pyidql.config.output_root}
    @type root: L{str} or L{None}
    @return: the run directory and its manifest
    @rtype: L{RunResult}
    @raises pyidql.exceptions.DivergenceError: if training diverged, after writing C{divergence.json}
    @raises pyidql.exceptions.LossOverflow: if the exponential loss overflowed outside training, after writing C{divergence.json}
    """
    assert isinstance(config, ExperimentConfig)
    ctx = RunContext(config, output_root(root))
    logger.info("Running {} (seed {}) in {}".format(config.kind, config.seed, ctx.run_dir))
    config.to_file(ctx.path("config.txt"))
    try:
        EXPERIMENTS[config.kind](ctx)
    except (DivergenceError, LossOverflow) as e:
        logger.error("Training diverged: {}".format(e))
        ctx.write_json("divergence.json", {"message": str(e), "snapshot": getattr(e, "snapshot", None)})
        ctx.write_manifest()
        raise
    manifest = ctx.write_manifest()
    logger.info("Finished {}, wrote {} files".format(config.kind, len(manifest["files"])))
    return RunResult(ctx.run_dir, manifest)


# ===================== loss experiments =======================

@experiment("audit")
def run_audit(ctx):
    """
    Audit the implicit actor, the closed form exponential value and the KL identity on random distributions.
    """
    config = ctx.config
    rng = ctx.stream("audit")
    tolerance = config["audit.tolerance"]
    losses = [ConvexLoss(family, param) for family, param in AUDIT_LOSSES]
    worst = {loss.to_string(): {"value": 0.0, "fixed_point": 0.0, "stationarity": 0.0, "failures": 0} for loss in losses}
    kl_error = 0.0
    closed_form_error = 0.0
    checks = 0
    logger.info("Auditing {} losses on {} random distributions...".format(len(losses), config["audit.n_bandits"]))
    for _ in range(config["audit.n_bandits"]):
        n = int(rng.integers(config["audit.min_actions"], config["audit.max_actions"] + 1))
        dist = DiscreteActionDistribution.random(rng, n)
        for loss in losses:
            report = fixed_point_audit(loss, dist, tolerance=tolerance)
            entry = worst[loss.to_string()]
            entry["value"] = max(entry["value"], report.value_residual)
            entry["fixed_point"] = max(entry["fixed_point"], report.fixed_point_residual)
            if loss.kind.name != "QUANTILE":
                entry["stationarity"] = max(entry["stationarity"], report.stationarity_residual)
            entry["failures"] += 0 if report.passed else 1
            checks += 1
        direct, closed = kl_behavior_to_awr(1.0, dist)
        kl_error = max(kl_error, abs(direct - closed))
        v_closed = exponential_value(1.0, dist)
        v_search = oracle_value("exponential", 1.0, dist.q_values, dist.probs)
        closed_form_error = max(closed_form_error, abs(v_closed - v_search))
    rows = [[name, e["value"], e["fixed_point"], e["stationarity"], e["failures"]] for name, e in sorted(worst.items())]
    ctx.write_csv("audit.csv", ("loss", "max_value_residual", "max_fixed_point_residual", "max_stationarity_residual", "failures"), rows)
    failures = sum(e["failures"] for e in worst.values())
    summary = {
        "checks": checks,
        "failures": failures,
        "max_value_residual": max(e["value"] for e in worst.values()),
        "max_fixed_point_residual": max(e["fixed_point"] for e in worst.values()),
        "max_stationarity_residual": max(e["stationarity"] for e in worst.values()),
        "max_kl_identity_error": kl_error,
        "max_exponential_closed_form_error": closed_form_error,
        "tolerance": tolerance,
        "passed": failures == 0,
    }
    ctx.write_json("audit.json", summary)
    return summary


def estimate_arm_distribution(dataset, n_arms):
    """
    Estimate arm probabilities and Q-values of a discrete bandit from its dataset.

    Arms never taken are left out.

    @param dataset: the bandit transitions
    @type dataset: L{pyidql.dataset.OfflineDataset}
    @param n_arms: number of arms
    @type n_arms: L{int}
    @return: the distribution and the arm index of each of its actions
    @rtype: L{tuple} of (L{pyidql.losses.DiscreteActionDistribution}, L{numpy.ndarray})
    """
    arms = np.array([decode_discrete(a, n_arms) for a in dataset.actions])
    counts = np.bincount(arms, minlength=n_arms)
    taken = np.flatnonzero(counts)
    q = np.array([np.mean(dataset.rewards[arms == arm]) for arm in taken])
    probs = counts[taken] / float(len(dataset))
    return DiscreteActionDistribution(q, probs / np.sum(probs)), taken


def _sweep(ctx, families):
    config = ctx.config
    bandit = DiscreteBandit(reward_means=config["env.bandit_means"], noise_std=config["env.bandit_noise"])
    dataset = generate_bandit_dataset(bandit, config["dataset.size"], ctx.stream("dataset"), seed=config.seed)
    dist, arms = estimate_arm_distribution(dataset, bandit.n_arms)
    rng = ctx.stream("sweep")
    draws = config["sweep.draws"]
    rows = []
    for family in families:
        for param in config["sweep." + family]:
            loss = ConvexLoss(family, param)
            v = solve_value(loss, dist)
            pi = implicit_policy(loss, dist, v=v)
            chosen = arms[rng.choice(len(arms), size=draws, p=pi)]
            rewards = bandit.reward_means[chosen] + bandit.noise_std * rng.standard_normal(draws)
            rows.append([family, param, v, float(np.mean(rewards)), float(np.std(rewards))])
            logger.debug("{}: V*={:.4f}, implicit reward {:.4f}".format(loss.to_string(), v, rows[-1][3]))
    ctx.write_csv("sweep.csv", ("family", "param", "v_star", "mean_implicit_reward", "std"), rows)
    behavior = {
        "mean_reward": float(np.mean(dataset.rewards)),
        "std_reward": float(np.std(dataset.rewards)),
        "arms": arms.tolist(),
        "arm_probs": dist.probs.tolist(),
        "arm_q": dist.q_values.tolist(),
    }
    ctx.write_json("behavior.json", behavior)
    return rows, behavior


@experiment("bandit-sweep")
def run_bandit_sweep(ctx):
    """
    Sweep the parameter of the configured loss family on the discrete bandit.
    """
    return _sweep(ctx, (ctx.config["loss.family"], ))


@experiment("figure2")
def run_figure2(ctx):
    """
    Sweep all three loss families on the discrete bandit.
    """
    return _sweep(ctx, ("expectile", "quantile", "exponential"))


# ===================== diffusion experiments =======================

def _write_samples(ctx, name, samples):
    samples = np.asarray(samples)
    fields = ("x", "y") if samples.shape[1] == 2 else tuple("a{}".format(i) for i in range(samples.shape[1]))
    ctx.write_csv(name, fields, samples.tolist())


def toy_statistics(toy, samples):
    """
    Return mode coverage statistics of samples of a toy dataset.

    For C{gaussians8}, C{coverage} is the share of samples within 3 standard
    deviations of the nearest mode and C{outlier_fraction} the share farther
    than 4 standard deviations from every mode.

    @rtype: L{dict}
    """
    stats = {"n_samples": int(len(samples)), "mean": np.mean(samples, axis=0).tolist()}
    if toy.generator == "gaussians8":
        centers = toy.mode_centers()
        distance = np.min(np.linalg.norm(samples[:, None, :] - centers[None, :, :], axis=-1), axis=1)
        std = toy.params["std"]
        stats["coverage"] = float(np.mean(distance <= 3.0 * std))
        stats["outlier_fraction"] = float(np.mean(distance > 4.0 * std))
    return stats


def _train_toy(ctx, toy, arch, suffix):
    config = ctx.config
    n = len(toy)
    states = np.zeros((n, 1), dtype=constants.DTYPE)
    model = BehaviorModel(config.score_config(1, 2, arch=arch), config.diffusion_config(), ctx.stream("behavior-init" + suffix))
    eval_rng = ctx.stream("bc-eval")
    m = min(n, BC_EVAL_SIZE)
    t, noise = draw_noise(model.schedule, m, 2, eval_rng)

    def eval_loss():
        return bc_loss(model, states[:m], toy.points[:m], eval_rng, t=t, noise=noise, train=False).item()

    initial = eval_loss()
    with CsvReportWriter(ctx.path("bc_train{}.csv".format(suffix))) as writer:
        train_behavior(model, states, toy.points, config.actor_config(), ctx.stream("behavior-train" + suffix), processors=[writer])
    final = eval_loss()
    samples = model.sample(np.zeros(1), ctx.stream("sample" + suffix), config["sample.n"])
    stats = toy_statistics(toy, samples)
    stats.update({"arch": model.config.arch.name.lower(), "initial_loss": initial, "final_loss": final})
    return model, samples, stats


@experiment("ddpm-train")
def run_ddpm_train(ctx):
    """
    Train a behavior model on a toy 2D dataset and sample from it.
    """
    config = ctx.config
    toy = make_toy2d(config["dataset.generator"], config["dataset.size"], config.seed)
    model, samples, stats = _train_toy(ctx, toy, None, "")
    model.save(ctx.path("behavior.ckpt"))
    _write_samples(ctx, "samples.csv", samples)
    ctx.write_json("ddpm.json", stats)
    return stats


@experiment("ddpm-sample")
def run_ddpm_sample(ctx):
    """
    Sample from the behavior model of a C{ddpm-train} run.
    """
    source = ctx.config["input.run_dir"]
    stored = ExperimentConfig.from_file(os.path.join(source, "config.txt"))
    model = BehaviorModel(stored.score_config(1, 2), stored.diffusion_config(), ctx.stream("behavior-init"))
    model.load(os.path.join(source, "behavior.ckpt"))
    model.freeze()
    samples = model.sample(np.zeros(1), ctx.stream("sample"), ctx.config["sample.n"])
    _write_samples(ctx, "samples.csv", samples)
    return samples


@experiment("figure4")
def run_figure4(ctx):
    """
    Train both score network architectures with identical budgets on the same toy dataset.
    """
    config = ctx.config
    toy = make_toy2d(config["dataset.generator"], config["dataset.size"], config.seed)
    results = {}
    for arch in ("mlp", "lnresnet"):
        _, samples, stats = _train_toy(ctx, toy, arch, "_" + arch)
        _write_samples(ctx, "samples_{}.csv".format(arch), samples)
        results[arch] = stats
    ctx.write_json("figure4.json", results)
    return results


# ===================== offline RL experiments =======================

def make_offline_dataset(ctx, env):
    """
    Generate and preprocess the offline dataset of an environment.

    @rtype: L{pyidql.dataset.OfflineDataset}
    """
    config = ctx.config
    rng = ctx.stream("dataset")
    if isinstance(env, GridWorld):
        dataset = generate_gridworld_dataset(
            env, config["dataset.optimal_fraction"], config["dataset.size"], rng,
            epsilon=config["dataset.epsilon"], seed=config.seed,
        )
    else:
        dataset = generate_bandit_dataset(env, config["dataset.size"], rng, seed=config.seed)
    transform = config["dataset.reward_transform"]
    if transform == "standardize":
        dataset = standardize_rewards(dataset)
    elif transform == "shift":
        dataset = shift_rewards(dataset)
    return dataset


def build_models(ctx, config, env):
    """
    Create untrained critic and behavior networks for an environment.

    @rtype: L{tuple} of (L{pyidql.critic.CriticNets}, L{pyidql.diffusion.BehaviorModel})
    """
    critic = CriticNets(env.state_dim, env.action_dim, config.critic_config(), ctx.stream("critic-init"))
    behavior = BehaviorModel(
        config.score_config(env.state_dim, env.action_dim),
        config.diffusion_config(),
        ctx.stream("behavior-init"),
        action_low=env.action_low,
        action_high=env.action_high,
    )
    return critic, behavior


def pretrain(critic, behavior, dataset, critic_rng, actor_rng, actor_config, critic_processors=(), actor_processors=()):
    """
    Train critic and behavior model offline with interleaved steps.

    Each iteration takes one critic step and one behavior model step until
    the respective step budget is used up. With AWR weighting enabled the
    diffusion loss of each pair is weighted by the current critic.

    @param critic: the critic
    @type critic: L{pyidql.critic.CriticNets}
    @param behavior: the behavior model
    @type behavior: L{pyidql.diffusion.BehaviorModel}
    @param dataset: the offline dataset
    @type dataset: L{pyidql.dataset.OfflineDataset}
    @param critic_rng: random stream of the critic batches
    @type critic_rng: L{numpy.random.Generator}
    @param actor_rng: random stream of the behavior model batches
    @type actor_rng: L{numpy.random.Generator}
    @param actor_config: configuration of the behavior model training
    @type actor_config: L{pyidql.diffusion.ActorConfig}
    @param critic_processors: processors receiving the critic reports
    @type critic_processors: L{list} of L{pyidql.processor.BaseProcessor}
    @param actor_processors: processors receiving the behavior model reports
    @type actor_processors: L{list} of L{pyidql.processor.BaseProcessor}
    @raises pyidql.exceptions.DivergenceError: on a non-finite loss
    """
    critic_config = critic.config
    for processor in critic_processors:
        processor.on_install("critic")
    for processor in actor_processors:
        processor.on_install("behavior")
    iterations = max(critic_config.steps, actor_config.steps)
    logger.info("Pretraining for {} critic and {} behavior steps...".format(critic_config.steps, actor_config.steps))
    if critic_config.steps > constants.CRITIC_STABLE_STEPS:
        logger.warning("{} critic steps exceed {}; critic training tends to become unstable".format(critic_config.steps, constants.CRITIC_STABLE_STEPS))
    for i in range(iterations):
        if i < critic_config.steps:
            try:
                report = critic_update(critic, sample_batch(dataset, critic_config.batch_size, critic_rng))
            except DivergenceError as e:
                call_processors(critic_processors, "on_divergence", snapshot=e.snapshot)
                raise
            if (i + 1) % critic_config.report_interval == 0 or i == critic_config.steps - 1:
                call_processors(critic_processors, "on_report", report=report)
        if i < actor_config.steps:
            batch = sample_batch(dataset, actor_config.batch_size, actor_rng)
            weights = None
            if actor_config.awr_alpha is not None:
                weights = critic_awr_weights(critic, batch.states, batch.actions, actor_config.awr_alpha, actor_config.awr_max_weight)
            try:
                report = bc_step(behavior, batch.states, batch.actions, actor_rng, actor_config, weights=weights)
            except DivergenceError as e:
                call_processors(actor_processors, "on_divergence", snapshot=e.snapshot)
                raise
            if (i + 1) % actor_config.report_interval == 0 or i == actor_config.steps - 1:
                call_processors(actor_processors, "on_report", report=report)
    call_processors(critic_processors, "after_train")
    call_processors(actor_processors, "after_train")


def _pretrain_with_writers(ctx, critic, behavior, dataset):
    with CsvReportWriter(ctx.path("critic.csv")) as critic_writer, CsvReportWriter(ctx.path("actor.csv")) as actor_writer:
        pretrain(
            critic, behavior, dataset,
            ctx.stream("critic-train"), ctx.stream("behavior-train"), ctx.config.actor_config(),
            critic_processors=[critic_writer], actor_processors=[actor_writer],
        )


def _pretrain_in_run(ctx, env):
    config = ctx.config
    dataset = make_offline_dataset(ctx, env)
    dataset.save(ctx.path("dataset.bin"))
    critic, behavior = build_models(ctx, config, env)
    _pretrain_with_writers(ctx, critic, behavior, dataset)
    return dataset, critic, behavior


def _save_models(ctx, critic, behavior):
    for name in ("critic_q.ckpt", "critic_q_target.ckpt", "critic_v.ckpt"):
        ctx.path(name)
    critic.save(ctx.run_dir)
    behavior.save(ctx.path("behavior.ckpt"))


def load_run(ctx, source):
    """
    Load the environment, dataset and models of a C{train-offline} run.

    @param ctx: the current run
    @type ctx: L{RunContext}
    @param source: run directory to load from
    @type source: L{str}
    @rtype: L{tuple} of (L{pyidql.envs.Env}, L{pyidql.dataset.OfflineDataset}, L{pyidql.critic.CriticNets}, L{pyidql.diffusion.BehaviorModel})
    @raises pyidql.exceptions.ConfigError: if the directory is not a run directory
    """
    config_path = os.path.join(source, "config.txt")
    if not os.path.isfile(config_path):
        raise ConfigError("Invalid value for 'input.run_dir': '{}' contains no config.txt".format(source))
    stored = ExperimentConfig.from_file(config_path)
    env = stored.make_env()
    critic, behavior = build_models(ctx, stored, env)
    critic.load(source)
    behavior.load(os.path.join(source, "behavior.ckpt"))
    dataset = OfflineDataset.load(os.path.join(source, "dataset.bin"))
    return env, dataset, critic, behavior


def oracle_summary(env, dataset):
    """
    Return reference returns of an environment and its dataset.

    @rtype: L{dict}
    """
    summary = {}
    if isinstance(env, GridWorld):
        summary["optimal_return"] = optimal_return(env)
        summary["dataset_mean_return"] = dataset.metadata.get("mean_return")
    elif isinstance(env, DiscreteBandit):
        summary["optimal_return"] = float(np.max(env.reward_means))
        summary["dataset_mean_return"] = float(np.mean(dataset.rewards))
    else:
        summary["optimal_return"] = float(np.max(env.reward(env.mode_centers)))
        summary["dataset_mean_return"] = float(np.mean(dataset.rewards))
    return summary


def _evaluate(ctx, spec, env, behavior, critic):
    config = ctx.config
    result = evaluate_policy(
        spec, env, behavior, critic, config["eval.episodes"], ctx.stream("eval"), discounted=config["eval.discounted"],
    )
    summary = result.to_dict()
    summary.update({
        "config_hash": config.config_hash(),
        "mode": spec.mode.name.lower(),
        "n_samples": spec.n_samples,
    })
    return summary


@experiment("train-offline")
def run_train_offline(ctx):
    """
    Generate a dataset, train critic and behavior model offline and evaluate the extracted policy.
    """
    env = ctx.config.make_env()
    dataset, critic, behavior = _pretrain_in_run(ctx, env)
    _save_models(ctx, critic, behavior)
    summary = _evaluate(ctx, ctx.config.extraction_spec(), env, behavior, critic)
    summary.update(oracle_summary(env, dataset))
    ctx.write_json("evaluation.json", summary)
    return summary


@experiment("evaluate")
def run_evaluate(ctx):
    """
    Evaluate the models of a C{train-offline} run with the configured extraction.
    """
    env, dataset, critic, behavior = load_run(ctx, ctx.config["input.run_dir"])
    critic.freeze()
    behavior.freeze()
    summary = _evaluate(ctx, ctx.config.extraction_spec(), env, behavior, critic)
    summary.update(oracle_summary(env, dataset))
    ctx.write_json("evaluation.json", summary)
    return summary


@experiment("finetune")
def run_finetune(ctx):
    """
    Finetune pretrained models online, pretraining them in the run unless C{input.run_dir} is set.
    """
    config = ctx.config
    if config["input.run_dir"]:
        env, dataset, critic, behavior = load_run(ctx, config["input.run_dir"])
    else:
        env = config.make_env()
        dataset, critic, behavior = _pretrain_in_run(ctx, env)
    fingerprint = behavior.params.values_fingerprint()
    with CsvReportWriter(ctx.path("finetune_critic.csv")) as writer:
        buffer, curve = finetune(
            critic, behavior, env, dataset, config.finetune_config(), ctx.stream("finetune"),
            actor_config=config.actor_config(), processors=[writer],
        )
    ctx.write_csv("curve.csv", CurvePoint.FIELDS, [point.to_row() for point in curve])
    _save_models(ctx, critic, behavior)
    summary = {
        "mode": config["finetune.mode"],
        "env_steps": config["finetune.env_steps"],
        "buffer_size": len(buffer),
        "initial_return": curve[0].mean,
        "final_return": curve[-1].mean,
        "behavior_unchanged": behavior.params.values_fingerprint() == fingerprint,
    }
    summary.update(oracle_summary(env, dataset))
    ctx.write_json("finetune.json", summary)
    return summary


@experiment("figure1")
def run_figure1(ctx):
    """
    Compare resampling from a diffusion behavior model with unimodal Gaussian AWR fits on the 2D bandit.
    """
    config = ctx.config
    env = ContinuousBandit2D()
    dataset = generate_bandit_dataset(env, config["dataset.size"], ctx.stream("dataset"), seed=config.seed)
    dataset.save(ctx.path("dataset.bin"))
    critic, behavior = build_models(ctx, config, env)
    _pretrain_with_writers(ctx, critic, behavior, dataset)
    state = np.zeros(1, dtype=constants.DTYPE)
    spec = ExtractionSpec(n_samples=config["extraction.n_samples"], mode=ExtractionMode.IMPLICIT, loss=config.loss())
    resampled = act_many(spec, state, behavior, critic, ctx.stream("resample"), config["sample.n"])
    _write_samples(ctx, "resampled.csv", resampled)
    best = env.best_mode()
    advantages = critic.q_min(dataset.states, dataset.actions) - critic.value(dataset.states)
    awr = []
    for beta in config["figure1.betas"]:
        policy = fit_gaussian_awr(dataset.actions, advantages, beta)
        distance = np.linalg.norm(env.mode_centers - policy.mean[None, :], axis=1)
        awr.append({
            "beta": beta,
            "mean": policy.mean.tolist(),
            "nearest_mode": int(np.argmin(distance)),
            "distance_to_nearest_mode": float(np.min(distance)),
            "off_modes": bool(np.min(distance) > 3.0 * env.mode_std),
        })
    summary = {
        "best_mode": int(best),
        "resampled_best_mode_fraction": float(np.mean(env.nearest_mode(resampled) == best)),
        "behavior_best_mode_fraction": float(np.mean(env.nearest_mode(dataset.actions) == best)),
        "resampled_mean_reward": float(np.mean(env.reward(resampled))),
        "behavior_mean_reward": float(np.mean(dataset.rewards)),
        "awr": awr,
    }
    ctx.write_json("figure1.json", summary)
    return summary
