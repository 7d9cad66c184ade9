"""
Command line interface.

Every experiment is a subcommand, e.g.::

    pyidql audit
    pyidql train-offline --set critic.steps=2000 --seed 3
    pyidql evaluate --run-dir runs/train-offline-s3-... --mode implicit
    pyidql run experiment.txt --seeds 0,1,2 --jobs 3

Exit codes: 0 on success, 1 if an experiment fails (with a single
C{error: <ExceptionClass>: <message>} line on stderr), 2 on invalid
arguments.

@var SHORTCUTS: experiment specific options, as (flag, key, help) by experiment
@type SHORTCUTS: L{dict}
@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ExperimentConfig, EXPERIMENT_KINDS, SCHEMA, output_root
from .exceptions import BaseIdqlException, ConfigError
from .runner import run


logger = logging.getLogger(__name__)


SHORTCUTS = {
    "evaluate": [
        ("--run-dir", "input.run_dir", "run directory of a train-offline run"),
        ("--mode", "extraction.mode", "extraction mode (greedy or implicit)"),
        ("--n-samples", "extraction.n_samples", "candidates per state"),
        ("--episodes", "eval.episodes", "evaluation episodes"),
    ],
    "ddpm-sample": [
        ("--run-dir", "input.run_dir", "run directory of a ddpm-train run"),
        ("--n", "sample.n", "number of samples"),
    ],
    "finetune": [
        ("--run-dir", "input.run_dir", "run directory of a train-offline run"),
        ("--mode", "finetune.mode", "finetuning mode (max or imp)"),
        ("--env-steps", "finetune.env_steps", "environment step budget"),
    ],
    "ddpm-train": [
        ("--generator", "dataset.generator", "toy 2D dataset"),
        ("--arch", "score.arch", "score network architecture"),
    ],
    "bandit-sweep": [
        ("--family", "loss.family", "loss family to sweep"),
    ],
}


def _add_common_arguments(parser):
    parser.add_argument("--config", dest="config", default=None, help="configuration file to start from")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a configuration value (repeatable)")
    parser.add_argument("--seed", dest="seed", type=int, default=None, help="experiment seed")
    parser.add_argument("--seeds", dest="seeds", default=None, help="comma separated seeds, one run each")
    parser.add_argument("--jobs", dest="jobs", type=int, default=1, help="number of runs executed in parallel processes (default: 1)")
    parser.add_argument("--output", dest="output", default=None, help="output root (default: $PYIDQL_OUTPUT_ROOT or ./runs)")
    parser.add_argument("--log-level", dest="loglevel", default="INFO", help="log level (default: INFO)")


def build_parser():
    """
    Build the argument parser.

    @rtype: L{argparse.ArgumentParser}
    """
    parser = argparse.ArgumentParser(prog="pyidql", description="Implicit Q-learning with diffusion behavior policies")
    subparsers = parser.add_subparsers(dest="command", required=True)
    runparser = subparsers.add_parser("run", help="run the experiment of a configuration file")
    runparser.add_argument("path", help="configuration file")
    _add_common_arguments(runparser)
    for kind in EXPERIMENT_KINDS:
        subparser = subparsers.add_parser(kind, help="run the {} experiment".format(kind))
        _add_common_arguments(subparser)
        for flag, key, helptext in SHORTCUTS.get(kind, []):
            subparser.add_argument(flag, dest="shortcut:" + key, default=None, help="{} ({})".format(helptext, key))
    return parser


def parse_seeds(s):
    """
    Parse a comma separated list of seeds.

    @rtype: L{list} of L{int}
    @raises pyidql.exceptions.ConfigError: on a malformed list
    """
    try:
        seeds = [int(part) for part in s.split(",") if part.strip()]
    except ValueError:
        raise ConfigError("Invalid value for '--seeds': expected comma separated integers, got '{}'".format(s))
    if not seeds:
        raise ConfigError("Invalid value for '--seeds': no seeds given")
    return seeds


def config_from_args(ns):
    """
    Assemble the configuration of the parsed arguments.

    Values are applied in order: config file, subcommand, C{--set}
    overrides, shortcut options and C{--seed}.

    @param ns: the parsed arguments
    @type ns: L{argparse.Namespace}
    @rtype: L{pyidql.config.ExperimentConfig}
    @raises pyidql.exceptions.ConfigError: on an invalid configuration
    """
    path = ns.path if ns.command == "run" else ns.config
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError("Configuration file '{}' does not exist".format(path))
        with open(path, "r", encoding="utf-8") as fin:
            text = fin.read()
    else:
        text = ""
    overrides = []
    if ns.command != "run":
        overrides.append("experiment.kind={}".format(ns.command))
    overrides.extend(ns.overrides)
    for name, value in sorted(vars(ns).items()):
        if name.startswith("shortcut:") and value is not None:
            overrides.append("{}={}".format(name[len("shortcut:"):], value))
    if ns.seed is not None:
        overrides.append("experiment.seed={}".format(ns.seed))
    values = {}
    for override in overrides:
        if "=" not in override:
            raise ConfigError("Expected an override of the form key=value, got '{}'".format(override))
        key, value = (part.strip() for part in override.split("=", 1))
        values[key] = value
    return ExperimentConfig.from_string(text, overrides=_parsed(values))


def _parsed(values):
    parsed = {}
    for key, text in values.items():
        if key not in SCHEMA:
            raise ConfigError("Unknown configuration key '{}'".format(key))
        parsed[key] = SCHEMA[key].parse(text)
    return parsed


def setup_logging(level):
    """
    Configure the root logger.

    @param level: name or number of the log level
    @type level: L{str}
    """
    if level.isdigit():
        level = int(level)
    else:
        level = level.upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _run_job(config_text, root, loglevel):
    """
    Run one experiment in a worker process.

    @return: the run directory
    @rtype: L{str}
    """
    setup_logging(loglevel)
    return run(ExperimentConfig.from_string(config_text), root).run_dir


def _report(config, run_dir):
    print(run_dir)
    if config.kind == "evaluate":
        with open(os.path.join(run_dir, "evaluation.json"), "r", encoding="utf-8") as fin:
            summary = json.load(fin)
        keys = ("mean_return", "std_return", "episodes", "config_hash")
        print(json.dumps({k: summary[k] for k in keys}, sort_keys=True))


def main(argv=None):
    """
    The main function.

    @param argv: arguments, defaults to C{sys.argv[1:]}
    @type argv: L{list} of L{str} or L{None}
    @return: the exit code
    @rtype: L{int}
    """
    parser = build_parser()
    ns = parser.parse_args(argv)
    setup_logging(ns.loglevel)
    try:
        config = config_from_args(ns)
        if ns.jobs < 1:
            raise ConfigError("Invalid value for '--jobs': must be positive, got {}".format(ns.jobs))
        seeds = parse_seeds(ns.seeds) if ns.seeds is not None else [config.seed]
        configs = [config.with_overrides({"experiment.seed": seed}) for seed in seeds]
        root = output_root(ns.output)
        if ns.jobs == 1 or len(configs) == 1:
            for c in configs:
                _report(c, run(c, root).run_dir)
        else:
            with ProcessPoolExecutor(max_workers=ns.jobs) as executor:
                futures = [executor.submit(_run_job, c.to_string(), root, ns.loglevel) for c in configs]
                for c, future in zip(configs, futures):
                    _report(c, future.result())
    except BaseIdqlException as e:
        sys.stderr.write("error: {}: {}\n".format(type(e).__name__, e))
        return 1
    return 0
