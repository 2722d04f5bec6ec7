from __future__ import annotations

import configparser
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Optional

from maybe import Maybe
from pathmagic import Dir, File, PathLike

from ..errors import ConfigError
from ..numkernel import DatasetSpec, ModelKind
from ..optim import HyperParams, LocalOptimizer, Strategy
from ..pipesim import TimingProfile
from ..psruntime import RuntimeOptions, TrainingConfig, TransportKind

logger = logging.getLogger(__name__)


def _boolean(text: Any) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> converter
SCHEMA: dict[str, dict[str, Callable[[Any], Any]]] = {
    "model": {"kind": ModelKind, "hidden": int},
    "data": {"n_samples": int, "dim": int, "noise": float, "eval_fraction": float},
    "optim": {
        "lr": float, "loc_lr": float, "alpha": float, "beta": float, "wd": float, "momentum": float,
        "k": int, "wp": int, "batch_size": int, "local_optimizer": LocalOptimizer,
    },
    "cluster": {
        "workers": int, "servers": int, "devices": int, "transport": TransportKind, "latency": float, "bandwidth": float,
        "pull_timeout": float, "pull_attempts": int, "asgd_momentum": _boolean,
    },
    "run": {"strategy": Strategy, "iterations": int, "eval_interval": int, "seed": int, "deterministic": _boolean, "out": str, "profile": str},
}

KEY_SECTIONS = {key: section for section, keys in SCHEMA.items() for key in keys}


@dataclass
class ExperimentConfig:
    """A training run plus where its artifacts go."""
    training: TrainingConfig = field(default_factory=TrainingConfig)
    out: PathLike = "runs"
    profile_path: Optional[PathLike] = None
    name: str = "run"

    @property
    def hp(self) -> HyperParams:
        return self.training.hp

    @property
    def strategy(self) -> Strategy:
        return self.training.options.strategy

    def output_dir(self) -> Dir:
        return output_dir(self.out)

    def with_changes(self, name: Optional[str] = None, options: Optional[Mapping[str, Any]] = None, **hyper: Any) -> ExperimentConfig:
        """A copy with some hyperparameters (and runtime options) replaced, validated again."""
        training = replace(self.training, hp=replace(self.training.hp, **hyper), options=replace(self.training.options, **(options or {})))
        if (1 + training.hp.wp) % training.hp.k:
            compatible = _compatible_warmup(training.hp.wp, training.hp.k)
            logger.info("Warm-up of %d iterations does not fit k=%d; using %d.", training.hp.wp, training.hp.k, compatible)
            training.hp.wp = compatible
        config = replace(self, training=training, name=Maybe(name).else_(self.name))
        config.training.validate()
        return config


def _compatible_warmup(wp: int, k: int) -> int:
    """The largest warm-up length not above wp for which (1 + wp) is a multiple of k."""
    return max(k - 1, (1 + wp) // k * k - 1)


def check_output_dir(path: PathLike) -> None:
    """Raise ConfigError unless path is a writable directory or could be created as one."""
    target = os.path.abspath(path)
    if os.path.exists(target) and not os.path.isdir(target):
        raise ConfigError(f"{os.fspath(path)!r} exists and is not a directory", field="out")

    existing = target
    while not os.path.exists(existing):
        existing = os.path.dirname(existing)
    if not os.path.isdir(existing):
        raise ConfigError(f"cannot create a directory below the file {existing!r}", field="out")
    if not os.access(existing, os.W_OK | os.X_OK):
        raise ConfigError(f"{existing!r} is not writable", field="out")


def output_dir(path: PathLike) -> Dir:
    """The directory at path, created if missing."""
    check_output_dir(path)
    os.makedirs(path, exist_ok=True)
    return Dir.from_pathlike(path)


def read_ini(path: PathLike) -> dict[str, Any]:
    """Flat key -> converted value mapping from an INI file. Unknown sections and keys are rejected."""
    if not os.path.isfile(path):
        raise ConfigError(f"no such file: {os.fspath(path)!r}", field="config")

    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(File.from_pathlike(path)) as stream:
            parser.read_file(stream)
    except OSError as ex:
        raise ConfigError(f"cannot read {os.fspath(path)!r}: {ex}", field="config") from ex
    except configparser.Error as ex:
        raise ConfigError(f"malformed INI: {ex}", field="config") from ex

    values: dict[str, Any] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", field=section)
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key in [{section}]", field=key)
            values[key] = _convert(section, key, raw)

    return values


def _convert(section: str, key: str, raw: Any) -> Any:
    try:
        return SCHEMA[section][key](raw)
    except (TypeError, ValueError, KeyError) as ex:
        raise ConfigError(f"invalid value {raw!r}: {ex}", field=key) from None


def parse_config(path: Optional[PathLike] = None, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """
    Build a validated ExperimentConfig. Values come from the overrides (command-line flags) if given, else the INI file, else the defaults.
    loc_lr defaults to 4 * lr when neither source sets it.
    """
    file_values = {} if path is None else read_ini(path)
    flag_values = {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in KEY_SECTIONS:
            raise ConfigError("unknown option", field=key)
        flag_values[key] = _convert(KEY_SECTIONS[key], key, value)

    def pick(key: str, default: Any = None) -> Any:
        return Maybe(flag_values.get(key)).else_(Maybe(file_values.get(key)).else_(default))

    defaults, options_defaults, data_defaults = HyperParams(), RuntimeOptions(), DatasetSpec(kind=ModelKind.LOGISTIC_REGRESSION)
    model = ModelKind(pick("kind", ModelKind.LOGISTIC_REGRESSION))
    lr = pick("lr", defaults.lr)

    hp = HyperParams(
        lr=lr, loc_lr=pick("loc_lr", 4.0 * lr), alpha=pick("alpha", defaults.alpha), beta=pick("beta", defaults.beta), wd=pick("wd", defaults.wd),
        momentum=pick("momentum", defaults.momentum), k=pick("k", defaults.k), wp=pick("wp", defaults.wp),
        batch_size=pick("batch_size", defaults.batch_size), workers=pick("workers", defaults.workers),
    )
    options = RuntimeOptions(
        strategy=pick("strategy", options_defaults.strategy), local_optimizer=pick("local_optimizer", options_defaults.local_optimizer),
        servers=pick("servers", options_defaults.servers), devices=pick("devices", options_defaults.devices),
        deterministic=pick("deterministic", options_defaults.deterministic), transport=pick("transport", options_defaults.transport),
        latency=pick("latency", options_defaults.latency), bandwidth=pick("bandwidth", options_defaults.bandwidth),
        pull_timeout=pick("pull_timeout", options_defaults.pull_timeout), pull_attempts=pick("pull_attempts", options_defaults.pull_attempts),
        asgd_momentum=pick("asgd_momentum", options_defaults.asgd_momentum),
    )
    data = DatasetSpec(kind=model, n_samples=pick("n_samples", data_defaults.n_samples), dim=pick("dim", data_defaults.dim), noise=pick("noise", data_defaults.noise))

    profile_path = pick("profile")
    training = TrainingConfig(
        model=model, data=data, hp=hp, options=options, iterations=pick("iterations", TrainingConfig.iterations),
        eval_interval=pick("eval_interval", TrainingConfig.eval_interval), eval_fraction=pick("eval_fraction", TrainingConfig.eval_fraction),
        hidden=pick("hidden", TrainingConfig.hidden), seed=pick("seed", TrainingConfig.seed),
        profile=None if profile_path is None else TimingProfile.load(profile_path),
    )
    training.validate()

    out = pick("out", ExperimentConfig.out)
    check_output_dir(out)

    config = ExperimentConfig(training=training, out=out, profile_path=profile_path)
    logger.debug("Resolved configuration: %s", config)
    return config
