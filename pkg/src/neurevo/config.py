"""Run configuration: flat key=value sections with hard errors on unknown keys.

Silent typos corrupt experiments, so any section or key outside the schema is
rejected outright. Parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .evaluate import EvalSettings
from .evolution import DEFAULT_OPERATOR_RATES, EvolutionConfig


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    # [run]
    output_dir: str = "run_output"
    seed_file: str = "builtin"
    workers: int = 1
    timeout_seconds: float = 120.0
    stub_dir: str = "auto"
    # [dataset]
    dataset_spec: str = "blobs:n=300,seed=7"
    val_fraction: float = 0.1
    # [evolution]
    pop_size: int = 64
    n_select: int | None = None
    generations: int = 10
    depth_limit: int = 17
    rng_seed: int = 1
    # [training]
    patience: int = 5
    max_epochs: int = 30
    sentinel_params: float = 10_000_000.0
    train_seed: int | None = None
    # [operators]
    operator_rates: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_OPERATOR_RATES))

    def evolution_config(self) -> EvolutionConfig:
        return EvolutionConfig(pop_size=self.pop_size, n_select=self.n_select,
                               generations=self.generations,
                               operator_rates=dict(self.operator_rates),
                               depth_limit=self.depth_limit, rng_seed=self.rng_seed)

    def eval_settings(self) -> EvalSettings:
        return EvalSettings(patience=self.patience, max_epochs=self.max_epochs,
                            sentinel_params=self.sentinel_params)

    @property
    def effective_train_seed(self) -> int:
        return self.rng_seed if self.train_seed is None else self.train_seed


_SCHEMA = {
    "run": ("output_dir", "seed_file", "workers", "timeout_seconds", "stub_dir"),
    "dataset": ("spec", "val_fraction"),
    "evolution": ("pop_size", "n_select", "generations", "depth_limit", "rng_seed"),
    "training": ("patience", "max_epochs", "sentinel_params", "train_seed"),
    "operators": tuple(DEFAULT_OPERATOR_RATES),
}


def _parse_optional_int(value: str, where: str) -> int | None:
    if value.strip().lower() == "auto":
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer or 'auto', got {value!r}") from None


def _get(parser, section, key, cast, default, where):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (ValueError, TypeError):
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def parse_config_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    cfg = RunConfig()
    cfg.output_dir = _get(parser, "run", "output_dir", str, cfg.output_dir, "run.output_dir")
    cfg.seed_file = _get(parser, "run", "seed_file", str, cfg.seed_file, "run.seed_file")
    cfg.workers = _get(parser, "run", "workers", int, cfg.workers, "run.workers")
    cfg.timeout_seconds = _get(parser, "run", "timeout_seconds", float,
                               cfg.timeout_seconds, "run.timeout_seconds")
    cfg.stub_dir = _get(parser, "run", "stub_dir", str, cfg.stub_dir, "run.stub_dir")
    cfg.dataset_spec = _get(parser, "dataset", "spec", str, cfg.dataset_spec,
                            "dataset.spec")
    cfg.val_fraction = _get(parser, "dataset", "val_fraction", float,
                            cfg.val_fraction, "dataset.val_fraction")
    cfg.pop_size = _get(parser, "evolution", "pop_size", int, cfg.pop_size,
                        "evolution.pop_size")
    if parser.has_option("evolution", "n_select"):
        cfg.n_select = _parse_optional_int(parser.get("evolution", "n_select"),
                                           "evolution.n_select")
    cfg.generations = _get(parser, "evolution", "generations", int,
                           cfg.generations, "evolution.generations")
    cfg.depth_limit = _get(parser, "evolution", "depth_limit", int,
                           cfg.depth_limit, "evolution.depth_limit")
    cfg.rng_seed = _get(parser, "evolution", "rng_seed", int, cfg.rng_seed,
                        "evolution.rng_seed")
    cfg.patience = _get(parser, "training", "patience", int, cfg.patience,
                        "training.patience")
    cfg.max_epochs = _get(parser, "training", "max_epochs", int, cfg.max_epochs,
                          "training.max_epochs")
    cfg.sentinel_params = _get(parser, "training", "sentinel_params", float,
                               cfg.sentinel_params, "training.sentinel_params")
    if parser.has_option("training", "train_seed"):
        cfg.train_seed = _parse_optional_int(parser.get("training", "train_seed"),
                                             "training.train_seed")
    if parser.has_section("operators"):
        for key in parser.options("operators"):
            cfg.operator_rates[key] = _get(parser, "operators", key, float, 0.0,
                                           f"operators.{key}")
            if not 0.0 <= cfg.operator_rates[key] <= 1.0:
                raise ConfigError(f"operators.{key}: rate must lie in [0, 1]")
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser["run"] = {
        "output_dir": cfg.output_dir,
        "seed_file": cfg.seed_file,
        "workers": str(cfg.workers),
        "timeout_seconds": repr(cfg.timeout_seconds),
        "stub_dir": cfg.stub_dir,
    }
    parser["dataset"] = {
        "spec": cfg.dataset_spec,
        "val_fraction": repr(cfg.val_fraction),
    }
    parser["evolution"] = {
        "pop_size": str(cfg.pop_size),
        "n_select": "auto" if cfg.n_select is None else str(cfg.n_select),
        "generations": str(cfg.generations),
        "depth_limit": str(cfg.depth_limit),
        "rng_seed": str(cfg.rng_seed),
    }
    parser["training"] = {
        "patience": str(cfg.patience),
        "max_epochs": str(cfg.max_epochs),
        "sentinel_params": repr(cfg.sentinel_params),
        "train_seed": "auto" if cfg.train_seed is None else str(cfg.train_seed),
    }
    parser["operators"] = {name: repr(rate)
                           for name, rate in sorted(cfg.operator_rates.items())}
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
