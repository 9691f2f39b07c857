"""TOML run configuration: sections, defaults and validation with key paths."""

import copy
import math
import sys
from dataclasses import asdict, dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .objectives import GRID_METHODS
from .optimize import OptimConfig
from .problem import DESCRIPTOR_FACTORS, PROBLEMS, make_problem
from .records import config_hash
from .scalarize import SCALARIZATIONS, STCH_FORMS
from .validation import ConfigurationError

OUTPUT_FORMATS = ("jsonl", "csv", "json")


@dataclass
class ProblemSection:
    benchmark: str = "lp"
    n: int = 1024
    d: int = 4
    descriptor_factor: str = "mean"


@dataclass
class ObjectivesSection:
    M: int = 10_000
    method: str = "sobol"
    seed: int = 0
    gamma_sq: float = None


@dataclass
class ScalarizationSection:
    kind: str = "stch-set"
    mu: float = 0.01
    mu_inner: float = None
    epsilon_ref: float = 0.1
    ref_refresh_interval: int = 1
    eq13_form: str = "appendix-d"
    lambda_mode: str = "uniform"


@dataclass
class OptimizerSection:
    K: int = 1024
    iterations: int = 1000
    batch_size: int = 64
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0
    solution_batch_size: int = None


@dataclass
class MetricsSection:
    cells: int = 512
    cvt_samples: int = None
    archive_seed: int = 0
    sigma_soft: float = None
    checkpoint_interval: int = 100


@dataclass
class OutputSection:
    directory: str = "runs/default"
    formats: list = field(default_factory=lambda: list(OUTPUT_FORMATS))


SECTIONS = {
    "problem": ProblemSection,
    "objectives": ObjectivesSection,
    "scalarization": ScalarizationSection,
    "optimizer": OptimizerSection,
    "metrics": MetricsSection,
    "output": OutputSection,
}

_INT_KEYS = {"n", "d", "M", "seed", "ref_refresh_interval", "K", "iterations", "batch_size",
             "solution_batch_size", "cells", "cvt_samples", "archive_seed",
             "checkpoint_interval"}
_FLOAT_KEYS = {"gamma_sq", "mu", "mu_inner", "epsilon_ref", "lr", "beta1", "beta2",
               "eps_adam", "sigma_soft"}
_CHOICES = {
    "benchmark": tuple(PROBLEMS),
    "descriptor_factor": DESCRIPTOR_FACTORS,
    "method": GRID_METHODS,
    "kind": SCALARIZATIONS,
    "eq13_form": STCH_FORMS,
    "lambda_mode": ("uniform",),
}


@dataclass
class RunConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    objectives: ObjectivesSection = field(default_factory=ObjectivesSection)
    scalarization: ScalarizationSection = field(default_factory=ScalarizationSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self):
        return asdict(self)

    def hash(self):
        """Hash of everything that affects results (the output section is excluded)."""
        data = self.to_dict()
        data.pop("output")
        return config_hash(data)

    def optim_config(self):
        s, o, g = self.scalarization, self.optimizer, self.objectives
        return OptimConfig(
            scalarization=s.kind, K=o.K, iterations=o.iterations, batch_size=o.batch_size,
            lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps_adam=o.eps_adam, mu=s.mu,
            mu_inner=s.mu_inner, gamma_sq=g.gamma_sq, epsilon_ref=s.epsilon_ref,
            ref_refresh_interval=s.ref_refresh_interval, eq13_form=s.eq13_form,
            lambda_mode=s.lambda_mode, seed=o.seed, grid_M=g.M, grid_method=g.method,
            grid_seed=g.seed, checkpoint_interval=self.metrics.checkpoint_interval,
            solution_batch_size=o.solution_batch_size)

    def make_problem(self):
        p = self.problem
        return make_problem(p.benchmark, p.n, p.d, p.descriptor_factor)

    def with_value(self, section, key, value):
        cfg = copy.deepcopy(self)
        setattr(getattr(cfg, section), key, value)
        return validate(cfg)


def _check_value(path, key, value):
    if value is None:
        return
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        if value < 0 or (value == 0 and key not in ("iterations", "seed", "archive_seed")):
            raise ConfigurationError(f"{path}: must be positive, got {value}")
    elif key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or not math.isfinite(value):
            raise ConfigurationError(f"{path}: expected a finite number, got {value!r}")
        if key in ("beta1", "beta2"):
            if not 0.0 <= value < 1.0:
                raise ConfigurationError(f"{path}: must lie in [0, 1), got {value}")
        elif value <= 0:
            raise ConfigurationError(f"{path}: must be > 0, got {value}")
    elif key in _CHOICES:
        if value not in _CHOICES[key]:
            raise ConfigurationError(f"{path}: must be one of {list(_CHOICES[key])}, got {value!r}")
    elif key == "directory":
        if not isinstance(value, str) or not value:
            raise ConfigurationError(f"{path}: expected a non-empty path string")
    elif key == "formats":
        if not isinstance(value, list) or any(v not in OUTPUT_FORMATS for v in value):
            raise ConfigurationError(f"{path}: expected a subset of {list(OUTPUT_FORMATS)}")


def validate(cfg):
    """Cross-field checks; raises ConfigurationError naming the offending key path."""
    for name in SECTIONS:
        section = getattr(cfg, name)
        for f in fields(section):
            _check_value(f"{name}.{f.name}", f.name, getattr(section, f.name))
    p = cfg.problem
    if p.d > p.n:
        raise ConfigurationError(f"problem.d: must not exceed problem.n ({p.n}), got {p.d}")
    if p.benchmark == "lp" and p.n % p.d:
        raise ConfigurationError(f"problem.d: must divide problem.n ({p.n}), got {p.d}")
    if cfg.optimizer.batch_size > cfg.objectives.M:
        raise ConfigurationError(
            f"optimizer.batch_size: must not exceed objectives.M ({cfg.objectives.M})")
    sb = cfg.optimizer.solution_batch_size
    if sb is not None and sb > cfg.optimizer.K:
        raise ConfigurationError(f"optimizer.solution_batch_size: must not exceed optimizer.K")
    m = cfg.metrics
    samples = 50 * m.cells if m.cvt_samples is None else m.cvt_samples
    if samples < 10 * m.cells:
        raise ConfigurationError("metrics.cvt_samples: need at least 10 samples per cell")
    if cfg.scalarization.kind == "squad" and p.benchmark != "lp":
        raise ConfigurationError(
            "scalarization.kind: squad needs non-negative quality; the sphere benchmark "
            "has f <= 0")
    cfg.optim_config().validate()
    return cfg


def from_dict(data):
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a table")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown section(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in SECTIONS.items():
        table = data.get(name, {})
        if not isinstance(table, dict):
            raise ConfigurationError(f"{name}: expected a table")
        known = {f.name for f in fields(cls)}
        for key in table:
            if key not in known:
                raise ConfigurationError(f"{name}.{key}: unknown key")
        kwargs[name] = cls(**table)
    return validate(RunConfig(**kwargs))


def load_config(path):
    """Parse and validate a TOML run config."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc
    return from_dict(data)


def dump_toml(cfg):
    """Minimal TOML writer for the flat section layout used here."""
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, value in asdict(getattr(cfg, name)).items():
            if value is None:
                continue
            if isinstance(value, str):
                lines.append(f'{key} = "{value}"')
            elif isinstance(value, list):
                lines.append(f"{key} = [" + ", ".join(f'"{v}"' for v in value) + "]")
            elif isinstance(value, float):
                lines.append(f"{key} = {value!r}")
            else:
                lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
