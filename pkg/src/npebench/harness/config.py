"""Run configuration: dataclasses mirrored one-to-one by the TOML files."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict

from ..diffusion import EdmConfig
from ..errors import ConfigError
from ..flow import FlowConfig
from ..sim.base import Problem, get_problem

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DECODERS = ("cdiff", "cnf")
SUMMARIES = ("none", "deepset", "bilstm")


@dataclass(frozen=True)
class NetConfig:
    denoiser_width: int = 256
    denoiser_layers: int = 4
    embed_dim: int = 32
    summary_dim: int = 256
    deepset_width: int = 128
    bilstm_hidden: int = 64
    bilstm_lift: int = 64
    bilstm_layers: int = 1


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_schedule: str = "constant"  # constant | cosine
    lr_final: float = 1e-5
    ema_decay: float = 0.0  # 0 disables parameter averaging

    def lr_at(self, batch: int, total: int) -> float:
        if self.lr_schedule == "constant":
            return self.lr
        import math

        frac = min(max(batch / max(total, 1), 0.0), 1.0)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (1.0 + math.cos(math.pi * frac))


@dataclass(frozen=True)
class RunConfig:
    problem: str
    decoder: str = "cdiff"
    summary: str | None = None  # resolved from the problem's data kind if unset
    seed: int = 0
    training_batches: int = 5000
    batch_size: int = 128
    eval_every: int = 1000
    C: int = 1000
    L: int = 100
    repeats: int = 3
    output_dir: str = "runs/out"
    n_min: int | None = None
    n_max: int | None = None
    hyperparams: Dict[str, Any] = field(default_factory=dict)
    edm: EdmConfig = field(default_factory=EdmConfig)
    nets: NetConfig = field(default_factory=NetConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.decoder not in DECODERS:
            raise ConfigError(f"decoder must be one of {DECODERS}")
        if self.summary is not None and self.summary not in SUMMARIES:
            raise ConfigError(f"summary must be one of {SUMMARIES}")
        for name in ("training_batches", "batch_size", "eval_every", "C", "L", "repeats"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    def n_range(self) -> tuple[int, int] | None:
        if self.n_min is None and self.n_max is None:
            return None
        if self.n_min is None or self.n_max is None:
            raise ConfigError("set both n_min and n_max or neither")
        return (self.n_min, self.n_max)

    def build_problem(self) -> Problem:
        return get_problem(self.problem, hyperparams=self.hyperparams or None,
                           n_range=self.n_range())

    def resolved_summary(self, problem: Problem) -> str:
        if self.summary is not None:
            kind = self.summary
        elif problem.spec.data_kind == "single":
            kind = "none"
        elif problem.spec.data_kind == "sequential":
            kind = "bilstm"
        else:
            kind = "deepset"
        if kind == "none" and problem.spec.data_kind != "single":
            raise ConfigError(
                "summary 'none' is only valid for single-observation problems")
        return kind


def _dataclass_from(cls, data: Dict[str, Any], where: str):
    field_names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - field_names
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [{where}] section: {exc}") from exc


def config_from_dict(raw: Dict[str, Any]) -> RunConfig:
    raw = dict(raw)
    problem_tbl = raw.pop("problem", None)
    if not isinstance(problem_tbl, dict) or "name" not in problem_tbl:
        raise ConfigError("config needs a [problem] table with a 'name' key")
    problem_tbl = dict(problem_tbl)
    top: Dict[str, Any] = {
        "problem": problem_tbl.pop("name"),
        "hyperparams": dict(problem_tbl.pop("hyperparams", {})),
    }
    for key in ("n_min", "n_max"):
        if key in problem_tbl:
            top[key] = problem_tbl.pop(key)
    if problem_tbl:
        raise ConfigError(f"unknown keys in [problem]: {sorted(problem_tbl)}")
    for section, cls in (("edm", EdmConfig), ("nets", NetConfig),
                         ("flow", FlowConfig), ("optimizer", OptimizerConfig)):
        if section in raw:
            top[section] = _dataclass_from(cls, raw.pop(section), section)
    allowed = {f.name for f in dataclasses.fields(RunConfig)} - {
        "problem", "hyperparams", "edm", "nets", "flow", "optimizer", "n_min", "n_max"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    top.update(raw)
    try:
        return RunConfig(**top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    return config_from_dict(raw)


def config_to_dict(cfg: RunConfig) -> Dict[str, Any]:
    """JSON-serializable snapshot that round-trips through config_from_dict."""
    out: Dict[str, Any] = {
        "problem": {"name": cfg.problem, "hyperparams": dict(cfg.hyperparams)},
        "decoder": cfg.decoder,
        "seed": cfg.seed,
        "training_batches": cfg.training_batches,
        "batch_size": cfg.batch_size,
        "eval_every": cfg.eval_every,
        "C": cfg.C,
        "L": cfg.L,
        "repeats": cfg.repeats,
        "output_dir": cfg.output_dir,
        "edm": dataclasses.asdict(cfg.edm),
        "nets": dataclasses.asdict(cfg.nets),
        "flow": dataclasses.asdict(cfg.flow),
        "optimizer": dataclasses.asdict(cfg.optimizer),
    }
    if cfg.summary is not None:
        out["summary"] = cfg.summary
    if cfg.n_min is not None:
        out["problem"]["n_min"] = cfg.n_min
        out["problem"]["n_max"] = cfg.n_max
    return out
