"""Experiment configuration and its line-oriented ``key=value`` file format.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Tuples are comma separated (``dilation_rates=1,2,4``); ``crop=32x48``.
Unknown keys are an error.  ``dumps`` writes every key in a fixed order, so
``loads(dumps(cfg)) == cfg`` and the config hash is stable.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..discretizer import DiscretizationSpec
from ..errors import ArgumentError, ConfigError
from ..network import AdamHyper, ModelConfig
from ..synthdata import DatasetSpec

LOSS_KINDS = ("ordinal", "mae-regression")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    # model
    base_width: int = 8
    dilation_rates: tuple = (1, 2, 4)
    norm_kind: str = "group"
    groups_per_norm: int = 4
    dropout_rate: float = 0.1
    m_s: int = 6
    # discretisation
    d_min: float = 2.0
    d_max: float = 80.0
    m_d: int = 128
    scheme: str = "exponential-inverse"
    # objective
    lam: float = 10.0
    loss_kind: str = "ordinal"
    # optimiser
    lr: float = 2e-3
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    iterations: int = 2000
    batch_size: int = 4
    # data
    data_seed: int = 1234
    n_train: int = 200
    n_eval: int = 50
    height: int = 40
    width: int = 56
    crop: tuple = (32, 48)
    flip: bool = True
    sparse_pattern: str = "uniform"
    sparse_density: float = 0.3
    # bookkeeping
    eval_every: int = 100
    eval_cap: float = 80.0
    out_dir: str = "runs/default"
    save_checkpoints: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dilation_rates", tuple(int(r) for r in self.dilation_rates))
        object.__setattr__(self, "crop", tuple(int(c) for c in self.crop))
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.iterations < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise ConfigError("iterations >= 0, batch_size >= 1 and eval_every >= 1 required")
        if self.n_train < 1 or self.n_eval < 1:
            raise ConfigError("n_train and n_eval must be >= 1")
        if len(self.crop) != 2 or self.crop[0] > self.height or self.crop[1] > self.width:
            raise ConfigError(f"crop {self.crop} does not fit {self.height}x{self.width}")
        try:
            self.model_config()
            self.discretization()
        except ArgumentError as exc:
            raise ConfigError(str(exc)) from exc

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            input_channels=3, base_width=self.base_width, dilation_rates=self.dilation_rates,
            norm_kind=self.norm_kind, groups_per_norm=self.groups_per_norm,
            dropout_rate=self.dropout_rate, m_d=self.m_d, m_s=self.m_s, seed=self.seed,
            depth_channels=1 if self.loss_kind == "mae-regression" else 0)

    def discretization(self) -> DiscretizationSpec:
        return DiscretizationSpec(self.d_min, self.d_max, self.m_d, self.scheme)

    def adam(self) -> AdamHyper:
        return AdamHyper(lr=self.lr, beta1=self.beta1, beta2=self.beta2, weight_decay=self.weight_decay)

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(n=self.n_train + self.n_eval, seed=self.data_seed, height=self.height,
                           width=self.width, sparse_pattern=self.sparse_pattern,
                           sparse_density=self.sparse_density)

    def replace(self, **changes) -> ExperimentConfig:
        return replace(self, **changes)

    def digest(self) -> str:
        """Hash of every setting except the output location."""
        text = dumps(self.replace(out_dir=""))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps(cfg: ExperimentConfig) -> str:
    return "".join(f"{k}={_format(v)}\n" for k, v in asdict(cfg).items())


def _parse(name: str, default, text: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if name == "crop":
            return tuple(int(x) for x in text.lower().replace("x", ",").split(","))
        if isinstance(default, tuple):
            return tuple(int(x) for x in text.split(",") if x.strip())
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def loads(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    defaults = {f.name: getattr(base, f.name) for f in fields(ExperimentConfig)}
    values = dict(defaults)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse(key, defaults[key], val)
    return ExperimentConfig(**values)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def save(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
