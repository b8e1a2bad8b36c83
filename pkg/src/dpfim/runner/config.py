"""Experiment configuration: TOML file with nested sections.

Every field has a documented default (``dpfim print-config`` dumps the
effective configuration); unknown keys and type mismatches are rejected
with all errors listed at once.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ..dp_optimizer import DpConfig
from ..errors import ConfigError, MissingInputError
from ..metrics import DEFAULT_LM_THRESHOLDS
from ..mia import STRATEGIES
from ..model import LoraConfig, ModelConfig


@dataclass
class CorpusSection:
    root: str = "corpus"
    extensions: list[str] = field(default_factory=lambda: [".kt"])
    max_bytes: int = 4096
    member_frac: float = 0.5
    nonmember_frac: float = 0.25
    eval_frac: float = 0.1
    min_middle: int = 8
    duplicate_fraction: float = 0.0
    duplicate_copies: int = 1


@dataclass
class ModelSection:
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    context_len: int = 256
    ffn_mult: int = 4


@dataclass
class LoraSection:
    rank: int = 8
    alpha: float = 16.0


@dataclass
class PretrainSection:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 3e-3
    weight_decay: float = 0.0


@dataclass
class TrainSection:
    epochs: int = 20
    learning_rate: float = 2e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_every: int = 0  # steps between resumable snapshots; 0 = final only
    max_steps: int = 0  # hard step cap; 0 = unlimited


@dataclass
class DpSection:
    clip_norm: float = 0.5
    noise_multiplier: float = 0.2746
    lot_size: int = 32
    epsilon_max: float = 30.0  # <= 0 disables budget early stopping
    delta: float = 0.0  # <= 0 resolves to 1 / member-set size


@dataclass
class MetricsSection:
    char_n: int = 6
    word_n: int = 2
    beta: float = 2.0
    lm_thresholds: list[list[float]] = field(
        default_factory=lambda: [list(t) for t in DEFAULT_LM_THRESHOLDS]
    )


@dataclass
class AttackSection:
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    loss_batch: int = 64


@dataclass
class EvaluateSection:
    max_new: int = 64


@dataclass
class OutputSection:
    dir: str = "runs/default"


@dataclass
class SweepSection:
    ranks: list[int] = field(default_factory=lambda: [8])
    epsilon_budgets: list[float] = field(default_factory=lambda: [30.0])


@dataclass
class ExperimentConfig:
    seed: int = 1234
    corpus: CorpusSection = field(default_factory=CorpusSection)
    model: ModelSection = field(default_factory=ModelSection)
    lora: LoraSection = field(default_factory=LoraSection)
    pretrain: PretrainSection = field(default_factory=PretrainSection)
    train: TrainSection = field(default_factory=TrainSection)
    dp: DpSection = field(default_factory=DpSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    attack: AttackSection = field(default_factory=AttackSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    output: OutputSection = field(default_factory=OutputSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    # ---- derived module configs -------------------------------------

    def model_config(self) -> ModelConfig:
        m = self.model
        return ModelConfig(
            d_model=m.d_model, n_layers=m.n_layers, n_heads=m.n_heads,
            context_len=m.context_len, ffn_mult=m.ffn_mult,
        )

    def lora_config(self) -> LoraConfig:
        return LoraConfig(rank=self.lora.rank, alpha=self.lora.alpha)

    def finetune_dp_config(self) -> DpConfig:
        return DpConfig(
            clip_norm=self.dp.clip_norm,
            noise_multiplier=self.dp.noise_multiplier,
            lot_size=self.dp.lot_size,
            learning_rate=self.train.learning_rate,
            beta1=self.train.beta1,
            beta2=self.train.beta2,
            weight_decay=self.train.weight_decay,
            adam_eps=self.train.adam_eps,
        )

    def pretrain_config(self) -> DpConfig:
        return DpConfig(
            clip_norm=1.0,  # unused by the pre-training loop
            noise_multiplier=0.0,
            lot_size=self.pretrain.batch_size,
            learning_rate=self.pretrain.learning_rate,
            beta1=self.train.beta1,
            beta2=self.train.beta2,
            weight_decay=self.pretrain.weight_decay,
            adam_eps=self.train.adam_eps,
        )

    def lm_thresholds(self) -> tuple[tuple[float, float], ...]:
        return tuple((float(a), float(b)) for a, b in self.metrics.lm_thresholds)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        errors = []
        c = self.corpus
        if any(f < 0 for f in (c.member_frac, c.nonmember_frac, c.eval_frac)):
            errors.append("corpus: split fractions must be non-negative")
        if c.member_frac + c.nonmember_frac + c.eval_frac > 1.0 + 1e-9:
            errors.append(
                f"corpus: split fractions sum to "
                f"{c.member_frac + c.nonmember_frac + c.eval_frac:.3f} > 1"
            )
        if c.duplicate_copies < 1:
            errors.append("corpus: duplicate_copies must be >= 1")
        if not 0.0 <= c.duplicate_fraction <= 1.0:
            errors.append("corpus: duplicate_fraction must be in [0, 1]")
        if c.max_bytes < 1:
            errors.append("corpus: max_bytes must be >= 1")
        try:
            cfg = self.model_config()
            self.lora_config().validate(cfg)
        except ConfigError as exc:
            errors.append(f"model/lora: {exc}")
        try:
            self.finetune_dp_config()
        except ConfigError as exc:
            errors.append(f"dp/train: {exc}")
        for s in self.attack.strategies:
            if s not in STRATEGIES:
                errors.append(f"attack: unknown strategy {s!r} (expected {list(STRATEGIES)})")
        for pair in self.metrics.lm_thresholds:
            if len(pair) != 2:
                errors.append(f"metrics: lm_thresholds entries must be [ratio, value]; got {pair}")
        if self.evaluate.max_new < 0:
            errors.append("evaluate: max_new must be >= 0")
        if self.pretrain.epochs < 0 or self.train.epochs < 0:
            errors.append("pretrain/train: epochs must be >= 0")
        if not self.sweep.ranks or not self.sweep.epsilon_budgets:
            errors.append("sweep: ranks and epsilon_budgets must be non-empty")
        if errors:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))


_SCALARS = (int, float, str, bool)


def _merge_section(obj, data: dict, path: str, errors: list[str]):
    known = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            errors.append(f"unknown key {where!r}")
            continue
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                errors.append(f"{where}: expected a table")
            else:
                _merge_section(current, value, where, errors)
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                errors.append(f"{where}: expected bool, got {type(value).__name__}")
            else:
                setattr(obj, key, value)
        elif isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                errors.append(f"{where}: expected number, got {type(value).__name__}")
            else:
                setattr(obj, key, float(value))
        elif isinstance(current, int):
            if isinstance(value, bool) or not isinstance(value, int):
                errors.append(f"{where}: expected integer, got {type(value).__name__}")
            else:
                setattr(obj, key, value)
        elif isinstance(current, str):
            if not isinstance(value, str):
                errors.append(f"{where}: expected string, got {type(value).__name__}")
            else:
                setattr(obj, key, value)
        elif isinstance(current, list):
            if not isinstance(value, list):
                errors.append(f"{where}: expected array, got {type(value).__name__}")
            else:
                setattr(obj, key, value)
        else:
            errors.append(f"{where}: unsupported config field type")


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, optionally merged with a TOML file and CLI overrides.

    All problems (unknown keys, type mismatches, invalid values) are
    reported together in one ConfigError.
    """
    cfg = ExperimentConfig()
    errors: list[str] = []
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise MissingInputError(f"config file not found: {path}")
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
        _merge_section(cfg, data, "", errors)
    for key, value in (overrides or {}).items():
        parts = key.split(".")
        target = cfg
        for part in parts[:-1]:
            target = getattr(target, part)
        setattr(target, parts[-1], value)
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    cfg.validate()
    return cfg


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot render {type(value)} as TOML")


def dump_toml(cfg: ExperimentConfig) -> str:
    """Effective configuration as TOML (used by print-config)."""
    lines = []
    top = dataclasses.asdict(cfg)
    for key, value in top.items():
        if not isinstance(value, dict):
            lines.append(f"{key} = {_toml_value(value)}")
    for key, value in top.items():
        if isinstance(value, dict):
            lines.append("")
            lines.append(f"[{key}]")
            for k, v in value.items():
                lines.append(f"{k} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"
