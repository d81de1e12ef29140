"""Run configuration: one structured file with world, split, model, training and eval sections."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .data import SplitSpec
from .exceptions import ConfigError
from .nn.checkpoint import config_digest
from .synth import WorldConfig

MODEL_KEYS = (
    "d_model", "screen_encoder_layers", "sequence_encoder_layers", "pointer_layers", "heads", "ffn_mult",
    "history_size", "dropout", "max_elements", "max_tokens", "context_width", "max_bucket", "min_count",
    "use_text", "use_type", "use_position", "use_time", "use_app", "use_screen_encoder",
)
TRAINING_KEYS = (
    "batch_size", "segment_size", "base_lr", "warmup", "decay", "decay_steps", "max_steps",
    "eval_every", "patience", "valid_max_events", "grad_clip",
)
BASELINES = ("recency", "frequency", "global_frequency", "lr", "nb")


@dataclass
class EvalConfig:
    baselines: tuple[str, ...] = BASELINES
    ablations: tuple[str, ...] = ()
    max_events: int | None = None
    lr_max_train_events: int = 40_000

    def __post_init__(self):
        self.baselines = tuple(self.baselines)
        self.ablations = tuple(self.ablations)
        unknown = set(self.baselines) - set(BASELINES)
        if unknown:
            raise ConfigError(f"unknown baselines: {sorted(unknown)}")


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 1
    world: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, keys in (("model", MODEL_KEYS), ("training", TRAINING_KEYS)):
            unknown = set(getattr(self, name)) - set(keys)
            if unknown:
                raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
        unknown = set(self.world) - set(WorldConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown world keys: {sorted(unknown)}")
        unknown = set(self.split) - {"mode", "fractions"}
        if unknown:
            raise ConfigError(f"unknown split keys: {sorted(unknown)}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        # Fail early on invalid sections.
        self.world_config()
        self.split_spec()
        self.eval_config()

    # The single seed fans out to every random component.
    def world_config(self) -> WorldConfig:
        return WorldConfig.from_dict({**self.world, "seed": self.seed})

    def split_spec(self) -> SplitSpec:
        d = dict(self.split)
        if "fractions" in d:
            d["fractions"] = tuple(d["fractions"])
        return SplitSpec(**d, seed=self.seed)

    def estimator_params(self) -> dict:
        return {**self.model, **self.training, "seed": self.seed, "threads": self.threads}

    def eval_config(self) -> EvalConfig:
        unknown = set(self.eval) - {f.name for f in fields(EvalConfig)}
        if unknown:
            raise ConfigError(f"unknown eval keys: {sorted(unknown)}")
        return EvalConfig(**self.eval)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def digest(self) -> str:
        return config_digest(self.to_dict())

    def with_overrides(self, seed: int | None = None, threads: int | None = None) -> "RunConfig":
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed))
        if threads is not None:
            out = replace(out, threads=int(threads))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text("utf-8")
        if path.suffix in (".yaml", ".yml"):
            import yaml

            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text) if text.strip() else {}
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8")
