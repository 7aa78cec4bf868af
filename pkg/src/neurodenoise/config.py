"""Model/training configuration, JSON serialization and schema validation."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from .losses import LossWeights
from .spectral import StftConfig
from .subband import PartitionScheme, make_partition


class ConfigError(ValueError):
    pass


@dataclass
class PartitionConfig:
    cutoffs: list = field(default_factory=lambda: [32, 128])
    groupings: list = field(default_factory=lambda: [8, 32, 64])
    # d_k past frames per partition; d_k + 1 taps ("5 / 3 / 1" taps by default)
    filter_orders: list = field(default_factory=lambda: [4, 2, 0])
    context: int = 15


@dataclass
class ModelConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    fullband_layers: list = field(default_factory=lambda: [384, 384])
    subband_layers: list = field(default_factory=lambda: [[256], [256], [256]])
    neuron_kind: str = "gsn"
    theta: float = 1.0
    lif_decay: float = 0.5
    alif_beta: float = 1.8
    alif_rho: float = math.exp(-1.0 / 200.0)
    plif_init: float = 0.0
    readout_decay: float = 0.2
    # sub-band readouts start at the pass-through tap with weights shrunk by this factor
    readout_weight_scale: float = 0.1
    normalization: str = "ema"   # "ema" (causal) or "utterance"
    input_transform: str = "linear"   # or "log1p" of the normalized magnitude
    norm_ema: float = 0.98
    loss: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.stft, dict):
            self.stft = StftConfig(**self.stft)
        if isinstance(self.partition, dict):
            self.partition = PartitionConfig(**self.partition)
        if isinstance(self.loss, dict):
            self.loss = LossWeights(**self.loss)
        self.fullband_layers = [int(w) for w in self.fullband_layers]
        self.subband_layers = [[int(w) for w in ws] for ws in self.subband_layers]
        if not self.fullband_layers:
            raise ConfigError("full-band model needs at least one layer")
        if len(self.subband_layers) != len(self.partition.groupings):
            raise ConfigError("need one sub-band layer list per partition")
        if self.neuron_kind not in ("gsn", "lif", "plif", "alif"):
            raise ConfigError(f"unknown neuron kind {self.neuron_kind!r}")
        if self.input_transform not in ("linear", "log1p"):
            raise ConfigError(f"unknown input transform {self.input_transform!r}")
        if self.normalization not in ("ema", "utterance"):
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if self.theta <= 0:
            raise ConfigError("threshold must be positive")
        self.scheme  # validates the partition

    @property
    def F(self) -> int:
        return self.stft.n_bins

    @property
    def scheme(self) -> PartitionScheme:
        p = self.partition
        try:
            return make_partition(p.cutoffs, p.groupings, p.filter_orders, p.context, self.F)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def neuron_kwargs(self) -> dict:
        return dict(theta=self.theta, lif_decay=self.lif_decay, alif_beta=self.alif_beta,
                    alif_rho=self.alif_rho, plif_init=self.plif_init)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        validate(d, MODEL_SCHEMA)
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # presets ---------------------------------------------------------------

    @classmethod
    def desk(cls, **kw) -> "ModelConfig":
        """Reduced widths for laptop-scale training runs.

        The lower threshold keeps the narrower layers firing at a useful rate.
        """
        base = dict(fullband_layers=[128], subband_layers=[[48], [48], [48]], theta=0.5)
        base.update(kw)
        return cls(**base)

    @classmethod
    def tiny(cls, **kw) -> "ModelConfig":
        """A few neurons on a 16-bin spectrum, for gradient checking."""
        base = dict(
            stft=StftConfig(window_len=32, hop_len=8, fft_size=32),
            partition=PartitionConfig(cutoffs=[4, 8], groupings=[2, 4, 8],
                                      filter_orders=[2, 1, 0], context=2),
            fullband_layers=[6, 6],
            subband_layers=[[5], [5], [5]],
        )
        base.update(kw)
        return cls(**base)


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    grad_clip_norm: float = 10.0
    batch_size: int = 4
    max_epochs: int = 10
    steps_per_epoch: int = 50
    segment_s: float = 1.0       # truncated-BPTT crop length; 0 = whole clip
    seed: int = 0
    mode: str = "hard"
    time_budget_s: float = 0.0   # 0 = unlimited
    crop_rms_dbfs: float | None = None   # rescale every training crop to this level
    lr_schedule: str = "constant"        # or "cosine": decay to 0 over max_epochs * steps_per_epoch

    def __post_init__(self):
        if min(self.learning_rate, self.grad_clip_norm) <= 0 or self.batch_size < 1:
            raise ConfigError("learning rate, clip norm and batch size must be positive")
        if self.mode not in ("hard", "relaxed"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown learning-rate schedule {self.lr_schedule!r}")

    @classmethod
    def desk(cls, **kw) -> "TrainingConfig":
        """1600 BPTT steps with cosine decay, under eight minutes for the desk model on one core."""
        base = dict(learning_rate=3e-3, lr_schedule="cosine", steps_per_epoch=100, max_epochs=16,
                    crop_rms_dbfs=-25.0, time_budget_s=600.0)
        base.update(kw)
        return cls(**base)


_num = {"type": "number"}
_int = {"type": "integer"}
_int_list = {"type": "array", "items": _int}

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "neurodenoise model config",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "stft": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"window_len": _int, "hop_len": _int, "fft_size": _int,
                           "window": {"enum": ["hann"]}},
        },
        "partition": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"cutoffs": _int_list, "groupings": _int_list,
                           "filter_orders": _int_list, "context": _int},
        },
        "fullband_layers": {**_int_list, "minItems": 1},
        "subband_layers": {"type": "array", "items": _int_list},
        "neuron_kind": {"enum": ["gsn", "lif", "plif", "alif"]},
        "theta": {"type": "number", "exclusiveMinimum": 0},
        "lif_decay": _num, "alif_beta": _num, "alif_rho": _num, "plif_init": _num,
        "readout_decay": _num, "readout_weight_scale": {"type": "number", "minimum": 0},
        "normalization": {"enum": ["ema", "utterance"]},
        "input_transform": {"enum": ["linear", "log1p"]},
        "norm_ema": _num,
        "loss": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"alpha": _num, "gamma1": _num, "gamma2": _num,
                           "synops_weight": _num, "si_sdr_cap_db": _num},
        },
    },
}

TRAINING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "learning_rate": _num, "weight_decay": _num, "grad_clip_norm": _num,
        "batch_size": _int, "max_epochs": _int, "steps_per_epoch": _int,
        "segment_s": _num, "seed": _int, "mode": {"enum": ["hard", "relaxed"]},
        "time_budget_s": _num, "crop_rms_dbfs": {"type": ["number", "null"]},
        "lr_schedule": {"enum": ["constant", "cosine"]},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {"model": MODEL_SCHEMA, "training": TRAINING_SCHEMA},
}


def validate(doc: dict, schema: dict) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config invalid at {list(exc.absolute_path)}: {exc.message}") from exc


def load_config(path: str | Path) -> tuple[ModelConfig, TrainingConfig]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    validate(doc, CONFIG_SCHEMA)
    try:
        return ModelConfig(**doc["model"]), TrainingConfig(**doc.get("training", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(model: ModelConfig, training: TrainingConfig | None = None) -> str:
    doc = {"model": model.to_dict()}
    if training is not None:
        doc["training"] = asdict(training)
    return json.dumps(doc, indent=2, sort_keys=True)
