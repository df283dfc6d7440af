"""Schemas for the analysis, synthesis, dataset and denoiser commands."""
from dataclasses import asdict, dataclass
from typing import Dict, Optional

from marshmallow import Schema, ValidationError, fields, post_load, validates_schema


@dataclass(frozen=True)
class AnalyzeConfig:
    n_bins: int = 32
    bin_width: float = 8.0
    min_count: int = 100
    max_distance: int = 3

    def to_dict(self) -> Dict:
        return asdict(self)


class AnalyzeConfigSchema(Schema):
    """Schema for the `analyze` command."""

    n_bins = fields.Int(load_default=AnalyzeConfig.n_bins, validate=lambda x: x >= 2)
    bin_width = fields.Float(load_default=AnalyzeConfig.bin_width, validate=lambda x: x > 0)
    min_count = fields.Int(load_default=AnalyzeConfig.min_count, validate=lambda x: x >= 1)
    max_distance = fields.Int(load_default=AnalyzeConfig.max_distance, validate=lambda x: x >= 1)

    @post_load
    def make_config(self, data, **kwargs) -> AnalyzeConfig:
        return AnalyzeConfig(**data)


@dataclass(frozen=True)
class SynthesizeConfig:
    seed: int = 0
    temperature: float = 1.0
    device: str = "cpu"

    def to_dict(self) -> Dict:
        return asdict(self)


class SynthesizeConfigSchema(Schema):
    """Schema for the `synthesize` command."""

    seed = fields.Int(load_default=SynthesizeConfig.seed, validate=lambda x: x >= 0)
    temperature = fields.Float(load_default=SynthesizeConfig.temperature, validate=lambda x: x >= 0)
    device = fields.Str(load_default=SynthesizeConfig.device)

    @post_load
    def make_config(self, data, **kwargs) -> SynthesizeConfig:
        return SynthesizeConfig(**data)


@dataclass(frozen=True)
class MakeDatasetConfig:
    policy: str = "uniform"
    camera: Optional[str] = None
    iso: Optional[int] = None
    seed: int = 0
    device: str = "cpu"

    def to_dict(self) -> Dict:
        return asdict(self)


class MakeDatasetConfigSchema(Schema):
    """Schema for the `make-dataset` command."""

    policy = fields.Str(
        load_default=MakeDatasetConfig.policy, validate=lambda x: x in ("fixed", "uniform")
    )
    camera = fields.Str(load_default=None, allow_none=True)
    iso = fields.Int(load_default=None, allow_none=True)
    seed = fields.Int(load_default=MakeDatasetConfig.seed, validate=lambda x: x >= 0)
    device = fields.Str(load_default=MakeDatasetConfig.device)

    @validates_schema
    def validate_policy(self, data, **kwargs):
        """A fixed policy names both the camera and the ISO level."""
        missing = data.get("camera") is None or data.get("iso") is None
        if data.get("policy") == "fixed" and missing:
            raise ValidationError("Fixed policy requires camera and iso", "policy")

    @post_load
    def make_config(self, data, **kwargs) -> MakeDatasetConfig:
        return MakeDatasetConfig(**data)


@dataclass(frozen=True)
class DenoiserConfig:
    depth: int = 9
    channels: int = 48
    residual: bool = True
    epochs: int = 10
    lr_initial: float = 1e-3
    lr_halving_period: int = 10
    batch_size: int = 16
    patch_size: int = 96
    patch_stride: int = 48
    val_fraction: float = 0.2
    max_steps: Optional[int] = None
    seed: int = 0
    device: str = "cpu"

    def to_dict(self) -> Dict:
        return asdict(self)


class DenoiserConfigSchema(Schema):
    """Schema for the `train-denoiser` command."""

    depth = fields.Int(load_default=DenoiserConfig.depth, validate=lambda x: x >= 2)
    channels = fields.Int(load_default=DenoiserConfig.channels, validate=lambda x: x >= 1)
    residual = fields.Bool(load_default=DenoiserConfig.residual)
    epochs = fields.Int(load_default=DenoiserConfig.epochs, validate=lambda x: x >= 1)
    lr_initial = fields.Float(load_default=DenoiserConfig.lr_initial, validate=lambda x: x > 0)
    lr_halving_period = fields.Int(
        load_default=DenoiserConfig.lr_halving_period, validate=lambda x: x >= 1
    )
    batch_size = fields.Int(load_default=DenoiserConfig.batch_size, validate=lambda x: x >= 1)
    patch_size = fields.Int(load_default=DenoiserConfig.patch_size, validate=lambda x: x >= 8)
    patch_stride = fields.Int(load_default=DenoiserConfig.patch_stride, validate=lambda x: x >= 1)
    val_fraction = fields.Float(
        load_default=DenoiserConfig.val_fraction, validate=lambda x: 0 <= x < 1
    )
    max_steps = fields.Int(load_default=None, allow_none=True, validate=lambda x: x >= 1)
    seed = fields.Int(load_default=DenoiserConfig.seed, validate=lambda x: x >= 0)
    device = fields.Str(load_default=DenoiserConfig.device)

    @post_load
    def make_config(self, data, **kwargs) -> DenoiserConfig:
        return DenoiserConfig(**data)


@dataclass(frozen=True)
class EvaluateConfig:
    seed: int = 0
    device: str = "cpu"
    temperature: float = 1.0
    baselines: bool = True

    def to_dict(self) -> Dict:
        return asdict(self)


class EvaluateConfigSchema(Schema):
    """Schema for the `evaluate` command."""

    seed = fields.Int(load_default=EvaluateConfig.seed, validate=lambda x: x >= 0)
    device = fields.Str(load_default=EvaluateConfig.device)
    temperature = fields.Float(load_default=EvaluateConfig.temperature, validate=lambda x: x >= 0)
    baselines = fields.Bool(load_default=EvaluateConfig.baselines)

    @post_load
    def make_config(self, data, **kwargs) -> EvaluateConfig:
        return EvaluateConfig(**data)
