"""Training configuration schema."""
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

from marshmallow import Schema, ValidationError, fields, post_load, validates_schema


class Strategy(str, Enum):
    """How the flow and the GAN are optimized."""

    SIMULTANEOUS = "simultaneous"
    TWO_STAGE = "two_stage"
    JOINT = "joint"


@dataclass(frozen=True)
class TrainConfig:
    """Resolved training configuration."""

    strategy: Strategy = Strategy.SIMULTANEOUS
    epochs: int = 40
    lr_initial: float = 1e-4
    lr_halving_period: int = 10
    batch_size: int = 16
    lam: float = 0.5
    alpha: float = 10.0
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    critic_steps: int = 1
    enable_condlin: bool = True
    enable_sdl: bool = True
    enable_sal: bool = True
    enable_gan: bool = True
    flow_layers: int = 6
    flow_hidden: int = 32
    embed_channels: int = 8
    encoder_blocks: int = 2
    unet_depth: int = 3
    unet_channels: int = 32
    critic_stages: int = 4
    critic_channels: int = 32
    patch_size: int = 96
    patch_stride: int = 48
    val_fraction: float = 0.2
    max_steps: Optional[int] = None
    camera_filter: Optional[str] = None
    seed: int = 0
    device: str = "cpu"
    num_workers: int = 0

    @property
    def flow_enabled(self) -> bool:
        return self.enable_condlin or self.enable_sdl or self.enable_sal

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["strategy"] = self.strategy.value
        data["adam_betas"] = list(self.adam_betas)
        return data


_D = TrainConfig()


class TrainConfigSchema(Schema):
    """Schema for the `train` command; mirrors TrainConfig field for field."""

    strategy = fields.Enum(Strategy, by_value=True, load_default=_D.strategy)
    epochs = fields.Int(load_default=_D.epochs, validate=lambda x: x >= 1)
    lr_initial = fields.Float(load_default=_D.lr_initial, validate=lambda x: x > 0)
    lr_halving_period = fields.Int(load_default=_D.lr_halving_period, validate=lambda x: x >= 1)
    batch_size = fields.Int(load_default=_D.batch_size, validate=lambda x: x >= 1)
    lam = fields.Float(load_default=_D.lam, data_key="lambda", validate=lambda x: x > 0)
    alpha = fields.Float(load_default=_D.alpha, validate=lambda x: x >= 0)
    adam_betas = fields.Tuple(
        (fields.Float(), fields.Float()), load_default=_D.adam_betas
    )
    adam_eps = fields.Float(load_default=_D.adam_eps, validate=lambda x: x > 0)
    weight_decay = fields.Float(load_default=_D.weight_decay, validate=lambda x: x >= 0)
    critic_steps = fields.Int(load_default=_D.critic_steps, validate=lambda x: x >= 1)
    enable_condlin = fields.Bool(load_default=_D.enable_condlin)
    enable_sdl = fields.Bool(load_default=_D.enable_sdl)
    enable_sal = fields.Bool(load_default=_D.enable_sal)
    enable_gan = fields.Bool(load_default=_D.enable_gan)
    flow_layers = fields.Int(load_default=_D.flow_layers, validate=lambda x: x >= 1)
    flow_hidden = fields.Int(load_default=_D.flow_hidden, validate=lambda x: x >= 1)
    embed_channels = fields.Int(load_default=_D.embed_channels, validate=lambda x: x >= 1)
    encoder_blocks = fields.Int(load_default=_D.encoder_blocks, validate=lambda x: x >= 0)
    unet_depth = fields.Int(load_default=_D.unet_depth, validate=lambda x: x >= 2)
    unet_channels = fields.Int(load_default=_D.unet_channels, validate=lambda x: x >= 1)
    critic_stages = fields.Int(load_default=_D.critic_stages, validate=lambda x: x >= 1)
    critic_channels = fields.Int(load_default=_D.critic_channels, validate=lambda x: x >= 1)
    patch_size = fields.Int(load_default=_D.patch_size, validate=lambda x: x >= 8)
    patch_stride = fields.Int(load_default=_D.patch_stride, validate=lambda x: x >= 1)
    val_fraction = fields.Float(load_default=_D.val_fraction, validate=lambda x: 0 <= x < 1)
    max_steps = fields.Int(load_default=None, allow_none=True, validate=lambda x: x >= 1)
    camera_filter = fields.Str(load_default=None, allow_none=True)
    seed = fields.Int(load_default=_D.seed, validate=lambda x: x >= 0)
    device = fields.Str(load_default=_D.device)
    num_workers = fields.Int(load_default=_D.num_workers, validate=lambda x: x >= 0)

    @validates_schema
    def validate_components(self, data, **kwargs):
        """At least one flow layer kind, unless the GAN-only ablation is requested."""
        flow = any(data.get(k, True) for k in ("enable_condlin", "enable_sdl", "enable_sal"))
        if not flow and not data.get("enable_gan", True):
            raise ValidationError("Enable at least one flow layer kind or the GAN")
        if not flow and data.get("strategy") == Strategy.JOINT:
            raise ValidationError("JOINT training needs flow layers", "strategy")

    @post_load
    def make_config(self, data, **kwargs) -> TrainConfig:
        data["adam_betas"] = tuple(data["adam_betas"])
        return TrainConfig(**data)


def dump_train_config(config: TrainConfig) -> Dict:
    """Serialize a TrainConfig with the schema's external key names."""
    data = config.to_dict()
    data["lambda"] = data.pop("lam")
    return data
