"""Synthetic-oracle schemas: camera parameters, `oracle.meta` sidecar and oracle-gen config."""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from marshmallow import Schema, ValidationError, fields, post_load, validates, validates_schema

from srgbnoise.models.dataset import KERNEL_PRESETS, SynthCameraParams
from srgbnoise.utils import errors


class SynthCameraParamsSchema(Schema):
    """Schema for ground-truth oracle camera parameters."""

    beta_s_sq = fields.List(fields.Float(), required=True, validate=lambda x: len(x) == 3)
    beta_c_sq = fields.List(fields.Float(), required=True, validate=lambda x: len(x) == 3)
    kernel = fields.List(fields.List(fields.Float()), required=True)
    gain_per_iso = fields.Dict(keys=fields.Int(), values=fields.Float(), required=True)

    @post_load
    def make_params(self, data, **kwargs) -> SynthCameraParams:
        try:
            return SynthCameraParams(
                beta_s_sq=tuple(data["beta_s_sq"]),
                beta_c_sq=tuple(data["beta_c_sq"]),
                kernel=tuple(tuple(row) for row in data["kernel"]),
                gain_per_iso=dict(data["gain_per_iso"]),
            )
        except errors.ValidationError as e:
            raise ValidationError(e.message)


class OracleMetaSchema(Schema):
    """`oracle.meta`: the exact (params, seed) pair behind an oracle dataset."""

    params = fields.Nested(SynthCameraParamsSchema, required=True)
    seed = fields.Int(required=True)
    n_images = fields.Int(required=True)
    kernel_norm_scale = fields.Float(required=True)


def params_to_dict(params: SynthCameraParams) -> Dict:
    """Dump parameters into the schema's plain form."""
    return {
        "beta_s_sq": list(params.beta_s_sq),
        "beta_c_sq": list(params.beta_c_sq),
        "kernel": [list(row) for row in params.kernel],
        "gain_per_iso": {int(k): float(v) for k, v in params.gain_per_iso.items()},
    }


@dataclass(frozen=True)
class OracleConfig:
    """Resolved `oracle-gen` configuration."""

    params: SynthCameraParams
    cameras: Tuple[str, ...]
    n_images: int
    image_size: int
    seed: int


class OracleConfigSchema(Schema):
    """Schema for the `oracle-gen` command."""

    beta_s_sq = fields.List(fields.Float(), load_default=lambda: [0.5, 0.5, 0.5])
    beta_c_sq = fields.List(fields.Float(), load_default=lambda: [4.0, 4.0, 4.0])
    kernel = fields.Raw(load_default="identity")
    gains = fields.Dict(keys=fields.Int(), values=fields.Float(), load_default=lambda: {100: 1.0})
    cameras = fields.List(fields.Str(), load_default=lambda: ["SYN"])
    n_images = fields.Int(load_default=8, validate=lambda x: x >= 1)
    image_size = fields.Int(load_default=128, validate=lambda x: x >= 16)
    seed = fields.Int(load_default=0, validate=lambda x: x >= 0)

    @validates("kernel")
    def validate_kernel(self, value, **kwargs):
        """Kernel is a preset name or a list of weight rows."""
        if isinstance(value, str):
            if value not in KERNEL_PRESETS:
                raise ValidationError(
                    f"Unknown kernel preset; choose from {sorted(KERNEL_PRESETS)}"
                )
        elif not (isinstance(value, list) and value and all(isinstance(r, list) for r in value)):
            raise ValidationError("Kernel must be a preset name or a list of rows")

    @validates_schema
    def validate_cameras(self, data, **kwargs):
        """Camera names are unique."""
        cameras = data.get("cameras", [])
        if not cameras or len(set(cameras)) != len(cameras):
            raise ValidationError("cameras must be a non-empty list of unique names", "cameras")

    @post_load
    def make_config(self, data, **kwargs) -> OracleConfig:
        kernel = data["kernel"]
        if isinstance(kernel, str):
            kernel = KERNEL_PRESETS[kernel]
        try:
            params = SynthCameraParams(
                beta_s_sq=tuple(data["beta_s_sq"]),
                beta_c_sq=tuple(data["beta_c_sq"]),
                kernel=tuple(tuple(float(w) for w in row) for row in kernel),
                gain_per_iso=dict(data["gains"]),
            )
        except errors.ValidationError as e:
            raise ValidationError(e.message)
        return OracleConfig(
            params=params,
            cameras=tuple(data["cameras"]),
            n_images=data["n_images"],
            image_size=data["image_size"],
            seed=data["seed"],
        )


def load_oracle_meta(data: Dict) -> Tuple[SynthCameraParams, int, Optional[float]]:
    """Validate an `oracle.meta` document and return (params, seed, kernel scale)."""
    meta = OracleMetaSchema().load(data)
    return meta["params"], meta["seed"], meta["kernel_norm_scale"]
