"""Marshmallow schemas for configs, manifests and sidecars."""
from srgbnoise.schemas.commands import (
    AnalyzeConfigSchema,
    DenoiserConfigSchema,
    EvaluateConfigSchema,
    MakeDatasetConfigSchema,
    SynthesizeConfigSchema,
)
from srgbnoise.schemas.manifest import ManifestRowSchema
from srgbnoise.schemas.oracle import OracleConfigSchema, OracleMetaSchema, SynthCameraParamsSchema
from srgbnoise.schemas.run_meta import RunMetaSchema
from srgbnoise.schemas.training import Strategy, TrainConfig, TrainConfigSchema

__all__ = [
    "AnalyzeConfigSchema",
    "DenoiserConfigSchema",
    "EvaluateConfigSchema",
    "MakeDatasetConfigSchema",
    "SynthesizeConfigSchema",
    "ManifestRowSchema",
    "OracleConfigSchema",
    "OracleMetaSchema",
    "SynthCameraParamsSchema",
    "RunMetaSchema",
    "Strategy",
    "TrainConfig",
    "TrainConfigSchema",
]
