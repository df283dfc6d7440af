"""Domain entities and neural network models."""
from srgbnoise.models.dataset import (
    CameraCondition,
    ConditionRegistry,
    DatasetManifest,
    ImagePair,
    ManifestEntry,
    SynthCameraParams,
)
from srgbnoise.models.denoiser import DenoiserSpec, DnCNN
from srgbnoise.models.flow import FlowLayerSpec, FlowStack, LayerKind
from srgbnoise.models.gan import CriticSpec, GeneratorSpec, UNetGenerator, VGGCritic

__all__ = [
    "CameraCondition",
    "ConditionRegistry",
    "DatasetManifest",
    "ImagePair",
    "ManifestEntry",
    "SynthCameraParams",
    "DenoiserSpec",
    "DnCNN",
    "FlowLayerSpec",
    "FlowStack",
    "LayerKind",
    "CriticSpec",
    "GeneratorSpec",
    "UNetGenerator",
    "VGGCritic",
]
