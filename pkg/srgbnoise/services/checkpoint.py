"""Versioned checkpoint container for noise models and denoisers."""
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import torch
import torch.nn as nn
from loguru import logger

from srgbnoise.core.config import Config
from srgbnoise.models.dataset import ConditionRegistry
from srgbnoise.models.denoiser import DenoiserSpec, DnCNN
from srgbnoise.models.flow import FlowLayerSpec, FlowStack
from srgbnoise.models.gan import CriticSpec, GeneratorSpec, UNetGenerator, VGGCritic
from srgbnoise.utils.errors import ConfigurationError, NotFoundError

NOISE_MODEL = "noise_model"
DENOISER = "denoiser"


@dataclass
class NoiseModelBundle:
    """Flow stack plus optional GAN components sharing one condition registry."""

    registry: ConditionRegistry
    flow: FlowStack
    generator: Optional[UNetGenerator] = None
    critic: Optional[VGGCritic] = None

    def components(self) -> Dict[str, nn.Module]:
        found = {"flow": self.flow}
        if self.generator is not None:
            found["generator"] = self.generator
        if self.critic is not None:
            found["critic"] = self.critic
        return found

    def header(self) -> Dict[str, Any]:
        return {
            "kind": NOISE_MODEL,
            "registry": self.registry.to_dict(),
            "flow": {
                "layers": [spec.to_dict() for spec in self.flow.specs],
                "embed_channels": self.flow.embed_channels,
                "encoder_blocks": self.flow.encoder_blocks,
            },
            "generator": self.generator.spec.to_dict() if self.generator is not None else None,
            "critic": self.critic.spec.to_dict() if self.critic is not None else None,
        }

    def to(self, device: str) -> "NoiseModelBundle":
        for module in self.components().values():
            module.to(device)
        return self

    def eval(self) -> "NoiseModelBundle":
        for module in self.components().values():
            module.eval()
        return self


def parameter_shapes(module: nn.Module) -> Dict[str, list]:
    return {name: list(t.shape) for name, t in module.state_dict().items()}


def save_checkpoint(
    path: Path,
    header: Dict[str, Any],
    components: Dict[str, nn.Module],
    optimizers: Optional[Dict[str, Any]] = None,
    train_state: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write a checkpoint atomically.

    The header records format, version and every parameter shape so a mismatching model
    fails loudly on load. Nothing time-dependent is stored.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "header": {
            "format": Config.CHECKPOINT_FORMAT,
            "version": Config.CHECKPOINT_VERSION,
            **header,
            "shapes": {name: parameter_shapes(m) for name, m in components.items()},
        },
        "components": {name: m.state_dict() for name, m in components.items()},
        "optimizers": {name: opt.state_dict() for name, opt in (optimizers or {}).items() if opt},
        "train_state": train_state or {},
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    logger.debug("Checkpoint written", path=str(path), components=sorted(components))
    return path


def read_checkpoint(path: Path, kind: str, device: str = "cpu") -> Dict[str, Any]:
    """Load a checkpoint payload and validate its header."""
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"Checkpoint not found: {path}", path=str(path))
    try:
        payload = torch.load(path, map_location=device, weights_only=True)
    except Exception as e:
        raise ConfigurationError(f"Checkpoint {path} could not be read: {e}")
    header = payload.get("header", {}) if isinstance(payload, dict) else {}
    if header.get("format") != Config.CHECKPOINT_FORMAT:
        raise ConfigurationError(f"{path} is not a srgbnoise checkpoint")
    if header.get("version") != Config.CHECKPOINT_VERSION:
        raise ConfigurationError(
            f"Checkpoint version {header.get('version')} is not supported "
            f"(expected {Config.CHECKPOINT_VERSION})"
        )
    if header.get("kind") != kind:
        raise ConfigurationError(f"{path} holds a {header.get('kind')}, expected a {kind}")
    return payload


def restore_component(name: str, module: nn.Module, payload: Dict[str, Any]) -> nn.Module:
    """Load one component's weights after checking the recorded shapes."""
    expected = payload["header"]["shapes"].get(name)
    if expected is None or name not in payload["components"]:
        raise ConfigurationError(f"Checkpoint has no '{name}' component")
    actual = parameter_shapes(module)
    if expected != actual:
        mismatched = sorted(
            k for k in set(expected) | set(actual) if expected.get(k) != actual.get(k)
        )
        raise ConfigurationError(
            f"Component '{name}' does not match the checkpoint",
            details={"mismatched": mismatched[:10]},
        )
    module.load_state_dict(payload["components"][name])
    return module


def build_noise_model_from_header(header: Dict[str, Any]) -> NoiseModelBundle:
    """Instantiate untrained modules matching a noise-model header."""
    registry = ConditionRegistry.from_dict(header["registry"])
    flow_header = header["flow"]
    flow = FlowStack(
        [FlowLayerSpec.from_dict(d) for d in flow_header["layers"]],
        registry.n_cameras,
        registry.n_isos,
        embed_channels=flow_header["embed_channels"],
        encoder_blocks=flow_header["encoder_blocks"],
    )
    generator = critic = None
    if header.get("generator"):
        generator = UNetGenerator(GeneratorSpec(**header["generator"]))
    if header.get("critic"):
        critic = VGGCritic(CriticSpec(**header["critic"]))
    return NoiseModelBundle(registry=registry, flow=flow, generator=generator, critic=critic)


def save_noise_model(
    path: Path,
    bundle: NoiseModelBundle,
    optimizers: Optional[Dict[str, Any]] = None,
    train_state: Optional[Dict[str, Any]] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    header = bundle.header()
    header.update(extra or {})
    return save_checkpoint(path, header, bundle.components(), optimizers, train_state)


def load_noise_model(path: Path, device: str = "cpu") -> NoiseModelBundle:
    """Rebuild a noise model from its checkpoint, in eval mode."""
    payload = read_checkpoint(path, NOISE_MODEL, device)
    bundle = build_noise_model_from_header(payload["header"])
    for name, module in bundle.components().items():
        restore_component(name, module, payload)
    logger.info(
        "Noise model loaded",
        path=str(path),
        flow_layers=[s.kind.value for s in bundle.flow.specs],
        gan=bundle.generator is not None,
    )
    return bundle.to(device).eval()


def save_denoiser(path: Path, model: DnCNN, extra: Optional[Dict[str, Any]] = None) -> Path:
    header = {"kind": DENOISER, "denoiser": model.spec.to_dict(), **(extra or {})}
    return save_checkpoint(path, header, {"denoiser": model})


def load_denoiser(path: Path, device: str = "cpu") -> DnCNN:
    payload = read_checkpoint(path, DENOISER, device)
    model = DnCNN(DenoiserSpec(**payload["header"]["denoiser"]))
    restore_component("denoiser", model, payload)
    return model.to(device).eval()
