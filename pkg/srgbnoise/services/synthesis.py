"""End-to-end noise synthesis and synthetic denoiser datasets."""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import torch
from loguru import logger

from srgbnoise.models.dataset import (
    CameraCondition,
    ConditionRegistry,
    DatasetManifest,
    ManifestEntry,
)
from srgbnoise.models.flow import FlowStack, quantize, sample_pixelwise
from srgbnoise.models.gan import UNetGenerator, refine
from srgbnoise.schemas.commands import MakeDatasetConfig
from srgbnoise.services.analysis import pearson_at_offset
from srgbnoise.services.checkpoint import NoiseModelBundle
from srgbnoise.services.dataset import (
    load_manifest,
    read_rgb,
    save_rgb,
    to_image,
    to_tensor,
    write_manifest,
)
from srgbnoise.utils.errors import ValidationError
from srgbnoise.utils.seeding import torch_generator


@dataclass
class SynthesisResult:
    noise: torch.Tensor  # continuous ñ
    noisy: torch.Tensor  # clip(clean + ñ) rounded to 8-bit levels


@torch.no_grad()
def end_to_end_synthesize(
    flow: FlowStack,
    generator_net: Optional[UNetGenerator],
    clean: torch.Tensor,
    delta: torch.Tensor,
    gamma: torch.Tensor,
    generator: Optional[torch.Generator] = None,
    temperature: float = 1.0,
) -> SynthesisResult:
    """Sample n' from the flow, refine it with the generator and add it to the clean batch."""
    n_prime = sample_pixelwise(flow, clean, delta, gamma, generator, temperature)
    n_tilde = refine(generator_net, n_prime)
    noisy = quantize(torch.clamp(clean + n_tilde, 0.0, 255.0))
    return SynthesisResult(noise=n_tilde, noisy=noisy)


def synthesize_image(
    bundle: NoiseModelBundle,
    clean: np.ndarray,
    condition: CameraCondition,
    generator: torch.Generator,
    temperature: float = 1.0,
    device: str = "cpu",
) -> Tuple[np.ndarray, np.ndarray]:
    """Synthesize one H×W×3 image; returns (noisy 8-bit levels, continuous noise)."""
    bundle.registry.check(condition)
    result = end_to_end_synthesize(
        bundle.flow,
        bundle.generator,
        to_tensor(clean)[None].to(device),
        torch.tensor([condition.camera_type], device=device),
        torch.tensor([condition.iso], device=device),
        generator,
        temperature,
    )
    return to_image(result.noisy[0]), to_image(result.noise[0])


class ConditionPolicy(Protocol):
    def draw(self, registry: ConditionRegistry, rng: np.random.Generator) -> CameraCondition:
        ...


@dataclass(frozen=True)
class FixedConditionPolicy:
    camera: str
    iso: int

    def draw(self, registry: ConditionRegistry, rng: np.random.Generator) -> CameraCondition:
        return registry.condition_for(self.camera, self.iso)


class UniformConditionPolicy:
    """Camera and ISO drawn independently and uniformly from the registry."""

    def draw(self, registry: ConditionRegistry, rng: np.random.Generator) -> CameraCondition:
        return CameraCondition(
            camera_type=int(rng.integers(registry.n_cameras)),
            iso=int(rng.integers(registry.n_isos)),
        )


def policy_from_config(config: MakeDatasetConfig) -> ConditionPolicy:
    if config.policy == "fixed":
        return FixedConditionPolicy(config.camera, int(config.iso))
    return UniformConditionPolicy()


def _noise_summary(noise: np.ndarray) -> Tuple[float, float]:
    """Noise std and mean lag-1 horizontal Pearson r over channels."""
    lag1 = [pearson_at_offset(noise[..., c], 1, 0)[0] for c in range(noise.shape[-1])]
    return float(np.std(noise)), float(np.mean(lag1))


def _synthesize_entries(
    bundle: NoiseModelBundle,
    jobs: Sequence[Tuple[ManifestEntry, CameraCondition]],
    out_dir: Path,
    seed: int,
    temperature: float,
    device: str,
) -> Tuple[DatasetManifest, List[Dict]]:
    out_dir = Path(out_dir)
    noisy_dir = out_dir / "noisy"
    entries, rows = [], []
    for index, (entry, condition) in enumerate(jobs):
        clean = read_rgb(entry.clean_path)
        noisy, noise = synthesize_image(
            bundle, clean, condition, torch_generator(seed, index), temperature, device
        )
        noisy_path = save_rgb(noisy, noisy_dir / f"{index:05d}.png")
        camera, iso = bundle.registry.names_for(condition)
        entries.append(
            ManifestEntry(
                clean_path=Path(entry.clean_path).resolve(),
                noisy_path=noisy_path.resolve(),
                camera_name=camera,
                iso_value=iso,
                scene_id=entry.scene_id,
            )
        )
        noise_std, lag1 = _noise_summary(noise)
        rows.append(
            {
                "scene_id": entry.scene_id,
                "camera": camera,
                "iso": iso,
                "noise_std": noise_std,
                "lag1_r": lag1,
            }
        )
        logger.debug("Image synthesized", scene_id=entry.scene_id, camera=camera, iso=iso)

    manifest_path = write_manifest(out_dir / "manifest.tsv", entries)
    return load_manifest(manifest_path), rows


def synthesize_manifest(
    bundle: NoiseModelBundle,
    manifest: DatasetManifest,
    out_dir: Path,
    seed: int = 0,
    temperature: float = 1.0,
    device: str = "cpu",
) -> Tuple[DatasetManifest, List[Dict]]:
    """
    Synthesize noisy versions of a manifest's clean images under each row's own condition.

    Returns the written manifest and one summary row per image.
    """
    if not manifest.entries:
        raise ValidationError("Manifest has no images to synthesize")
    jobs = [
        (e, bundle.registry.condition_for(e.camera_name, e.iso_value)) for e in manifest.entries
    ]
    result = _synthesize_entries(bundle, jobs, out_dir, seed, temperature, device)
    logger.info("Synthesis finished", images=len(jobs), out=str(out_dir))
    return result


def make_denoiser_dataset(
    bundle: NoiseModelBundle,
    clean_manifest: DatasetManifest,
    policy: ConditionPolicy,
    out_dir: Path,
    seed: int = 0,
    temperature: float = 1.0,
    device: str = "cpu",
) -> DatasetManifest:
    """
    Build a synthetic noisy/clean dataset for denoiser training.

    Conditions come from `policy`, drawn in manifest order from a generator seeded by `seed`;
    the same seed yields identical files.
    """
    if not clean_manifest.entries:
        raise ValidationError("Clean manifest is empty")
    rng = np.random.default_rng(seed)
    jobs = [(e, policy.draw(bundle.registry, rng)) for e in clean_manifest.entries]
    manifest, _ = _synthesize_entries(bundle, jobs, out_dir, seed, temperature, device)
    logger.info(
        "Denoiser dataset written",
        images=len(manifest),
        policy=type(policy).__name__,
        out=str(out_dir),
    )
    return manifest
