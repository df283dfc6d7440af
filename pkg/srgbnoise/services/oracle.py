"""Synthetic virtual-camera oracle: ground-truth noisy/clean datasets with known parameters."""
import json
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import signal

from srgbnoise.core.config import Config
from srgbnoise.models.dataset import (
    CameraCondition,
    ConditionRegistry,
    DatasetManifest,
    ManifestEntry,
    SynthCameraParams,
)
from srgbnoise.schemas.oracle import OracleConfig, OracleMetaSchema, params_to_dict
from srgbnoise.services.dataset import (
    load_manifest,
    quantize_8bit,
    read_rgb,
    save_rgb,
    write_manifest,
)
from srgbnoise.utils.errors import ValidationError


def kernel_norm_scale(kernel: np.ndarray) -> float:
    """
    Gain restoring the marginal variance after correlating an i.i.d. field.

    Convolving white noise of variance v with weights k yields variance v·Σk², so the field
    is multiplied by 1/‖k‖₂.
    """
    return float(1.0 / np.sqrt(np.sum(np.square(kernel))))


def oracle_variance(params: SynthCameraParams, clean: np.ndarray, iso_value: int) -> np.ndarray:
    """Per-pixel pre-correlation variance `gain·(beta_s_sq·x + beta_c_sq)`."""
    beta_s = np.asarray(params.beta_s_sq, dtype=np.float64)
    beta_c = np.asarray(params.beta_c_sq, dtype=np.float64)
    return params.gain(iso_value) * (beta_s * np.asarray(clean, dtype=np.float64) + beta_c)


def oracle_noise_field(
    params: SynthCameraParams,
    clean: np.ndarray,
    iso_value: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Draw one continuous (unclipped, unquantized) oracle noise field.

    Correlated fields are drawn on a border of mirrored variance and cropped by a valid
    convolution, so every output pixel sums the same number of independent samples.

    Args:
        params: Oracle camera parameters
        clean: H×W×3 clean image on the 0–255 scale
        iso_value: ISO level selecting the gain
        rng: Random source

    Returns:
        H×W×3 float64 noise
    """
    variance = oracle_variance(params, clean, iso_value)
    kernel = params.kernel_array
    if kernel.size == 1:
        return rng.standard_normal(variance.shape) * np.sqrt(variance)
    kh, kw = kernel.shape
    pad = ((kh // 2, (kh - 1) // 2), (kw // 2, (kw - 1) // 2), (0, 0))
    padded = np.pad(variance, pad, mode="symmetric")
    white = rng.standard_normal(padded.shape) * np.sqrt(padded)
    scale = kernel_norm_scale(kernel)
    field = np.empty_like(variance)
    for c in range(field.shape[2]):
        field[..., c] = signal.convolve2d(white[..., c], kernel, mode="valid") * scale
    return field


def procedural_clean_images(n_images: int, size: int, seed: int) -> List[np.ndarray]:
    """
    Build clean test scenes: a tilted colour ramp with a few flat rectangles.

    Ramps cover most of the 0–255 range so intensity-binned statistics have support
    everywhere.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / max(size - 1, 1)
    images = []
    for _ in range(n_images):
        angle = rng.uniform(0, 2 * np.pi)
        ramp = np.cos(angle) * xx + np.sin(angle) * yy
        ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-9)
        image = np.empty((size, size, 3), dtype=np.float64)
        for c in range(3):
            lo, hi = sorted(rng.uniform(10, 245, size=2))
            lo, hi = min(lo, 20.0), max(hi, 235.0)
            image[..., c] = lo + (hi - lo) * ramp
        for _ in range(rng.integers(1, 4)):
            h, w = rng.integers(size // 8, size // 3, size=2)
            top, left = rng.integers(0, size - h), rng.integers(0, size - w)
            image[top : top + h, left : left + w] = rng.uniform(15, 240, size=3)
        images.append(np.rint(image).astype(np.float32))
    return images


def synthesize_oracle_pair(
    params: SynthCameraParams, clean: np.ndarray, iso_value: int, rng: np.random.Generator
) -> np.ndarray:
    """Noisy 8-bit image values (as float) for one clean image."""
    noise = oracle_noise_field(params, clean, iso_value, rng)
    return quantize_8bit(np.asarray(clean, dtype=np.float64) + noise).astype(np.float32)


def generate_oracle_dataset(
    params: SynthCameraParams,
    clean_images: Sequence[np.ndarray],
    conditions: Sequence[CameraCondition],
    registry: ConditionRegistry,
    seed: int,
    out_dir: Path,
) -> DatasetManifest:
    """
    Write an oracle dataset: clean/noisy PNGs, a manifest and the `oracle.meta` sidecar.

    Args:
        params: Ground-truth camera parameters
        clean_images: H×W×3 clean images in [0, 255]
        conditions: One condition per image, indices into `registry`
        registry: Camera/ISO registry naming the conditions
        seed: Seed of the single random stream used for all images
        out_dir: Output directory

    Returns:
        The written manifest, reloaded and validated
    """
    if len(clean_images) != len(conditions):
        raise ValidationError(
            f"{len(clean_images)} clean images but {len(conditions)} conditions"
        )
    if not clean_images:
        raise ValidationError("Oracle generation needs at least one clean image")

    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    entries = []
    for index, (clean, condition) in enumerate(zip(clean_images, conditions)):
        clean = np.asarray(clean, dtype=np.float64)
        if clean.ndim != 3 or clean.shape[2] != 3:
            raise ValidationError(f"Clean image {index} must be H×W×3, got {clean.shape}")
        if clean.min() < 0 or clean.max() > 255:
            raise ValidationError(f"Clean image {index} leaves the [0, 255] range")
        camera_name, iso_value = registry.names_for(condition)
        clean = np.rint(clean)
        noisy = synthesize_oracle_pair(params, clean, iso_value, rng)

        scene_id = f"scene_{index:04d}"
        clean_path = save_rgb(clean, out_dir / "clean" / f"{scene_id}.png")
        noisy_path = save_rgb(noisy, out_dir / "noisy" / f"{scene_id}.png")
        entries.append(ManifestEntry(clean_path, noisy_path, camera_name, iso_value, scene_id))

    manifest_path = write_manifest(out_dir / Config.MANIFEST_NAME, entries)
    meta = OracleMetaSchema().dump(
        {
            "params": params_to_dict(params),
            "seed": seed,
            "n_images": len(entries),
            "kernel_norm_scale": kernel_norm_scale(params.kernel_array),
        }
    )
    (out_dir / Config.ORACLE_META_NAME).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info("Oracle dataset written", out_dir=str(out_dir), images=len(entries), seed=seed)
    return load_manifest(manifest_path)


def oracle_conditions(
    cameras: Sequence[str], isos: Sequence[int], n_images: int
) -> Tuple[ConditionRegistry, List[CameraCondition]]:
    """Cycle images through every (camera, ISO) combination in registry order."""
    registry = ConditionRegistry.from_pairs((c, i) for c in cameras for i in isos)
    combos = [
        CameraCondition(camera, iso)
        for camera in range(registry.n_cameras)
        for iso in range(registry.n_isos)
    ]
    return registry, [combos[i % len(combos)] for i in range(n_images)]


def generate_from_config(
    config: OracleConfig, out_dir: Path, clean_manifest: Optional[DatasetManifest] = None
) -> DatasetManifest:
    """
    Run `oracle-gen`: procedural clean scenes (or a clean manifest's images) through the oracle.

    With a clean manifest, every listed image is used and `n_images`/`image_size` are ignored.
    """
    if clean_manifest is not None:
        clean_images = [read_rgb(e.clean_path) for e in clean_manifest.entries]
    else:
        clean_images = procedural_clean_images(config.n_images, config.image_size, config.seed)
    registry, conditions = oracle_conditions(
        config.cameras, sorted(config.params.gain_per_iso), len(clean_images)
    )
    return generate_oracle_dataset(
        config.params, clean_images, conditions, registry, config.seed, out_dir
    )
