"""Pytest configuration and fixtures."""
from pathlib import Path
from typing import Dict, Sequence

import numpy as np
import pytest
import torch

from srgbnoise.core.config import TestingConfig
from srgbnoise.core.logging import setup_logging
from srgbnoise.models.dataset import SynthCameraParams
from srgbnoise.schemas.training import TrainConfig
from srgbnoise.services.dataset import PatchDataset, epoch_loader, extract_dataset_patches, save_rgb
from srgbnoise.services.oracle import (
    generate_oracle_dataset,
    oracle_conditions,
    procedural_clean_images,
)


@pytest.fixture(scope="session", autouse=True)
def quiet_logging():
    """Configure logging for testing."""
    setup_logging(TestingConfig())


@pytest.fixture
def oracle_params():
    """Heteroscedastic oracle camera with two ISO gains."""
    return SynthCameraParams(
        beta_s_sq=(0.5, 0.5, 0.5),
        beta_c_sq=(4.0, 4.0, 4.0),
        kernel=((1.0,),),
        gain_per_iso={100: 1.0, 200: 2.0},
    )


@pytest.fixture
def oracle_manifest(tmp_path, oracle_params):
    """Four 32×32 oracle pairs of camera S6 alternating between ISO 100 and 200."""
    registry, conditions = oracle_conditions(["S6"], [100, 200], 4)
    images = procedural_clean_images(4, 32, seed=0)
    return generate_oracle_dataset(
        oracle_params, images, conditions, registry, seed=0, out_dir=tmp_path / "oracle"
    )


@pytest.fixture
def tiny_train_config():
    """Smallest training setup that still exercises every component."""
    return TrainConfig(
        epochs=1,
        batch_size=4,
        flow_layers=3,
        flow_hidden=8,
        embed_channels=4,
        encoder_blocks=1,
        unet_depth=2,
        unet_channels=4,
        critic_stages=2,
        critic_channels=4,
        patch_size=16,
        patch_stride=16,
        val_fraction=0.25,
        seed=0,
    )


@pytest.fixture
def patch_batch(oracle_manifest) -> Dict[str, torch.Tensor]:
    """First un-augmented batch of four 16×16 oracle patches."""
    patches = extract_dataset_patches(oracle_manifest, size=16, stride=16)
    dataset = PatchDataset(patches, seed=0, augment_patches=False)
    return next(iter(epoch_loader(dataset, 4, seed=0, epoch=0, shuffle=False)))


@pytest.fixture
def write_manifest_file(tmp_path):
    """Write raw manifest lines (tab-joined) and return the file path."""

    def _write(rows: Sequence[Sequence[str]], name: str = "manifest.tsv") -> Path:
        path = tmp_path / name
        path.write_text("\n".join("\t".join(map(str, r)) for r in rows) + "\n")
        return path

    return _write


@pytest.fixture
def write_image(tmp_path):
    """Write an H×W×3 array as an 8-bit PNG under tmp_path."""

    def _write(name: str, array: np.ndarray) -> Path:
        return save_rgb(np.asarray(array, dtype=np.float64), tmp_path / name)

    return _write
