"""Downstream denoiser harness: training on (synthesized) pairs and PSNR/SSIM evaluation."""
import shutil
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F
from loguru import logger
from torch.optim import Adam

from srgbnoise.core.logging import add_training_log, training_logger
from srgbnoise.models.dataset import DatasetManifest, ImagePair
from srgbnoise.models.denoiser import DenoiserSpec, DnCNN
from srgbnoise.models.statistics import DenoiseReport, DenoiseRow
from srgbnoise.schemas.commands import DenoiserConfig
from srgbnoise.services.checkpoint import load_denoiser, save_denoiser
from srgbnoise.services.dataset import (
    PatchDataset,
    epoch_loader,
    extract_dataset_patches,
    load_pairs,
    split_by_scene,
    to_image,
    to_tensor,
)
from srgbnoise.services.evaluation import psnr, ssim
from srgbnoise.services.training import learning_rate
from srgbnoise.utils.errors import DivergedError, ValidationError


@torch.no_grad()
def denoise(model: DnCNN, noisy: np.ndarray, device: str = "cpu") -> np.ndarray:
    """Denoise one H×W×3 image; the output is clipped to [0, 255]."""
    model.eval()
    out = model(to_tensor(noisy)[None].to(device))[0]
    return np.clip(to_image(out), 0.0, 255.0)


def evaluate_pairs(
    model: DnCNN, pairs: Sequence[ImagePair], manifest: DatasetManifest, device: str = "cpu"
) -> DenoiseReport:
    report = DenoiseReport()
    for pair in pairs:
        restored = denoise(model, pair.noisy, device)
        camera, iso = manifest.registry.names_for(pair.condition)
        report.rows.append(
            DenoiseRow(
                scene_id=pair.scene_id,
                camera=camera,
                iso=iso,
                psnr=psnr(restored, pair.clean),
                ssim=ssim(restored, pair.clean),
            )
        )
    return report


def evaluate_denoiser(
    denoiser: Union[DnCNN, Path], manifest: DatasetManifest, device: str = "cpu"
) -> DenoiseReport:
    """
    Per-image PSNR/SSIM of a denoiser on a test manifest, in manifest order.

    Args:
        denoiser: Model or denoiser checkpoint path
        manifest: Test pairs

    Returns:
        Report whose rows follow manifest order
    """
    if not manifest.has_noisy:
        raise ValidationError("Denoiser evaluation needs noisy/clean test pairs")
    model = denoiser if isinstance(denoiser, DnCNN) else load_denoiser(Path(denoiser), device)
    report = evaluate_pairs(model.to(device), load_pairs(manifest), manifest, device)
    logger.info(
        "Denoiser evaluated",
        images=len(report.rows),
        psnr=report.mean_psnr,
        ssim=report.mean_ssim,
    )
    return report


def train_denoiser(config: DenoiserConfig, manifest: DatasetManifest, out_dir: Path) -> Path:
    """
    Train a DnCNN by L2 regression on noisy/clean patches and return its best checkpoint.

    Scenes are split for validation; the epoch with the highest validation PSNR is copied
    to `denoiser_best.bin`.
    """
    if not manifest.entries or not manifest.has_noisy:
        raise ValidationError("Denoiser training needs noisy/clean pairs")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_part, val_part = split_by_scene(manifest, config.val_fraction, config.seed)
    if not val_part.entries:
        logger.warning("No validation scenes; denoiser is validated on its training images")
        val_part = train_part
    patches = extract_dataset_patches(train_part, config.patch_size, config.patch_stride)
    val_pairs = load_pairs(val_part)
    dataset = PatchDataset(patches, seed=config.seed, augment_patches=True)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = DnCNN(DenoiserSpec(config.depth, config.channels, config.residual))
    model.to(config.device)
    optimizer = Adam(model.parameters(), lr=config.lr_initial)

    sink = add_training_log(out_dir / "denoiser_train.log")
    best_path = out_dir / "denoiser_best.bin"
    best_psnr = -np.inf
    step = 0
    baseline = float(np.mean([psnr(p.noisy, p.clean) for p in val_pairs]))
    logger.info("Denoiser training started", patches=len(patches), noisy_psnr=baseline)
    try:
        for epoch in range(config.epochs):
            lr = learning_rate(config.lr_initial, config.lr_halving_period, epoch)
            for group in optimizer.param_groups:
                group["lr"] = lr
            model.train()
            for batch in epoch_loader(dataset, config.batch_size, config.seed, epoch):
                if config.max_steps is not None and step >= config.max_steps:
                    break
                noisy = batch["noisy"].to(config.device)
                clean = batch["clean"].to(config.device)
                loss = F.mse_loss(model(noisy) / 255.0, clean / 255.0)
                if not torch.isfinite(loss):
                    raise DivergedError(
                        f"Denoiser loss diverged at step {step}",
                        last_checkpoint=str(best_path) if best_path.exists() else None,
                    )
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                training_logger.info(f"{step}\t{float(loss):.6g}\t{lr:.6g}")
                step += 1

            report = evaluate_pairs(model, val_pairs, manifest, config.device)
            training_logger.info(f"epoch\t{epoch}\tval_psnr\t{report.mean_psnr:.6g}")
            ckpt = save_denoiser(out_dir / f"denoiser_epoch{epoch}.bin", model)
            if report.mean_psnr > best_psnr:
                best_psnr = report.mean_psnr
                shutil.copyfile(ckpt, best_path)
            logger.info(
                "Denoiser epoch finished", epoch=epoch, val_psnr=report.mean_psnr, step=step
            )
            if config.max_steps is not None and step >= config.max_steps:
                break
    finally:
        logger.remove(sink)

    logger.info("Denoiser training finished", best=str(best_path), val_psnr=best_psnr)
    return best_path
