"""Noise-model training: simultaneous, two-stage and joint flow/GAN optimization."""
import math
import shutil
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Deque, Dict, Iterable, List, Optional, Sequence

import torch
from loguru import logger
from torch.optim import Adam

from srgbnoise.core.logging import add_training_log, training_logger
from srgbnoise.models.dataset import DatasetManifest, ImagePair
from srgbnoise.models.flow import (
    FlowStack,
    build_flow_specs,
    dequantize,
    nll_loss,
    sample_pixelwise,
)
from srgbnoise.models.gan import (
    CriticSpec,
    GeneratorSpec,
    UNetGenerator,
    VGGCritic,
    adversarial_loss,
    critic_loss,
)
from srgbnoise.schemas.training import Strategy, TrainConfig, dump_train_config
from srgbnoise.services.checkpoint import (
    NOISE_MODEL,
    NoiseModelBundle,
    read_checkpoint,
    restore_component,
    save_noise_model,
)
from srgbnoise.services.dataset import (
    PatchDataset,
    epoch_loader,
    extract_dataset_patches,
    split_by_scene,
)
from srgbnoise.utils.errors import (
    ConfigurationError,
    DivergedError,
    NumericalError,
    ValidationError,
)
from srgbnoise.utils.seeding import torch_generator

HISTORY_LENGTH = 100
VALIDATION_STREAM = 2**31 - 1


def learning_rate(lr_initial: float, halving_period: int, epoch: int) -> float:
    """lr_initial · 0.5^⌊epoch / halving_period⌋."""
    return lr_initial * 0.5 ** (epoch // halving_period)


@dataclass
class TrainState:
    """Counters and rolling loss histories, persisted with every checkpoint."""

    epoch: int = 0
    step: int = 0
    nll_history: Deque[float] = field(default_factory=lambda: deque(maxlen=HISTORY_LENGTH))
    adv_history: Deque[float] = field(default_factory=lambda: deque(maxlen=HISTORY_LENGTH))
    critic_history: Deque[float] = field(default_factory=lambda: deque(maxlen=HISTORY_LENGTH))
    best_val_nll: float = math.inf
    seed: int = 0
    last_checkpoint: Optional[str] = None

    @property
    def rng_state(self) -> Dict[str, int]:
        """Per-step streams are derived from (seed, step), so these two numbers suffice."""
        return {"seed": self.seed, "step": self.step}

    def to_dict(self) -> Dict:
        return {
            "epoch": self.epoch,
            "step": self.step,
            "nll_history": list(self.nll_history),
            "adv_history": list(self.adv_history),
            "critic_history": list(self.critic_history),
            "best_val_nll": self.best_val_nll,
            "rng_state": self.rng_state,
            "last_checkpoint": self.last_checkpoint,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "TrainState":
        state = cls(
            epoch=int(data["epoch"]),
            step=int(data["step"]),
            best_val_nll=float(data["best_val_nll"]),
            seed=int(data["rng_state"]["seed"]),
            last_checkpoint=data.get("last_checkpoint"),
        )
        state.nll_history.extend(data["nll_history"])
        state.adv_history.extend(data["adv_history"])
        state.critic_history.extend(data["critic_history"])
        return state


@dataclass
class StepRecord:
    step: int
    nll: float
    wgan: float = 0.0
    gp: float = 0.0
    adv: float = 0.0
    lr: float = 0.0

    def as_line(self) -> str:
        return "\t".join(
            [str(self.step)]
            + [f"{v:.6g}" for v in (self.nll, self.wgan, self.gp, self.adv, self.lr)]
        )


@dataclass
class Optimizers:
    flow: Optional[Adam] = None
    generator: Optional[Adam] = None
    critic: Optional[Adam] = None

    def items(self) -> Dict[str, Adam]:
        return {k: v for k, v in vars(self).items() if v is not None}

    def current_lr(self) -> float:
        for opt in self.items().values():
            return float(opt.param_groups[0]["lr"])
        return 0.0

    def set_lr(self, lr: float) -> None:
        for opt in self.items().values():
            for group in opt.param_groups:
                group["lr"] = lr


def build_noise_model(config: TrainConfig, registry) -> NoiseModelBundle:
    """
    Fresh noise model for a config.

    The flow is initialized under `seed` and the GAN under `seed + 1` inside forked RNG
    scopes, so enabling or disabling the GAN never changes the flow's initial weights.
    """
    specs = build_flow_specs(
        config.flow_layers,
        config.flow_hidden,
        enable_condlin=config.enable_condlin,
        enable_sdl=config.enable_sdl,
        enable_sal=config.enable_sal,
    )
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        flow = FlowStack(
            specs,
            registry.n_cameras,
            registry.n_isos,
            embed_channels=config.embed_channels,
            encoder_blocks=config.encoder_blocks,
        )
    generator = critic = None
    if config.enable_gan:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed + 1)
            generator = UNetGenerator(GeneratorSpec(config.unet_depth, config.unet_channels))
            critic = VGGCritic(CriticSpec(config.critic_stages, config.critic_channels))
    return NoiseModelBundle(registry=registry, flow=flow, generator=generator, critic=critic)


def build_optimizers(bundle: NoiseModelBundle, config: TrainConfig) -> Optimizers:
    """One Adam per component; a parameterless flow gets none."""

    def adam(module: torch.nn.Module) -> Optional[Adam]:
        params = list(module.parameters())
        if not params:
            return None
        return Adam(
            params,
            lr=config.lr_initial,
            betas=config.adam_betas,
            eps=config.adam_eps,
            weight_decay=config.weight_decay,
        )

    return Optimizers(
        flow=adam(bundle.flow),
        generator=adam(bundle.generator) if bundle.generator is not None else None,
        critic=adam(bundle.critic) if bundle.critic is not None else None,
    )


def _batch_to(batch: Dict[str, torch.Tensor], device: str) -> Dict[str, torch.Tensor]:
    return {k: v.to(device) for k, v in batch.items()}


def training_step(
    batch: Dict[str, torch.Tensor],
    bundle: NoiseModelBundle,
    optimizers: Optimizers,
    config: TrainConfig,
    state: TrainState,
    run_flow: bool = True,
    run_gan: bool = True,
) -> StepRecord:
    """
    One optimization step.

    Order is fixed: flow NLL update, critic update(s), generator update. The GAN sees n'
    drawn from the flow after this step's update. Random draws come from a generator seeded
    by (seed, global step), flow first.

    JOINT defers the flow update: NLL and the adversarial loss share one backward pass and
    one flow optimizer step, taken with the generator step.
    """
    rng = torch_generator(state.seed, state.step)
    clean, noisy = batch["clean"], batch["noisy"]
    delta, gamma = batch["camera"], batch["iso"]
    real_noise = dequantize(noisy - clean, rng)

    flow_opt = optimizers.flow if run_flow else None
    gan_on = run_gan and bundle.generator is not None
    joint = gan_on and flow_opt is not None and config.strategy == Strategy.JOINT
    with torch.set_grad_enabled(flow_opt is not None):
        ctx = bundle.flow.context(clean, delta, gamma)
        nll = nll_loss(bundle.flow, real_noise, ctx).mean()
    if flow_opt is not None and not joint:
        flow_opt.zero_grad(set_to_none=True)
        nll.backward()
        flow_opt.step()
    record = StepRecord(step=state.step, nll=float(nll.detach()))

    if gan_on:
        with torch.set_grad_enabled(joint):
            n_prime = sample_pixelwise(bundle.flow, clean, delta, gamma, rng)

        for _ in range(config.critic_steps):
            terms = critic_loss(
                bundle.critic,
                bundle.generator,
                clean,
                real_noise,
                n_prime,
                rng,
                lam=config.lam,
                alpha=config.alpha,
            )
            optimizers.critic.zero_grad(set_to_none=True)
            terms.total.backward()
            optimizers.critic.step()

        adv = adversarial_loss(
            bundle.critic, bundle.generator, clean, n_prime, config.lam, stop_gradient=not joint
        )
        if not torch.isfinite(adv):
            raise NumericalError("Non-finite adversarial loss")
        optimizers.generator.zero_grad(set_to_none=True)
        if joint:
            flow_opt.zero_grad(set_to_none=True)
            (nll + adv).backward()
            flow_opt.step()
        else:
            adv.backward()
        optimizers.generator.step()

        record.wgan = float(terms.wgan.detach())
        record.gp = float(terms.gp.detach())
        record.adv = float(adv.detach())
        state.adv_history.append(record.adv)
        state.critic_history.append(float(terms.total.detach()))

    record.lr = optimizers.current_lr()
    state.nll_history.append(record.nll)
    state.step += 1
    return record


def training_step_simultaneous(
    batch: Dict[str, torch.Tensor],
    bundle: NoiseModelBundle,
    optimizers: Optimizers,
    config: TrainConfig,
    state: TrainState,
) -> StepRecord:
    """Flow and GAN updated in the same step; gradients never cross between them."""
    return training_step(batch, bundle, optimizers, config, state)


@torch.no_grad()
def validation_nll(
    bundle: NoiseModelBundle, patches: Sequence[ImagePair], config: TrainConfig
) -> float:
    """Mean per-sample NLL over un-augmented patches with a fixed dequantization stream."""
    if not patches:
        return math.nan
    dataset = PatchDataset(patches, seed=config.seed, augment_patches=False)
    loader = epoch_loader(dataset, config.batch_size, config.seed, 0, shuffle=False)
    rng = torch_generator(config.seed, VALIDATION_STREAM)
    total, count = 0.0, 0
    for batch in loader:
        batch = _batch_to(batch, config.device)
        ctx = bundle.flow.context(batch["clean"], batch["camera"], batch["iso"])
        noise = dequantize(batch["noisy"] - batch["clean"], rng)
        nll = nll_loss(bundle.flow, noise, ctx)
        total += float(nll.sum())
        count += nll.shape[0]
    return total / count


def _phase(config: TrainConfig, epoch: int) -> Dict[str, bool]:
    if config.strategy == Strategy.TWO_STAGE:
        flow_stage = epoch < config.epochs
        return {"run_flow": flow_stage, "run_gan": not flow_stage}
    return {"run_flow": True, "run_gan": True}


def _total_epochs(config: TrainConfig, bundle: NoiseModelBundle) -> int:
    if config.strategy == Strategy.TWO_STAGE and bundle.generator is not None:
        return 2 * config.epochs
    return config.epochs


def _restore(path: Path, bundle: NoiseModelBundle, optimizers: Optimizers) -> TrainState:
    payload = read_checkpoint(path, NOISE_MODEL)
    for name, module in bundle.components().items():
        restore_component(name, module, payload)
    saved = payload.get("optimizers", {})
    for name, opt in optimizers.items().items():
        if name not in saved:
            raise ConfigurationError(f"Checkpoint {path} has no optimizer state for '{name}'")
        opt.load_state_dict(saved[name])
    if not payload.get("train_state"):
        raise ConfigurationError(f"Checkpoint {path} has no training state to resume from")
    return TrainState.from_dict(payload["train_state"])


def _check_data(manifest: DatasetManifest, config: TrainConfig) -> DatasetManifest:
    filtered = manifest.filter_camera(config.camera_filter)
    if not filtered.entries:
        raise ValidationError(
            "No training data left after filtering",
            details={"camera_filter": config.camera_filter},
        )
    if not filtered.has_noisy:
        raise ValidationError("Training needs noisy/clean pairs for every manifest row")
    return filtered


def train(
    config: TrainConfig,
    manifest: DatasetManifest,
    out_dir: Path,
    resume_from: Optional[Path] = None,
) -> Path:
    """
    Train a noise model and return the path of the best checkpoint.

    Writes `ckpt_epoch{N}.bin` after every epoch and copies the one with the lowest
    validation NLL to `ckpt_best.bin`. A non-finite loss aborts with DivergedError; the
    checkpoints already on disk are kept.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _check_data(manifest, config)
    train_part, val_part = split_by_scene(manifest, config.val_fraction, config.seed)
    patches = extract_dataset_patches(
        train_part, config.patch_size, config.patch_stride, config.num_workers
    )
    val_patches = (
        extract_dataset_patches(val_part, config.patch_size, config.patch_stride, 0)
        if val_part.entries
        else []
    )
    if not val_patches:
        logger.warning("No validation scenes; best checkpoint is chosen by training-set NLL")
        val_patches = patches
    dataset = PatchDataset(patches, seed=config.seed, augment_patches=True)

    bundle = build_noise_model(config, manifest.registry).to(config.device)
    optimizers = build_optimizers(bundle, config)
    state = TrainState(seed=config.seed)
    if resume_from is not None:
        state = _restore(Path(resume_from), bundle, optimizers)
        logger.info("Resuming training", checkpoint=str(resume_from), epoch=state.epoch)

    sink = add_training_log(out_dir / "train.log")
    best_path = out_dir / "ckpt_best.bin"
    total_epochs = _total_epochs(config, bundle)
    logger.info(
        "Training started",
        strategy=config.strategy.value,
        epochs=total_epochs,
        patches=len(patches),
        flow_layers=len(bundle.flow.specs),
        gan=bundle.generator is not None,
    )
    try:
        for epoch in range(state.epoch, total_epochs):
            lr = learning_rate(config.lr_initial, config.lr_halving_period, epoch % config.epochs)
            optimizers.set_lr(lr)
            for module in bundle.components().values():
                module.train()
            for batch in epoch_loader(
                dataset, config.batch_size, config.seed, epoch, num_workers=config.num_workers
            ):
                if config.max_steps is not None and state.step >= config.max_steps:
                    break
                try:
                    record = training_step(
                        _batch_to(batch, config.device),
                        bundle,
                        optimizers,
                        config,
                        state,
                        **_phase(config, epoch),
                    )
                except NumericalError as e:
                    raise DivergedError(
                        f"Training diverged at step {state.step}: {e.message}",
                        last_checkpoint=state.last_checkpoint,
                    )
                training_logger.info(record.as_line())

            try:
                val_nll = validation_nll(bundle, val_patches, config)
            except NumericalError as e:
                raise DivergedError(
                    f"Validation diverged after epoch {epoch}: {e.message}",
                    last_checkpoint=state.last_checkpoint,
                )
            training_logger.info(f"epoch\t{epoch}\tval_nll\t{val_nll:.6g}")

            improved = val_nll <= state.best_val_nll
            if improved:
                state.best_val_nll = val_nll
            state.epoch = epoch + 1
            ckpt = out_dir / f"ckpt_epoch{epoch}.bin"
            state.last_checkpoint = str(ckpt)
            save_noise_model(
                ckpt,
                bundle,
                optimizers.items(),
                state.to_dict(),
                {"train_config": dump_train_config(config)},
            )
            if improved:
                shutil.copyfile(ckpt, best_path)
            logger.info("Epoch finished", epoch=epoch, lr=lr, val_nll=val_nll, step=state.step)
            if config.max_steps is not None and state.step >= config.max_steps:
                break
    finally:
        logger.remove(sink)

    if not best_path.exists() and state.last_checkpoint:
        shutil.copyfile(state.last_checkpoint, best_path)
    logger.info("Training finished", best=str(best_path), steps=state.step)
    return best_path


def iterate_records(lines: Iterable[str]) -> List[StepRecord]:
    """Parse per-step lines of a training log, skipping epoch summaries."""
    records = []
    for line in lines:
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 6 or parts[0] == "epoch":
            continue
        step, nll, wgan, gp, adv, lr = parts
        values = (float(nll), float(wgan), float(gp), float(adv), float(lr))
        records.append(StepRecord(int(step), *values))
    return records
