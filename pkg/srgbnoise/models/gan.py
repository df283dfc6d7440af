"""Spatial-correlation refiner: residual U-Net generator, VGG-style critic and WGAN-GP losses."""
from dataclasses import dataclass
from typing import Callable, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from srgbnoise.utils.errors import ConfigurationError, NumericalError

LAMBDA = 0.5
ALPHA = 10.0

Critic = Callable[[torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class GeneratorSpec:
    unet_depth: int = 3
    base_channels: int = 32

    def to_dict(self) -> dict:
        return {"unet_depth": self.unet_depth, "base_channels": self.base_channels}


@dataclass(frozen=True)
class CriticSpec:
    conv_stages: int = 4
    base_channels: int = 32

    def to_dict(self) -> dict:
        return {"conv_stages": self.conv_stages, "base_channels": self.base_channels}


@dataclass
class GanLossTerms:
    wgan: torch.Tensor
    gp: torch.Tensor
    total: torch.Tensor
    lam: float = LAMBDA
    alpha: float = ALPHA
    adv: Optional[torch.Tensor] = None


def _conv_block(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, 3, padding=1),
        nn.LeakyReLU(0.2, inplace=True),
        nn.Conv2d(out_channels, out_channels, 3, padding=1),
        nn.LeakyReLU(0.2, inplace=True),
    )


class UNetGenerator(nn.Module):
    """
    U-Net predicting a residual correction G(n') for pixel-wise noise n'.

    Inputs whose sides are not multiples of 2^depth are reflect-padded and cropped back.
    The output convolution starts at zero, so a fresh generator leaves n' unchanged.
    """

    def __init__(
        self, spec: GeneratorSpec = GeneratorSpec(), channels: int = 3, noise_scale: float = 8.0
    ):
        super().__init__()
        self.spec = spec
        self.noise_scale = noise_scale
        widths = [spec.base_channels * 2 ** min(i, 3) for i in range(spec.unet_depth + 1)]
        self.inc = _conv_block(channels, widths[0])
        self.downs = nn.ModuleList(
            _conv_block(widths[i], widths[i + 1]) for i in range(spec.unet_depth)
        )
        self.reduce = nn.ModuleList(
            nn.Conv2d(widths[i + 1], widths[i], 1) for i in range(spec.unet_depth)
        )
        self.ups = nn.ModuleList(
            _conv_block(2 * widths[i], widths[i]) for i in range(spec.unet_depth)
        )
        self.out = nn.Conv2d(widths[0], channels, 1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, noise: torch.Tensor) -> torch.Tensor:
        height, width = noise.shape[-2:]
        multiple = 2 ** self.spec.unet_depth
        pad_h, pad_w = (-height) % multiple, (-width) % multiple
        x = noise / self.noise_scale
        if pad_h or pad_w:
            mode = "reflect" if pad_h < height and pad_w < width else "replicate"
            x = F.pad(x, (0, pad_w, 0, pad_h), mode=mode)

        skips = [self.inc(x)]
        for down in self.downs:
            skips.append(down(F.avg_pool2d(skips[-1], 2)))
        h = skips.pop()
        for level in reversed(range(self.spec.unet_depth)):
            h = self.reduce[level](F.interpolate(h, scale_factor=2, mode="nearest"))
            h = self.ups[level](torch.cat([h, skips.pop()], dim=1))
        residual = self.out(h) * self.noise_scale
        return residual[..., :height, :width]


class VGGCritic(nn.Module):
    """
    VGG-style critic D(x ∥ n) scoring a clean image concatenated with a noise field.

    Stacked 3×3 stages with stride-2 downsampling, global average pooling and a scalar head.
    No normalization layers, so per-sample gradient penalties stay well defined.
    """

    def __init__(
        self, spec: CriticSpec = CriticSpec(), in_channels: int = 6, noise_scale: float = 8.0
    ):
        super().__init__()
        self.spec = spec
        self.noise_scale = noise_scale
        layers = []
        channels_in = in_channels
        for stage in range(spec.conv_stages):
            channels = spec.base_channels * 2 ** min(stage, 3)
            layers += [
                nn.Conv2d(channels_in, channels, 3, padding=1),
                nn.LeakyReLU(0.2),
                nn.Conv2d(channels, channels, 3, stride=2, padding=1),
                nn.LeakyReLU(0.2),
            ]
            channels_in = channels
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(channels_in, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        clean, noise = x[:, :3] / 255.0, x[:, 3:] / self.noise_scale
        h = self.features(torch.cat([clean, noise], dim=1))
        return self.head(h.mean(dim=(2, 3))).squeeze(1)


def refine(generator_net: Optional[UNetGenerator], n_prime: torch.Tensor) -> torch.Tensor:
    """ñ = G(n') + n'. A missing generator (flow-only ablation) is the identity."""
    if generator_net is None:
        return n_prime
    if not torch.isfinite(n_prime).all():
        raise NumericalError("Pixel-wise noise passed to the generator is not finite")
    n_tilde = generator_net(n_prime) + n_prime
    if not torch.isfinite(n_tilde).all():
        raise NumericalError("Generator produced non-finite activations")
    return n_tilde


def critic_input(clean: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    """Channel-wise concatenation x ∥ n."""
    return torch.cat([clean, noise], dim=1)


def adversarial_loss(
    critic: Critic,
    generator_net: Optional[UNetGenerator],
    clean: torch.Tensor,
    n_prime: torch.Tensor,
    lam: float = LAMBDA,
    stop_gradient: bool = True,
) -> torch.Tensor:
    """Generator loss `-λ·D(x ∥ G(sg(n')) + sg(n'))`, batch-averaged."""
    source = n_prime.detach() if stop_gradient else n_prime
    return -lam * critic(critic_input(clean, refine(generator_net, source))).mean()


def wasserstein_term(
    critic: Critic, clean: torch.Tensor, real_noise: torch.Tensor, fake_noise: torch.Tensor
) -> torch.Tensor:
    """D(x ∥ fake) − D(x ∥ real), batch-averaged."""
    fake_score = critic(critic_input(clean, fake_noise)).mean()
    real_score = critic(critic_input(clean, real_noise)).mean()
    return fake_score - real_score


def gradient_penalty(
    critic: Critic,
    real: torch.Tensor,
    fake: torch.Tensor,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """
    (‖∇D(x̂)‖₂ − 1)² at x̂ = ε·real + (1 − ε)·fake, one ε ~ U(0, 1) per sample.

    `real` and `fake` are full critic inputs (x ∥ noise); the norm runs over all elements of
    a sample. A critic whose output does not depend on x̂ has zero gradient.
    """
    if not torch.is_grad_enabled():
        raise ConfigurationError("Gradient penalty needs autograd; it was called under no_grad")
    batch = real.shape[0]
    eps = torch.rand((batch, 1, 1, 1), generator=generator, dtype=real.dtype).to(real.device)
    x_hat = (eps * real.detach() + (1 - eps) * fake.detach()).requires_grad_(True)
    score = critic(x_hat)
    grads = None
    if score.requires_grad:
        (grads,) = torch.autograd.grad(
            score.sum(), x_hat, create_graph=True, retain_graph=True, allow_unused=True
        )
    if grads is None:
        grads = torch.zeros_like(x_hat)
    norm = grads.flatten(1).norm(2, dim=1)
    return ((norm - 1.0) ** 2).mean()


def critic_loss(
    critic: Critic,
    generator_net: Optional[UNetGenerator],
    clean: torch.Tensor,
    real_noise: torch.Tensor,
    n_prime: torch.Tensor,
    generator: Optional[torch.Generator] = None,
    lam: float = LAMBDA,
    alpha: float = ALPHA,
) -> GanLossTerms:
    """Critic loss `λ·(L_wgan + α·L_gp)` on refined, detached pixel-wise noise."""
    with torch.no_grad():
        fake_noise = refine(generator_net, n_prime.detach())
    wgan = wasserstein_term(critic, clean, real_noise, fake_noise)
    gp = gradient_penalty(
        critic, critic_input(clean, real_noise), critic_input(clean, fake_noise), generator
    )
    total = lam * (wgan + alpha * gp)
    if not torch.isfinite(total):
        raise NumericalError("Non-finite critic loss")
    return GanLossTerms(wgan=wgan, gp=gp, total=total, lam=lam, alpha=alpha)
