"""Invertible pixel-wise noise model built from conditional linear flow layers."""
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from srgbnoise.utils.errors import NumericalError, UnknownConditionError, ValidationError

LOG_SCALE_BOUND = 8.0
LOG_2PI = math.log(2.0 * math.pi)


class LayerKind(str, Enum):
    """Conditional linear flow layer types."""

    CONDLIN = "condlin"  # condition only, spatially constant
    SDL = "sdl"  # signal dependent, 1×1 receptive field
    SAL = "sal"  # structure aware, 5×5 receptive field


@dataclass(frozen=True)
class FlowLayerSpec:
    kind: LayerKind
    hidden_width: int = 32
    zero_init: bool = True

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "hidden_width": self.hidden_width,
            "zero_init": self.zero_init,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FlowLayerSpec":
        return cls(LayerKind(data["kind"]), int(data["hidden_width"]), bool(data["zero_init"]))


@dataclass
class FlowContext:
    """Conditioning inputs shared by every layer: clean image and condition embedding."""

    clean: torch.Tensor  # B×3×H×W, 0–255 scale
    embedding: torch.Tensor  # B×C_e

    def features(self) -> torch.Tensor:
        """Clean image (scaled to [0, 1]) concatenated with the spatially broadcast embedding."""
        batch, _, height, width = self.clean.shape
        spatial = self.embedding[:, :, None, None].expand(batch, -1, height, width)
        return torch.cat([self.clean / 255.0, spatial.to(self.clean.dtype)], dim=1)


@dataclass
class FlowOutput:
    z: torch.Tensor
    log_det: torch.Tensor  # per sample


@dataclass
class PixelGaussianStats:
    mean: torch.Tensor
    std: torch.Tensor


def dequantize(
    noise: torch.Tensor,
    generator: Optional[torch.Generator] = None,
    offsets: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Add uniform noise on [-0.5, 0.5) to integer-valued noise.

    `offsets` replaces the random draw when given (it must lie in the same interval).
    """
    if offsets is None:
        offsets = torch.rand(noise.shape, generator=generator, dtype=noise.dtype) - 0.5
        offsets = offsets.to(noise.device)
    elif (offsets < -0.5).any() or (offsets >= 0.5).any():
        raise ValidationError("Dequantization offsets must lie in [-0.5, 0.5)")
    return noise + offsets


def quantize(noise: torch.Tensor) -> torch.Tensor:
    """Round half up: maps [n - 0.5, n + 0.5) back to n."""
    return torch.floor(noise + 0.5)


def one_hot(index: torch.Tensor, size: int, name: str) -> torch.Tensor:
    """One-hot encode registry indices, rejecting anything outside the registry."""
    index = torch.as_tensor(index, dtype=torch.long).reshape(-1)
    if index.numel() and (int(index.min()) < 0 or int(index.max()) >= size):
        raise UnknownConditionError(
            f"{name} index outside registry of size {size}",
            details={"indices": index.tolist()},
        )
    return F.one_hot(index, size)


class ResidualBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.body = nn.Sequential(nn.Linear(width, width), nn.SiLU(), nn.Linear(width, width))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class ConditionEncoder(nn.Module):
    """One-hot (camera, ISO) → residual MLP → C_e-dimensional embedding."""

    def __init__(
        self,
        n_cameras: int,
        n_isos: int,
        embed_channels: int = 8,
        n_blocks: int = 2,
        hidden: int = 32,
    ):
        super().__init__()
        self.n_cameras = n_cameras
        self.n_isos = n_isos
        self.embed_channels = embed_channels
        self.inp = nn.Linear(n_cameras + n_isos, hidden)
        self.blocks = nn.Sequential(*[ResidualBlock(hidden) for _ in range(n_blocks)])
        self.out = nn.Linear(hidden, embed_channels)

    def encode_one_hot(self, delta: torch.Tensor, gamma: torch.Tensor) -> torch.Tensor:
        return torch.cat(
            [one_hot(delta, self.n_cameras, "Camera"), one_hot(gamma, self.n_isos, "ISO")], dim=1
        )

    def forward(self, delta: torch.Tensor, gamma: torch.Tensor) -> torch.Tensor:
        code = self.encode_one_hot(delta, gamma).to(self.inp.weight)
        return self.out(self.blocks(F.silu(self.inp(code))))


class PixelNorm(nn.Module):
    """
    Per-pixel normalization across channels with a learned affine.

    Statistics never mix spatial positions, so 1×1 networks keep a one-pixel receptive field.
    """

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(1, channels, 1, 1))
        self.bias = nn.Parameter(torch.zeros(1, channels, 1, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, keepdim=True, unbiased=False)
        return (x - mean) / torch.sqrt(var + self.eps) * self.weight + self.bias


def _zero_(layer: nn.Module) -> nn.Module:
    nn.init.zeros_(layer.weight)
    nn.init.zeros_(layer.bias)
    return layer


class ConditionalLinearFlow(nn.Module):
    """
    Elementwise affine flow `z' = z·exp(s) + b` with (s, b) predicted from the context.

    Subclasses implement `factors`; clamping and finiteness checks happen here so the forward
    and inverse directions always see identical factors.
    """

    kind: LayerKind

    def __init__(self, spec: FlowLayerSpec):
        super().__init__()
        self.spec = spec

    def factors(self, ctx: FlowContext) -> Tuple[torch.Tensor, torch.Tensor]:
        raise NotImplementedError

    def scale_and_bias(
        self, ctx: FlowContext, shape: torch.Size
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        log_scale, bias = self.factors(ctx)
        log_scale = torch.clamp(log_scale, -LOG_SCALE_BOUND, LOG_SCALE_BOUND).expand(shape)
        bias = bias.expand(shape)
        if not (torch.isfinite(log_scale).all() and torch.isfinite(bias).all()):
            raise NumericalError(f"Non-finite factors in {self.kind.value} layer")
        return log_scale, bias

    def forward(self, z: torch.Tensor, ctx: FlowContext) -> Tuple[torch.Tensor, torch.Tensor]:
        log_scale, bias = self.scale_and_bias(ctx, z.shape)
        return z * torch.exp(log_scale) + bias, log_scale.flatten(1).sum(dim=1)

    def inverse(self, z_next: torch.Tensor, ctx: FlowContext) -> torch.Tensor:
        log_scale, bias = self.scale_and_bias(ctx, z_next.shape)
        return (z_next - bias) * torch.exp(-log_scale)


class CondLinearFlow(ConditionalLinearFlow):
    """Per-channel scale and bias from the camera condition alone."""

    kind = LayerKind.CONDLIN

    def __init__(self, spec: FlowLayerSpec, embed_channels: int, channels: int = 3):
        super().__init__(spec)
        self.channels = channels
        last = nn.Linear(spec.hidden_width, 2 * channels)
        self.net = nn.Sequential(
            nn.Linear(embed_channels, spec.hidden_width),
            nn.SiLU(),
            _zero_(last) if spec.zero_init else last,
        )

    def factors(self, ctx: FlowContext) -> Tuple[torch.Tensor, torch.Tensor]:
        out = self.net(ctx.embedding.to(ctx.clean.dtype))
        log_scale, bias = out[:, : self.channels], out[:, self.channels :]
        return log_scale[:, :, None, None], bias[:, :, None, None]


class SignalDependentFlow(ConditionalLinearFlow):
    """Scale and bias from each pixel's clean intensity and the condition (1×1 convolutions)."""

    kind = LayerKind.SDL

    def __init__(self, spec: FlowLayerSpec, embed_channels: int, channels: int = 3):
        super().__init__(spec)
        width = spec.hidden_width
        last = nn.Conv2d(width, 2 * channels, 1)
        self.net = nn.Sequential(
            nn.Conv2d(channels + embed_channels, width, 1),
            PixelNorm(width),
            nn.SiLU(),
            nn.Conv2d(width, width, 1),
            PixelNorm(width),
            nn.SiLU(),
            _zero_(last) if spec.zero_init else last,
        )

    def factors(self, ctx: FlowContext) -> Tuple[torch.Tensor, torch.Tensor]:
        return torch.chunk(self.net(ctx.features()), 2, dim=1)


class StructureAwareFlow(ConditionalLinearFlow):
    """Scale and bias from the 5×5 clean neighbourhood and the condition (two 3×3 stages)."""

    kind = LayerKind.SAL
    receptive_field = 5

    def __init__(self, spec: FlowLayerSpec, embed_channels: int, channels: int = 3):
        super().__init__(spec)
        width = spec.hidden_width
        last = nn.Conv2d(width, 2 * channels, 1)
        self.net = nn.Sequential(
            nn.Conv2d(channels + embed_channels, width, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, width, 3, padding=1),
            nn.SiLU(),
            _zero_(last) if spec.zero_init else last,
        )

    def factors(self, ctx: FlowContext) -> Tuple[torch.Tensor, torch.Tensor]:
        return torch.chunk(self.net(ctx.features()), 2, dim=1)


LAYER_TYPES = {
    LayerKind.CONDLIN: CondLinearFlow,
    LayerKind.SDL: SignalDependentFlow,
    LayerKind.SAL: StructureAwareFlow,
}

DEFAULT_PATTERN = (LayerKind.CONDLIN, LayerKind.SDL, LayerKind.SAL)


def build_flow_specs(
    n_layers: int = 6,
    hidden_width: int = 32,
    enable_condlin: bool = True,
    enable_sdl: bool = True,
    enable_sal: bool = True,
) -> List[FlowLayerSpec]:
    """[CONDLIN, SDL, SAL] repeated to `n_layers`, with disabled kinds dropped."""
    enabled = {
        LayerKind.CONDLIN: enable_condlin,
        LayerKind.SDL: enable_sdl,
        LayerKind.SAL: enable_sal,
    }
    kinds = [DEFAULT_PATTERN[i % len(DEFAULT_PATTERN)] for i in range(n_layers)]
    return [FlowLayerSpec(kind, hidden_width) for kind in kinds if enabled[kind]]


class FlowStack(nn.Module):
    """
    Ordered conditional flow layers mapping noise n = z⁽⁰⁾ to latent z = z⁽ᴸ⁾.

    The base distribution is a standard normal per element. An empty stack is the identity
    (used by the GAN-only ablation) and owns no parameters.
    """

    def __init__(
        self,
        specs: Sequence[FlowLayerSpec],
        n_cameras: int,
        n_isos: int,
        embed_channels: int = 8,
        encoder_blocks: int = 2,
    ):
        super().__init__()
        self.specs = tuple(specs)
        self.n_cameras = n_cameras
        self.n_isos = n_isos
        self.embed_channels = embed_channels
        self.encoder_blocks = encoder_blocks
        self.encoder = (
            ConditionEncoder(n_cameras, n_isos, embed_channels, encoder_blocks)
            if self.specs
            else None
        )
        self.layers = nn.ModuleList(
            LAYER_TYPES[spec.kind](spec, embed_channels) for spec in self.specs
        )

    def context(
        self, clean: torch.Tensor, delta: torch.Tensor, gamma: torch.Tensor
    ) -> FlowContext:
        """Build the conditioning context, validating registry indices."""
        delta = torch.as_tensor(delta, dtype=torch.long, device=clean.device).reshape(-1)
        gamma = torch.as_tensor(gamma, dtype=torch.long, device=clean.device).reshape(-1)
        if self.encoder is not None:
            embedding = self.encoder(delta, gamma)
        else:
            one_hot(delta, self.n_cameras, "Camera")
            one_hot(gamma, self.n_isos, "ISO")
            embedding = clean.new_zeros(clean.shape[0], 0)
        if embedding.shape[0] != clean.shape[0]:
            embedding = embedding.expand(clean.shape[0], -1)
        return FlowContext(clean=clean, embedding=embedding)

    def forward(self, noise: torch.Tensor, ctx: FlowContext) -> FlowOutput:
        z = noise
        log_det = noise.new_zeros(noise.shape[0])
        for layer in self.layers:
            z, layer_log_det = layer(z, ctx)
            log_det = log_det + layer_log_det
        return FlowOutput(z=z, log_det=log_det)

    def inverse(self, z: torch.Tensor, ctx: FlowContext) -> torch.Tensor:
        for layer in reversed(self.layers):
            z = layer.inverse(z, ctx)
        return z


def base_log_prob(z: torch.Tensor) -> torch.Tensor:
    """Standard-normal log density summed per sample."""
    return -0.5 * (z.pow(2) + LOG_2PI).flatten(1).sum(dim=1)


def nll_loss(stack: FlowStack, noise: torch.Tensor, ctx: FlowContext) -> torch.Tensor:
    """
    Exact negative log-likelihood of (dequantized) noise, per sample.

    Returns `-log p_z(F(n)) - Σ log|det DF|`; average over the batch for optimization.
    """
    out = stack(noise, ctx)
    nll = -base_log_prob(out.z) - out.log_det
    if not torch.isfinite(nll).all():
        raise NumericalError("Non-finite negative log-likelihood")
    return nll


def sample_pixelwise(
    stack: FlowStack,
    clean: torch.Tensor,
    delta: torch.Tensor,
    gamma: torch.Tensor,
    generator: Optional[torch.Generator] = None,
    temperature: float = 1.0,
) -> torch.Tensor:
    """Draw continuous pixel-wise noise n' = F⁻¹(z | x, δ, γ) with z ~ N(0, T²)."""
    ctx = stack.context(clean, delta, gamma)
    z = torch.randn(clean.shape, generator=generator, dtype=clean.dtype).to(clean.device)
    return stack.inverse(z * temperature, ctx)


@torch.no_grad()
def pixel_stats(
    stack: FlowStack,
    clean: torch.Tensor,
    delta: torch.Tensor,
    gamma: torch.Tensor,
    n_samples: int,
    generator: Optional[torch.Generator] = None,
) -> PixelGaussianStats:
    """Monte-Carlo per-pixel mean and std of the synthesized pixel-wise noise."""
    if n_samples < 100:
        raise ValidationError(f"pixel_stats needs at least 100 samples, got {n_samples}")
    total = torch.zeros_like(clean, dtype=torch.float64)
    total_sq = torch.zeros_like(clean, dtype=torch.float64)
    for _ in range(n_samples):
        sample = sample_pixelwise(stack, clean, delta, gamma, generator).double()
        total += sample
        total_sq += sample * sample
    mean = total / n_samples
    var = (total_sq - n_samples * mean * mean) / (n_samples - 1)
    std = var.clamp_min(0).sqrt()
    return PixelGaussianStats(mean=mean.to(clean.dtype), std=std.to(clean.dtype))
