"""DnCNN-style residual denoiser used to judge synthesized training pairs."""
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class DenoiserSpec:
    depth: int = 9
    channels: int = 48
    residual: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


class DnCNN(nn.Module):
    """
    Conv-BN-ReLU stack predicting the noise of a noisy image.

    With `residual` the network predicts noise and the output is `input - prediction`, and
    since the last convolution starts at zero an untrained residual denoiser is the identity.
    Without it the network regresses the clean image directly.
    """

    def __init__(self, spec: DenoiserSpec = DenoiserSpec(), image_channels: int = 3):
        super().__init__()
        self.spec = spec
        layers = [nn.Conv2d(image_channels, spec.channels, 3, padding=1), nn.ReLU(inplace=True)]
        for _ in range(spec.depth - 2):
            layers += [
                nn.Conv2d(spec.channels, spec.channels, 3, padding=1, bias=False),
                nn.BatchNorm2d(spec.channels),
                nn.ReLU(inplace=True),
            ]
        last = nn.Conv2d(spec.channels, image_channels, 3, padding=1)
        nn.init.zeros_(last.weight)
        nn.init.zeros_(last.bias)
        layers.append(last)
        self.body = nn.Sequential(*layers)

    def forward(self, noisy: torch.Tensor) -> torch.Tensor:
        """Denoise an image on the 0–255 scale."""
        prediction = self.body(noisy / 255.0) * 255.0
        if self.spec.residual:
            return noisy - prediction
        return prediction
