"""Noise-model quality metrics: histogram KL divergence, PSNR, SSIM and baselines."""
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from loguru import logger

from srgbnoise.models.dataset import DatasetManifest, ImagePair
from srgbnoise.models.statistics import HeteroParams, KLRow, NoiseHistogram
from srgbnoise.services.analysis import estimate_hetero
from srgbnoise.services.checkpoint import NoiseModelBundle
from srgbnoise.services.dataset import load_pair, quantize_8bit
from srgbnoise.services.synthesis import synthesize_image
from srgbnoise.utils.errors import FitError, InsufficientDataError, ValidationError
from srgbnoise.utils.seeding import derive_seed, torch_generator

HIST_LOW = -260.0
HIST_HIGH = 260.0
HIST_BINS = 130
HIST_WIDTH = (HIST_HIGH - HIST_LOW) / HIST_BINS
KL_SMOOTHING = 1e-12
PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2


Values = Union[np.ndarray, torch.Tensor]


def _as_numpy(values: Values) -> np.ndarray:
    if isinstance(values, torch.Tensor):
        return values.detach().cpu().double().numpy()
    return np.asarray(values, dtype=np.float64)


def histogram(values: Union[Values, Iterable[Values]]) -> NoiseHistogram:
    """
    Bin noise values into 130 bins of width 4 over [-260, 260).

    Accepts one array/tensor or an iterable of them. Values outside the range are tallied in
    the underflow/overflow counters and carry no KL mass.
    """
    chunks = [values] if isinstance(values, (np.ndarray, torch.Tensor)) else values
    counts = np.zeros(HIST_BINS, dtype=np.int64)
    underflow = overflow = 0
    for chunk in chunks:
        data = _as_numpy(chunk).ravel()
        if not np.isfinite(data).all():
            raise ValidationError("Histogram input contains non-finite values")
        index = np.floor((data - HIST_LOW) / HIST_WIDTH).astype(np.int64)
        underflow += int((index < 0).sum())
        overflow += int((index >= HIST_BINS).sum())
        inside = index[(index >= 0) & (index < HIST_BINS)]
        counts += np.bincount(inside, minlength=HIST_BINS)
    edges = tuple(float(HIST_LOW + i * HIST_WIDTH) for i in range(HIST_BINS + 1))
    return NoiseHistogram(
        edges=edges, counts=tuple(int(c) for c in counts), underflow=underflow, overflow=overflow
    )


def merge_histograms(histograms: Sequence[NoiseHistogram]) -> NoiseHistogram:
    if not histograms:
        raise ValidationError("No histograms to merge")
    counts = np.sum([h.counts for h in histograms], axis=0)
    return NoiseHistogram(
        edges=histograms[0].edges,
        counts=tuple(int(c) for c in counts),
        underflow=sum(h.underflow for h in histograms),
        overflow=sum(h.overflow for h in histograms),
    )


def kl_from_probabilities(
    p: Sequence[float], q: Sequence[float], smoothing: float = KL_SMOOTHING
) -> float:
    """Σ p·ln(p/q) after adding `smoothing` to every bin and renormalizing."""
    p = np.asarray(p, dtype=np.float64) + smoothing
    q = np.asarray(q, dtype=np.float64) + smoothing
    p, q = p / p.sum(), q / q.sum()
    return float(max(np.sum(p * np.log(p / q)), 0.0))


def kl_divergence(real: NoiseHistogram, synth: NoiseHistogram) -> float:
    """Discrete KL(real ‖ synth) over the in-range bins."""
    if real.total == 0 or synth.total == 0:
        raise ValidationError("KL divergence needs two non-empty histograms")
    real_counts = np.asarray(real.counts, dtype=np.float64)
    synth_counts = np.asarray(synth.counts, dtype=np.float64)
    if real_counts.sum() == 0 or synth_counts.sum() == 0:
        raise ValidationError("A histogram has no values inside [-260, 260)")
    return kl_from_probabilities(
        real_counts / real_counts.sum(), synth_counts / synth_counts.sum()
    )


def _check_same_shape(a: Values, b: Values) -> Tuple[torch.Tensor, torch.Tensor]:
    a = torch.as_tensor(_as_numpy(a))
    b = torch.as_tensor(_as_numpy(b))
    if a.shape != b.shape:
        raise ValidationError(f"Image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return a, b


def psnr(a: Values, b: Values) -> float:
    """10·log10(255² / MSE) in dB, capped at 100 dB for identical images."""
    a, b = _check_same_shape(a, b)
    mse = float(torch.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(255.0**2 / mse)))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(a: Values, b: Values) -> float:
    """
    Mean structural similarity over channels.

    Images are H×W×C (or H×W) on the 0–255 scale; local statistics use an 11×11 Gaussian
    window with σ = 1.5 over the valid region.
    """
    a, b = _check_same_shape(a, b)
    if a.dim() == 2:
        a, b = a[..., None], b[..., None]
    height, width = a.shape[:2]
    if min(height, width) < SSIM_WINDOW:
        raise ValidationError(
            f"SSIM needs images of at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {height}×{width}"
        )
    x = a.permute(2, 0, 1)[:, None]
    y = b.permute(2, 0, 1)[:, None]
    window = _gaussian_window()[None, None]

    def blur(t: torch.Tensor) -> torch.Tensor:
        return F.conv2d(t, window)

    mu_x, mu_y = blur(x), blur(y)
    sigma_xx = blur(x * x) - mu_x**2
    sigma_yy = blur(y * y) - mu_y**2
    sigma_xy = blur(x * y) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + SSIM_C1) * (2 * sigma_xy + SSIM_C2)
    denominator = (mu_x**2 + mu_y**2 + SSIM_C1) * (sigma_xx + sigma_yy + SSIM_C2)
    return float((numerator / denominator).mean())


class NoiseSampler:
    """Synthesizes a noisy image for a clean image; subclasses define the noise model."""

    method = "base"

    def sample(self, pair: ImagePair, seed: int) -> np.ndarray:
        raise NotImplementedError


@dataclass
class AWGNSampler(NoiseSampler):
    """Signal-independent Gaussian noise with one fitted σ per channel."""

    sigma: Tuple[float, float, float]
    method = "awgn"

    @classmethod
    def fit(cls, pairs: Sequence[ImagePair]) -> "AWGNSampler":
        noise = np.concatenate([(p.noisy - p.clean).reshape(-1, 3) for p in pairs])
        return cls(sigma=tuple(float(s) for s in noise.astype(np.float64).std(axis=0)))

    def sample(self, pair: ImagePair, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(pair.clean.shape) * np.asarray(self.sigma)
        return quantize_8bit(pair.clean + noise)


@dataclass
class HeteroSampler(NoiseSampler):
    """Heteroscedastic Gaussian noise with variance affine in clean intensity."""

    params: HeteroParams
    method = "hetero"

    @classmethod
    def fit(cls, pairs: Sequence[ImagePair]) -> "HeteroSampler":
        return cls(params=estimate_hetero(pairs))

    def sample(self, pair: ImagePair, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        var = pair.clean * np.asarray(self.params.beta_s_sq) + np.asarray(self.params.beta_c_sq)
        noise = rng.standard_normal(pair.clean.shape) * np.sqrt(np.maximum(var, 0.0))
        return quantize_8bit(pair.clean + noise)


class ModelSampler(NoiseSampler):
    """Samples from a trained noise model."""

    method = "model"

    def __init__(self, bundle: NoiseModelBundle, temperature: float = 1.0, device: str = "cpu"):
        self.bundle = bundle
        self.temperature = temperature
        self.device = device

    def sample(self, pair: ImagePair, seed: int) -> np.ndarray:
        noisy, _ = synthesize_image(
            self.bundle,
            pair.clean,
            pair.condition,
            torch_generator(seed),
            self.temperature,
            self.device,
        )
        return noisy


def _fit_baselines(pairs: Sequence[ImagePair]) -> List[NoiseSampler]:
    samplers: List[NoiseSampler] = [AWGNSampler.fit(pairs)]
    try:
        samplers.append(HeteroSampler.fit(pairs))
    except (FitError, InsufficientDataError) as e:
        logger.warning("Heteroscedastic baseline skipped", reason=e.message)
    return samplers


def kl_report(
    manifest: DatasetManifest,
    bundle: Optional[NoiseModelBundle] = None,
    seed: int = 0,
    baselines: bool = True,
    temperature: float = 1.0,
    device: str = "cpu",
) -> List[KLRow]:
    """
    KL(real ‖ synthesized) per (camera, ISO) group, per camera and overall.

    Noise values are pooled per group before the KL is taken; a camera's value is the mean
    over its groups and `overall` is the mean over all groups. Baseline samplers are fitted
    on each group's own real pairs. Synthesized and real noise are both measured after
    8-bit quantization.
    """
    if not manifest.has_noisy:
        raise ValidationError("KL evaluation needs noisy/clean pairs")

    groups: Dict[Tuple[str, int], List[int]] = defaultdict(list)
    for index, entry in enumerate(manifest.entries):
        groups[(entry.camera_name, entry.iso_value)].append(index)

    model = ModelSampler(bundle, temperature, device) if bundle is not None else None
    rows: List[KLRow] = []
    for (camera, iso), indices in sorted(groups.items()):
        registry = bundle.registry if bundle is not None else manifest.registry
        pairs = [load_pair(manifest.entries[i], registry) for i in indices]
        real = histogram([p.noisy - p.clean for p in pairs])
        samplers: List[NoiseSampler] = [model] if model is not None else []
        if baselines:
            samplers += _fit_baselines(pairs)
        for sampler in samplers:
            synth = histogram(
                [
                    sampler.sample(p, derive_seed(seed, i)) - p.clean
                    for i, p in zip(indices, pairs)
                ]
            )
            rows.append(
                KLRow(camera, iso, sampler.method, kl_divergence(real, synth), real.total)
            )

    rows += _aggregate(rows)
    for row in rows:
        logger.info("KL divergence", camera=row.camera, iso=row.iso, method=row.method, kl=row.kl)
    return rows


def _aggregate(group_rows: Sequence[KLRow]) -> List[KLRow]:
    per_camera: Dict[Tuple[str, str], List[KLRow]] = defaultdict(list)
    per_method: Dict[str, List[KLRow]] = defaultdict(list)
    for row in group_rows:
        per_camera[(row.camera, row.method)].append(row)
        per_method[row.method].append(row)
    summary = [
        KLRow(
            camera,
            None,
            method,
            float(np.mean([r.kl for r in rows])),
            sum(r.n_values for r in rows),
        )
        for (camera, method), rows in sorted(per_camera.items())
    ]
    summary += [
        KLRow(
            "overall",
            None,
            method,
            float(np.mean([r.kl for r in rows])),
            sum(r.n_values for r in rows),
        )
        for method, rows in sorted(per_method.items())
    ]
    return summary
