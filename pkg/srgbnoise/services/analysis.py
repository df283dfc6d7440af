"""Noise statistics: heteroscedastic fit, std-vs-intensity curve, spatial correlation."""
from collections import defaultdict
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import torch
from loguru import logger

from srgbnoise.models.dataset import ImagePair
from srgbnoise.models.statistics import (
    CorrelationPoint,
    CorrelationProfile,
    HeteroParams,
    IntensityBin,
    OffsetCorrelation,
    StdIntensityCurve,
)
from srgbnoise.utils.errors import FitError, InsufficientDataError, ValidationError

HETERO_BIN_WIDTH = 8
MIN_BIN_COUNT = 100
MIN_PIXELS = 10_000

Field = Union[np.ndarray, torch.Tensor]


def _noisy_pairs(pairs: Sequence[ImagePair]) -> List[ImagePair]:
    noisy = [p for p in pairs if p.noisy is not None]
    if not noisy:
        raise InsufficientDataError("No noisy images to analyze")
    return noisy


def _channel_samples(pairs: Sequence[ImagePair]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack clean intensities and noise values as (3, N) float64 arrays."""
    clean = np.concatenate([p.clean.reshape(-1, 3) for p in pairs]).astype(np.float64)
    noisy = np.concatenate([p.noisy.reshape(-1, 3) for p in pairs]).astype(np.float64)
    return clean.T, (noisy - clean).T


def _binned_moments(
    index: np.ndarray, values: np.ndarray, weights: np.ndarray, n_bins: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-bin count, mean of `weights` and sample variance of `values` (two-pass)."""
    count = np.bincount(index, minlength=n_bins)
    safe = np.maximum(count, 1)
    mean_weight = np.bincount(index, weights=weights, minlength=n_bins) / safe
    mean_value = np.bincount(index, weights=values, minlength=n_bins) / safe
    centered = values - mean_value[index]
    sq = np.bincount(index, weights=centered * centered, minlength=n_bins)
    var = np.where(count > 1, sq / np.maximum(count - 1, 1), 0.0)
    return count, mean_weight, var


def estimate_hetero(
    pairs: Sequence[ImagePair],
    bin_width: float = HETERO_BIN_WIDTH,
    min_count: int = MIN_BIN_COUNT,
) -> HeteroParams:
    """
    Fit var(noise) = beta_s_sq·intensity + beta_c_sq per channel.

    Pixels are binned by clean intensity; bins with at least `min_count` pixels enter a plain
    least-squares fit of bin variance on mean bin intensity. Negative fits are clamped to 0
    and flagged.
    """
    clean, noise = _channel_samples(_noisy_pairs(pairs))
    if clean.shape[1] < MIN_PIXELS:
        raise InsufficientDataError(
            f"Need at least {MIN_PIXELS} pixels per channel, got {clean.shape[1]}"
        )

    n_bins = int(256 // bin_width) + 1
    slopes, floors, clamped = [], [], []
    for c in range(3):
        index = np.clip(np.floor(clean[c] / bin_width), 0, n_bins - 1).astype(np.int64)
        count, intensity, var = _binned_moments(index, noise[c], clean[c], n_bins)
        keep = count >= min_count
        if keep.sum() < 2 or np.ptp(intensity[keep]) == 0:
            raise FitError(
                f"Channel {c}: fewer than two intensity bins with {min_count}+ pixels",
                details={"qualifying_bins": int(keep.sum())},
            )
        design = np.stack([intensity[keep], np.ones(int(keep.sum()))], axis=1)
        (slope, floor), *_ = np.linalg.lstsq(design, var[keep], rcond=None)
        if not (np.isfinite(slope) and np.isfinite(floor)):
            raise FitError(f"Channel {c}: least-squares fit is not finite")
        clamped.append(bool(slope < 0 or floor < 0))
        slopes.append(float(max(slope, 0.0)))
        floors.append(float(max(floor, 0.0)))

    params = HeteroParams(tuple(slopes), tuple(floors), tuple(clamped))
    logger.info(
        "Heteroscedastic fit",
        beta_s_sq=params.beta_s_sq,
        beta_c_sq=params.beta_c_sq,
        clamped=params.clamped,
    )
    return params


def std_vs_intensity(
    pairs: Sequence[ImagePair], n_bins: int = 32, min_count: int = MIN_BIN_COUNT
) -> StdIntensityCurve:
    """Per-channel sample std of noise in equal-width clean-intensity bins over [0, 255]."""
    if n_bins < 2:
        raise ValidationError(f"n_bins must be at least 2, got {n_bins}")
    clean, noise = _channel_samples(_noisy_pairs(pairs))
    width = 255.0 / n_bins
    centers = (np.arange(n_bins) + 0.5) * width

    bins = []
    for c in range(3):
        index = np.clip(np.floor(clean[c] / width), 0, n_bins - 1).astype(np.int64)
        count, _, var = _binned_moments(index, noise[c], clean[c], n_bins)
        for b in range(n_bins):
            bins.append(
                IntensityBin(
                    channel=c,
                    intensity_center=float(centers[b]),
                    std=float(np.sqrt(var[b])),
                    count=int(count[b]),
                    reliable=bool(count[b] >= min_count),
                )
            )
    return StdIntensityCurve(tuple(bins))


def _as_channels(field: Field) -> np.ndarray:
    """
    Normalize a field to (C, H, W) float64.

    Tensors are C×H×W, arrays H×W×C, and a 2-D input is a single channel.
    """
    if isinstance(field, torch.Tensor):
        data = field.detach().cpu().double().numpy()
        return data[None] if data.ndim == 2 else data
    data = np.asarray(field, dtype=np.float64)
    return data[None] if data.ndim == 2 else data.transpose(2, 0, 1)


def _overlap(field: np.ndarray, dx: int, dy: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pixel pairs (p, p + (dx, dy)) over the valid overlap; dx runs along columns."""
    h, w = field.shape
    a = field[max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)]
    b = field[max(0, dy) : h - max(0, -dy), max(0, dx) : w - max(0, -dx)]
    return a, b


def pearson(a: np.ndarray, b: np.ndarray) -> Tuple[float, bool]:
    """Two-pass Pearson r; zero variance on either side gives (0.0, degenerate)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.dot(da, da) * np.dot(db, db))
    if denom == 0 or not np.isfinite(denom):
        return 0.0, True
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0)), False


def pearson_at_offset(field: np.ndarray, dx: int, dy: int) -> Tuple[float, int, bool]:
    """Pearson r of a 2-D field against its (dx, dy) shift, with the pair count."""
    a, b = _overlap(np.asarray(field, dtype=np.float64), dx, dy)
    r, degenerate = pearson(a, b)
    return r, a.size, degenerate


def correlation_offsets(max_distance: int) -> List[Tuple[int, int]]:
    """Integer offsets with 1 ≤ |(dx, dy)| ≤ max_distance, one per ± pair."""
    limit = max_distance * max_distance
    offsets = []
    for dy in range(0, max_distance + 1):
        for dx in range(-max_distance, max_distance + 1):
            if dy == 0 and dx <= 0:
                continue
            if 1 <= dx * dx + dy * dy <= limit:
                offsets.append((dx, dy))
    return sorted(offsets, key=lambda o: (o[0] ** 2 + o[1] ** 2, o[1], o[0]))


def spatial_correlation(fields: Sequence[Field], max_distance: int = 3) -> CorrelationProfile:
    """
    Pearson spatial-correlation profile of noise fields.

    Every offset within `max_distance` is evaluated per field and channel. Non-degenerate
    values are averaged weighted by pixel-pair count, first per offset and then across
    offsets sharing one Euclidean distance.
    """
    if max_distance < 1:
        raise ValidationError(f"max_distance must be at least 1, got {max_distance}")
    if not fields:
        raise ValidationError("No noise fields to correlate")
    stacks = [_as_channels(f) for f in fields]
    for s in stacks:
        if s.shape[1] <= max_distance or s.shape[2] <= max_distance:
            raise ValidationError(
                f"Field {s.shape[1]}×{s.shape[2]} is too small for max_distance {max_distance}",
                details={"min_side": max_distance + 1},
            )

    offsets = []
    for dx, dy in correlation_offsets(max_distance):
        weighted, weight, pairs = 0.0, 0, 0
        for stack in stacks:
            for channel in stack:
                r, count, degenerate = pearson_at_offset(channel, dx, dy)
                pairs += count
                if not degenerate:
                    weighted += r * count
                    weight += count
        offsets.append(
            OffsetCorrelation(
                dx=dx,
                dy=dy,
                r=float(np.clip(weighted / weight, -1.0, 1.0)) if weight else 0.0,
                count=pairs,
                degenerate=weight == 0,
            )
        )

    by_distance: Dict[int, List[OffsetCorrelation]] = defaultdict(list)
    for o in offsets:
        by_distance[o.distance_sq].append(o)
    points = []
    for d_sq in sorted(by_distance):
        group = by_distance[d_sq]
        usable = [o for o in group if not o.degenerate]
        weight = sum(o.count for o in usable)
        r = sum(o.r * o.count for o in usable) / weight if weight else 0.0
        points.append(
            CorrelationPoint(
                distance=float(np.sqrt(d_sq)),
                r=float(np.clip(r, -1.0, 1.0)),
                count=sum(o.count for o in group),
                degenerate=not usable,
            )
        )

    logger.debug("Spatial correlation computed", fields=len(stacks), distances=len(points))
    return CorrelationProfile(points=tuple(points), offsets=tuple(offsets))
