"""Noise statistics and evaluation result types."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

CHANNELS = ("R", "G", "B")


@dataclass(frozen=True)
class HeteroParams:
    """Per-channel heteroscedastic Gaussian parameters: var = beta_s_sq·x + beta_c_sq."""

    beta_s_sq: Tuple[float, float, float]
    beta_c_sq: Tuple[float, float, float]
    clamped: Tuple[bool, bool, bool] = (False, False, False)

    def variance(self, channel: int, intensity: float) -> float:
        return self.beta_s_sq[channel] * intensity + self.beta_c_sq[channel]

    def to_rows(self) -> List[Dict]:
        return [
            {
                "channel": CHANNELS[c],
                "beta_s_sq": self.beta_s_sq[c],
                "beta_c_sq": self.beta_c_sq[c],
                "clamped": self.clamped[c],
            }
            for c in range(len(CHANNELS))
        ]


@dataclass(frozen=True)
class IntensityBin:
    channel: int
    intensity_center: float
    std: float
    count: int
    reliable: bool


@dataclass(frozen=True)
class StdIntensityCurve:
    bins: Tuple[IntensityBin, ...]

    def channel(self, index: int) -> List[IntensityBin]:
        return [b for b in self.bins if b.channel == index]

    def reliable(self, index: int) -> List[IntensityBin]:
        return [b for b in self.channel(index) if b.reliable]

    def to_rows(self) -> List[Dict]:
        return [
            {
                "channel": CHANNELS[b.channel],
                "bin_center": b.intensity_center,
                "std": b.std,
                "count": b.count,
                "reliable": b.reliable,
            }
            for b in self.bins
        ]


@dataclass(frozen=True)
class OffsetCorrelation:
    dx: int
    dy: int
    r: float
    count: int
    degenerate: bool = False

    @property
    def distance_sq(self) -> int:
        return self.dx * self.dx + self.dy * self.dy


@dataclass(frozen=True)
class CorrelationPoint:
    distance: float
    r: float
    count: int
    degenerate: bool = False


@dataclass(frozen=True)
class CorrelationProfile:
    """Pearson correlation vs pixel distance, plus the per-offset values it aggregates."""

    points: Tuple[CorrelationPoint, ...]
    offsets: Tuple[OffsetCorrelation, ...] = ()

    def at_offset(self, dx: int, dy: int) -> OffsetCorrelation:
        """Offset lookup; (dx, dy) and (-dx, -dy) pair the same pixels."""
        for o in self.offsets:
            if (o.dx, o.dy) in ((dx, dy), (-dx, -dy)):
                return o
        raise KeyError((dx, dy))

    def at_distance(self, distance: float) -> Optional[CorrelationPoint]:
        for p in self.points:
            if abs(p.distance - distance) < 1e-9:
                return p
        return None

    def to_rows(self) -> List[Dict]:
        return [
            {"d": p.distance, "r": p.r, "count": p.count, "degenerate": p.degenerate}
            for p in self.points
        ]


@dataclass(frozen=True)
class NoiseHistogram:
    """Fixed-edge histogram of noise values with out-of-range tallies."""

    edges: Tuple[float, ...]
    counts: Tuple[int, ...]
    underflow: int = 0
    overflow: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts) + self.underflow + self.overflow


@dataclass(frozen=True)
class KLRow:
    camera: str
    iso: Optional[int]
    method: str
    kl: float
    n_values: int

    def to_dict(self) -> Dict:
        return {
            "camera": self.camera,
            "iso": "" if self.iso is None else self.iso,
            "method": self.method,
            "kl": self.kl,
            "n_values": self.n_values,
        }


@dataclass(frozen=True)
class DenoiseRow:
    scene_id: str
    camera: str
    iso: int
    psnr: float
    ssim: float

    def to_dict(self) -> Dict:
        return {
            "scene_id": self.scene_id,
            "camera": self.camera,
            "iso": self.iso,
            "psnr": self.psnr,
            "ssim": self.ssim,
        }


@dataclass
class DenoiseReport:
    rows: List[DenoiseRow] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return sum(r.psnr for r in self.rows) / len(self.rows) if self.rows else float("nan")

    @property
    def mean_ssim(self) -> float:
        return sum(r.ssim for r in self.rows) / len(self.rows) if self.rows else float("nan")
