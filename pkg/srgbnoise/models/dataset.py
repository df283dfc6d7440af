"""Dataset entities: image pairs, camera conditions, registries and manifests."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from srgbnoise.utils.errors import UnknownConditionError, ValidationError


@dataclass(frozen=True)
class CameraCondition:
    """Registry indices of a camera type and an ISO level."""

    camera_type: int
    iso: int


@dataclass(frozen=True)
class ConditionRegistry:
    """
    Camera-name and ISO-value registries.

    Cameras are sorted lexicographically and ISO values ascending, so one-hot indices are
    stable across runs and persisted with every checkpoint.
    """

    cameras: Tuple[str, ...]
    isos: Tuple[int, ...]

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[str, int]]) -> "ConditionRegistry":
        pairs = list(pairs)
        return cls(
            cameras=tuple(sorted({name for name, _ in pairs})),
            isos=tuple(sorted({int(iso) for _, iso in pairs})),
        )

    @property
    def n_cameras(self) -> int:
        return len(self.cameras)

    @property
    def n_isos(self) -> int:
        return len(self.isos)

    def condition_for(self, camera_name: str, iso_value: int) -> CameraCondition:
        """Resolve names to indices."""
        if camera_name not in self.cameras:
            raise UnknownConditionError(
                f"Camera '{camera_name}' is not in the registry",
                details={"registry": list(self.cameras)},
            )
        if int(iso_value) not in self.isos:
            raise UnknownConditionError(
                f"ISO {iso_value} is not in the registry", details={"registry": list(self.isos)}
            )
        return CameraCondition(self.cameras.index(camera_name), self.isos.index(int(iso_value)))

    def names_for(self, condition: CameraCondition) -> Tuple[str, int]:
        """Resolve indices to names."""
        self.check(condition)
        return self.cameras[condition.camera_type], self.isos[condition.iso]

    def check(self, condition: CameraCondition) -> None:
        if not 0 <= condition.camera_type < self.n_cameras:
            raise UnknownConditionError(
                f"Camera index {condition.camera_type} outside registry of {self.n_cameras}"
            )
        if not 0 <= condition.iso < self.n_isos:
            raise UnknownConditionError(
                f"ISO index {condition.iso} outside registry of {self.n_isos}"
            )

    def to_dict(self) -> Dict:
        return {"cameras": list(self.cameras), "isos": list(self.isos)}

    @classmethod
    def from_dict(cls, data: Dict) -> "ConditionRegistry":
        return cls(cameras=tuple(data["cameras"]), isos=tuple(int(v) for v in data["isos"]))


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest row. Paths are absolute once the manifest is loaded."""

    clean_path: Path
    noisy_path: Optional[Path]
    camera_name: str
    iso_value: int
    scene_id: str


@dataclass(frozen=True)
class DatasetManifest:
    """Validated dataset listing plus the registries built from it."""

    entries: Tuple[ManifestEntry, ...]
    root: Path
    registry: ConditionRegistry

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def has_noisy(self) -> bool:
        return bool(self.entries) and all(e.noisy_path is not None for e in self.entries)

    def filter_camera(self, camera_name: Optional[str]) -> "DatasetManifest":
        """Keep entries of one camera; registries are left untouched."""
        if camera_name is None:
            return self
        kept = tuple(e for e in self.entries if e.camera_name == camera_name)
        return DatasetManifest(entries=kept, root=self.root, registry=self.registry)

    def subset(self, entries: Sequence[ManifestEntry]) -> "DatasetManifest":
        return DatasetManifest(entries=tuple(entries), root=self.root, registry=self.registry)


@dataclass(frozen=True)
class ImagePair:
    """
    Clean sRGB image, optional noisy counterpart and acquisition metadata.

    Arrays are H×W×3 float32 on the 0–255 scale. Noise is `noisy - clean`.
    """

    clean: np.ndarray
    noisy: Optional[np.ndarray]
    condition: CameraCondition
    scene_id: str

    def __post_init__(self):
        if self.clean.ndim != 3 or self.clean.shape[2] != 3:
            raise ValidationError(f"Clean image must be H×W×3, got {self.clean.shape}")
        if self.noisy is not None and self.noisy.shape != self.clean.shape:
            raise ValidationError(
                f"Clean {self.clean.shape} and noisy {self.noisy.shape} shapes differ",
                details={"scene_id": self.scene_id},
            )
        if not np.isfinite(self.clean).all() or (
            self.noisy is not None and not np.isfinite(self.noisy).all()
        ):
            raise ValidationError(
                "Image values must be finite", details={"scene_id": self.scene_id}
            )

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.clean.shape)

    @property
    def noise(self) -> np.ndarray:
        if self.noisy is None:
            raise ValidationError(f"Pair '{self.scene_id}' has no noisy image")
        return self.noisy - self.clean


def _nonnegative(values: Sequence[float], name: str) -> Tuple[float, float, float]:
    values = tuple(float(v) for v in values)
    if len(values) != 3:
        raise ValidationError(f"{name} needs one value per channel, got {len(values)}")
    if any(not np.isfinite(v) or v < 0 for v in values):
        raise ValidationError(f"{name} values must be finite and nonnegative: {values}")
    return values


@dataclass(frozen=True)
class SynthCameraParams:
    """
    Ground-truth parameters of a synthetic heteroscedastic, spatially correlated camera.

    Per-pixel variance is `gain(iso) * (beta_s_sq * x + beta_c_sq)`; `kernel` correlates the
    i.i.d. field afterwards.
    """

    beta_s_sq: Tuple[float, float, float]
    beta_c_sq: Tuple[float, float, float]
    kernel: Tuple[Tuple[float, ...], ...]
    gain_per_iso: Dict[int, float] = field(default_factory=lambda: {100: 1.0})

    def __post_init__(self):
        object.__setattr__(self, "beta_s_sq", _nonnegative(self.beta_s_sq, "beta_s_sq"))
        object.__setattr__(self, "beta_c_sq", _nonnegative(self.beta_c_sq, "beta_c_sq"))
        kernel = np.asarray(self.kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.size == 0:
            raise ValidationError(f"Kernel must be a non-empty 2-D array, got shape {kernel.shape}")
        if not np.isfinite(kernel).all() or abs(kernel.sum() - 1.0) > 1e-6:
            raise ValidationError(f"Kernel weights must sum to 1, got {kernel.sum():.6f}")
        if not self.gain_per_iso:
            raise ValidationError("gain_per_iso needs at least one ISO level")
        if any(not np.isfinite(g) or g <= 0 for g in self.gain_per_iso.values()):
            raise ValidationError(f"ISO gains must be positive: {self.gain_per_iso}")
        object.__setattr__(self, "kernel", tuple(tuple(float(w) for w in row) for row in kernel))
        object.__setattr__(
            self, "gain_per_iso", {int(k): float(v) for k, v in self.gain_per_iso.items()}
        )

    @property
    def kernel_array(self) -> np.ndarray:
        return np.asarray(self.kernel, dtype=np.float64)

    def gain(self, iso_value: int) -> float:
        try:
            return self.gain_per_iso[int(iso_value)]
        except KeyError:
            raise UnknownConditionError(
                f"ISO {iso_value} has no gain in the oracle parameters",
                details={"known": sorted(self.gain_per_iso)},
            )


KERNEL_PRESETS: Dict[str, List[List[float]]] = {
    "identity": [[1.0]],
    "horizontal2": [[0.5, 0.5]],
    "box3": [[1.0 / 9.0] * 3] * 3,
}
