"""Dataset service: manifests, image pairs, patching and augmentation."""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from loguru import logger
from marshmallow import ValidationError as SchemaValidationError
from PIL import Image, UnidentifiedImageError
from torch.utils.data import DataLoader, Dataset

from srgbnoise.models.dataset import (
    ConditionRegistry,
    DatasetManifest,
    ImagePair,
    ManifestEntry,
)
from srgbnoise.schemas.manifest import MANIFEST_COLUMNS, NO_NOISY, ManifestRowSchema
from srgbnoise.utils.errors import FormatError, NotFoundError, ParseError, ValidationError

PATCH_SIZE = 96
PATCH_STRIDE = 48


def load_manifest(path: Path) -> DatasetManifest:
    """
    Load and validate a tab-separated dataset manifest.

    Relative image paths resolve against the manifest's directory.

    Args:
        path: Manifest file

    Returns:
        Validated manifest with registries built from the union of its rows
    """
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"Manifest not found: {path}", path=str(path))

    root = path.resolve().parent
    schema = ManifestRowSchema()
    entries: List[ManifestEntry] = []
    seen = set()

    for row, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        values = line.split("\t")
        if len(values) != len(MANIFEST_COLUMNS):
            raise ParseError(
                f"Manifest row {row} has {len(values)} fields, expected {len(MANIFEST_COLUMNS)}",
                row=row,
            )
        try:
            record = schema.load(dict(zip(MANIFEST_COLUMNS, (v.strip() for v in values))))
        except SchemaValidationError as e:
            raise ParseError(f"Manifest row {row} is malformed: {e.messages}", row=row)

        clean_path = _resolve(root, record["clean_path"])
        noisy_path = (
            None if record["noisy_path"] == NO_NOISY else _resolve(root, record["noisy_path"])
        )
        key = (clean_path, noisy_path)
        if key in seen:
            raise ValidationError(f"Duplicate manifest row {row}: {record['clean_path']}")
        seen.add(key)

        for image_path in (clean_path, noisy_path):
            if image_path is not None and not image_path.is_file():
                raise ValidationError(
                    f"Manifest row {row} references a missing image: {image_path}",
                    details={"path": str(image_path), "row": row},
                )
        entries.append(
            ManifestEntry(
                clean_path=clean_path,
                noisy_path=noisy_path,
                camera_name=record["camera_name"],
                iso_value=record["iso_value"],
                scene_id=record["scene_id"],
            )
        )

    registry = ConditionRegistry.from_pairs((e.camera_name, e.iso_value) for e in entries)
    logger.info(
        "Manifest loaded",
        path=str(path),
        entries=len(entries),
        cameras=list(registry.cameras),
        isos=list(registry.isos),
    )
    return DatasetManifest(entries=tuple(entries), root=root, registry=registry)


def _resolve(root: Path, value: str) -> Path:
    candidate = Path(value)
    return candidate if candidate.is_absolute() else root / candidate


def write_manifest(path: Path, entries: Iterable[ManifestEntry]) -> Path:
    """Write entries as a manifest; paths are stored relative to its directory when possible."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    root = path.resolve().parent

    def rel(p: Optional[Path]) -> str:
        if p is None:
            return NO_NOISY
        p = Path(p).resolve()
        try:
            return p.relative_to(root).as_posix()
        except ValueError:
            return str(p)

    lines = ["# " + "\t".join(MANIFEST_COLUMNS)]
    for e in entries:
        lines.append(
            "\t".join(
                [rel(e.clean_path), rel(e.noisy_path), e.camera_name, str(e.iso_value), e.scene_id]
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_rgb(path: Path) -> np.ndarray:
    """Decode an 8-bit RGB image to float32 on the 0–255 scale."""
    try:
        with Image.open(path) as image:
            if image.mode != "RGB":
                raise FormatError(
                    f"Image {path} is {image.mode}, expected 8-bit RGB", details={"path": str(path)}
                )
            array = np.asarray(image, dtype=np.uint8)
    except UnidentifiedImageError:
        raise FormatError(f"Image {path} could not be decoded", details={"path": str(path)})
    except FileNotFoundError:
        raise NotFoundError(f"Image not found: {path}", path=str(path))
    return array.astype(np.float32)


def quantize_8bit(array: np.ndarray) -> np.ndarray:
    """Round half up and clip to [0, 255]; inverts dequantization on [-0.5, 0.5)."""
    return np.clip(np.floor(np.asarray(array, dtype=np.float64) + 0.5), 0, 255)


def save_rgb(array: np.ndarray, path: Path) -> Path:
    """Round, clip and write an H×W×3 array as an 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = quantize_8bit(array).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")
    return path


def load_pair(entry: ManifestEntry, registry: ConditionRegistry) -> ImagePair:
    """
    Load one manifest row as an ImagePair.

    Args:
        entry: Manifest row
        registry: Registry resolving the row's camera/ISO names

    Returns:
        Pair with exact 8-bit values as float32
    """
    clean = read_rgb(entry.clean_path)
    noisy = read_rgb(entry.noisy_path) if entry.noisy_path is not None else None
    if noisy is not None and noisy.shape != clean.shape:
        raise ValidationError(
            f"Clean {clean.shape[:2]} and noisy {noisy.shape[:2]} sizes differ for "
            f"scene '{entry.scene_id}'",
            details={"clean": str(entry.clean_path), "noisy": str(entry.noisy_path)},
        )
    return ImagePair(
        clean=clean,
        noisy=noisy,
        condition=registry.condition_for(entry.camera_name, entry.iso_value),
        scene_id=entry.scene_id,
    )


def load_pairs(manifest: DatasetManifest) -> List[ImagePair]:
    """Load every pair of a manifest in manifest order."""
    return [load_pair(e, manifest.registry) for e in manifest.entries]


def grid_positions(length: int, size: int, stride: int) -> List[int]:
    """Regular grid anchors plus one border-anchored anchor for any remainder."""
    positions = list(range(0, length - size + 1, stride))
    if positions[-1] != length - size:
        positions.append(length - size)
    return positions


def extract_patches(
    pair: ImagePair, size: int = PATCH_SIZE, stride: int = PATCH_STRIDE
) -> List[ImagePair]:
    """
    Cut a pair into square patches covering the full image.

    Patches are emitted in row-major grid order and inherit condition and scene id.
    """
    height, width = pair.clean.shape[:2]
    if height < size or width < size:
        raise ValidationError(
            f"Image {height}×{width} is smaller than the {size}×{size} patch",
            details={"scene_id": pair.scene_id},
        )
    if stride < 1:
        raise ValidationError("Patch stride must be positive")

    patches = []
    for top in grid_positions(height, size, stride):
        for left in grid_positions(width, size, stride):
            window = (slice(top, top + size), slice(left, left + size))
            patches.append(
                ImagePair(
                    clean=pair.clean[window],
                    noisy=None if pair.noisy is None else pair.noisy[window],
                    condition=pair.condition,
                    scene_id=pair.scene_id,
                )
            )
    return patches


def extract_dataset_patches(
    manifest: DatasetManifest,
    size: int = PATCH_SIZE,
    stride: int = PATCH_STRIDE,
    workers: int = 0,
) -> List[ImagePair]:
    """Load and patch a whole manifest; order is manifest order, then grid order."""

    def work(entry: ManifestEntry) -> List[ImagePair]:
        return extract_patches(load_pair(entry, manifest.registry), size, stride)

    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(work, manifest.entries))
    else:
        chunks = [work(e) for e in manifest.entries]
    patches = [p for chunk in chunks for p in chunk]
    logger.info("Patches extracted", images=len(manifest), patches=len(patches), size=size)
    return patches


DIHEDRAL_ORDER = 8


def dihedral_transform(array: np.ndarray, index: int) -> np.ndarray:
    """Apply element `index` of the 8-element dihedral group to the two leading axes."""
    if not 0 <= index < DIHEDRAL_ORDER:
        raise ValidationError(f"Dihedral index must be in [0, 8), got {index}")
    out = np.rot90(array, k=index % 4, axes=(0, 1))
    if index >= 4:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def augment(patch: ImagePair, rng: np.random.Generator) -> ImagePair:
    """Flip/rotate a square patch by a uniformly chosen dihedral transform."""
    height, width = patch.clean.shape[:2]
    if height != width:
        raise ValidationError(f"Augmentation needs a square patch, got {height}×{width}")
    index = int(rng.integers(DIHEDRAL_ORDER))
    return ImagePair(
        clean=dihedral_transform(patch.clean, index),
        noisy=None if patch.noisy is None else dihedral_transform(patch.noisy, index),
        condition=patch.condition,
        scene_id=patch.scene_id,
    )


def split_by_scene(
    manifest: DatasetManifest, val_fraction: float, seed: int
) -> Tuple[DatasetManifest, DatasetManifest]:
    """Split a manifest into train/validation parts without sharing scenes."""
    scenes = sorted({e.scene_id for e in manifest.entries})
    n_val = int(round(len(scenes) * val_fraction))
    n_val = min(max(n_val, 0), max(len(scenes) - 1, 0))
    order = np.random.default_rng(seed).permutation(len(scenes))
    val_scenes = {scenes[i] for i in order[:n_val]}
    train = [e for e in manifest.entries if e.scene_id not in val_scenes]
    val = [e for e in manifest.entries if e.scene_id in val_scenes]
    return manifest.subset(train), manifest.subset(val)


def to_tensor(image: np.ndarray) -> torch.Tensor:
    """H×W×3 array → 3×H×W float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).float()


def to_image(tensor: torch.Tensor) -> np.ndarray:
    """3×H×W tensor → H×W×3 float32 array."""
    return tensor.detach().cpu().float().numpy().transpose(1, 2, 0)


class PatchDataset(Dataset):
    """
    Noisy/clean training patches as tensors.

    Augmentation draws from a generator seeded by (seed, epoch, index), so batches are
    reproducible regardless of worker scheduling or resumption.
    """

    def __init__(self, patches: Sequence[ImagePair], seed: int = 0, augment_patches: bool = True):
        if any(p.noisy is None for p in patches):
            raise ValidationError("Training patches need noisy images")
        self.patches = list(patches)
        self.seed = seed
        self.augment_patches = augment_patches
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.patches)

    def __getitem__(self, index: int) -> Dict[str, torch.Tensor]:
        patch = self.patches[index]
        if self.augment_patches:
            patch = augment(patch, np.random.default_rng((self.seed, self.epoch, index)))
        return {
            "clean": to_tensor(patch.clean),
            "noisy": to_tensor(patch.noisy),
            "camera": torch.tensor(patch.condition.camera_type, dtype=torch.long),
            "iso": torch.tensor(patch.condition.iso, dtype=torch.long),
        }


def epoch_loader(
    dataset: PatchDataset,
    batch_size: int,
    seed: int,
    epoch: int,
    shuffle: bool = True,
    num_workers: int = 0,
) -> DataLoader:
    """DataLoader whose order depends only on (seed, epoch)."""
    dataset.set_epoch(epoch)
    generator = torch.Generator().manual_seed(seed * 100_003 + epoch)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        generator=generator,
        num_workers=num_workers,
    )
