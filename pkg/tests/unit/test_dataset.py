"""Unit tests for manifests, image I/O, patching and augmentation."""
import numpy as np
import pytest
from PIL import Image

from srgbnoise.models.dataset import CameraCondition, ImagePair
from srgbnoise.services.dataset import (
    PatchDataset,
    augment,
    dihedral_transform,
    epoch_loader,
    extract_patches,
    load_manifest,
    load_pair,
    load_pairs,
    read_rgb,
    split_by_scene,
)
from srgbnoise.utils.errors import FormatError, NotFoundError, ParseError, ValidationError

CONDITION = CameraCondition(0, 0)


def make_pair(height, width, seed=0, noisy=True):
    rng = np.random.default_rng(seed)
    clean = rng.integers(0, 256, size=(height, width, 3)).astype(np.float32)
    noise = rng.integers(-5, 6, size=(height, width, 3)).astype(np.float32)
    return ImagePair(
        clean=clean,
        noisy=np.clip(clean + noise, 0, 255) if noisy else None,
        condition=CONDITION,
        scene_id="s1",
    )


@pytest.mark.unit
class TestManifest:
    """Test manifest loading."""

    def test_single_row(self, write_image, write_manifest_file):
        """Test a one-row manifest builds one-entry registries."""
        write_image("img_c.png", np.zeros((8, 8, 3)))
        write_image("img_n.png", np.ones((8, 8, 3)))
        manifest = load_manifest(
            write_manifest_file([("img_c.png", "img_n.png", "S6", 100, "s1")])
        )
        assert len(manifest) == 1
        assert manifest.registry.cameras == ("S6",)
        assert manifest.registry.isos == (100,)
        assert manifest.has_noisy

    def test_registries_sorted(self, write_image, write_manifest_file):
        """Test camera and ISO registries are sorted."""
        write_image("a.png", np.zeros((8, 8, 3)))
        write_image("b.png", np.zeros((8, 8, 3)))
        manifest = load_manifest(
            write_manifest_file(
                [
                    ("# clean", "noisy", "camera", "iso", "scene"),
                    ("a.png", "-", "IP", 800, "s1"),
                    ("b.png", "-", "G4", 100, "s2"),
                ]
            )
        )
        assert manifest.registry.cameras == ("G4", "IP")
        assert manifest.registry.isos == (100, 800)
        assert manifest.entries[0].noisy_path is None
        assert not manifest.has_noisy

    def test_missing_image(self, write_image, write_manifest_file):
        """Test a missing referenced image names the path."""
        write_image("a.png", np.zeros((8, 8, 3)))
        path = write_manifest_file([("a.png", "gone.png", "S6", 100, "s1")])
        with pytest.raises(ValidationError, match="gone.png"):
            load_manifest(path)

    def test_missing_manifest(self, tmp_path):
        """Test a missing manifest raises NotFoundError."""
        with pytest.raises(NotFoundError):
            load_manifest(tmp_path / "none.tsv")

    def test_malformed_row(self, write_image, write_manifest_file):
        """Test malformed rows report their row number."""
        write_image("a.png", np.zeros((8, 8, 3)))
        path = write_manifest_file(
            [("a.png", "-", "S6", 100, "s1"), ("a.png", "-", "S6", "high", "s2")]
        )
        with pytest.raises(ParseError) as info:
            load_manifest(path)
        assert info.value.row == 2

    def test_wrong_field_count(self, write_manifest_file):
        """Test rows with the wrong number of fields."""
        with pytest.raises(ParseError) as info:
            load_manifest(write_manifest_file([("a.png", "-", "S6")]))
        assert info.value.row == 1

    def test_duplicate_rows(self, write_image, write_manifest_file):
        """Test duplicate (clean, noisy) rows are rejected."""
        write_image("a.png", np.zeros((8, 8, 3)))
        path = write_manifest_file(
            [("a.png", "-", "S6", 100, "s1"), ("a.png", "-", "S6", 100, "s2")]
        )
        with pytest.raises(ValidationError):
            load_manifest(path)


@pytest.mark.unit
class TestImageIO:
    """Test image decoding and pair loading."""

    def test_exact_8bit_values(self, write_image):
        """Test 8-bit values load losslessly."""
        array = np.arange(256, dtype=np.float64).reshape(16, 16, 1).repeat(3, axis=2)
        loaded = read_rgb(write_image("ramp.png", array))
        assert loaded.dtype == np.float32
        assert loaded.max() == 255.0
        np.testing.assert_array_equal(loaded, array)

    def test_grayscale_rejected(self, tmp_path):
        """Test non-RGB images raise FormatError."""
        path = tmp_path / "gray.png"
        Image.fromarray(np.zeros((8, 8), dtype=np.uint8)).save(path)
        with pytest.raises(FormatError):
            read_rgb(path)

    def test_shape_mismatch(self, write_image, write_manifest_file):
        """Test clean/noisy size mismatch raises ValidationError."""
        write_image("c.png", np.zeros((128, 128, 3)))
        write_image("n.png", np.zeros((128, 130, 3)))
        manifest = load_manifest(write_manifest_file([("c.png", "n.png", "S6", 100, "s1")]))
        with pytest.raises(ValidationError):
            load_pair(manifest.entries[0], manifest.registry)

    def test_round_trip(self, oracle_manifest):
        """Test pairs load with conditions resolved through the registry."""
        pairs = load_pairs(oracle_manifest)
        assert len(pairs) == 4
        assert [p.condition.iso for p in pairs] == [0, 1, 0, 1]
        assert all(p.noise.shape == (32, 32, 3) for p in pairs)


@pytest.mark.unit
class TestPatches:
    """Test patch extraction."""

    def test_regular_grid(self):
        """Test a 192×192 image gives a 3×3 grid."""
        assert len(extract_patches(make_pair(192, 192), 96, 48)) == 9

    def test_exact_size(self):
        """Test an image the size of a patch gives itself."""
        pair = make_pair(96, 96)
        patches = extract_patches(pair)
        assert len(patches) == 1
        np.testing.assert_array_equal(patches[0].clean, pair.clean)

    def test_border_anchored_patch(self):
        """Test remainders are covered by a border-anchored patch."""
        pair = make_pair(100, 96)
        patches = extract_patches(pair, 96, 48)
        assert len(patches) == 2
        np.testing.assert_array_equal(patches[1].clean, pair.clean[4:100])

    @pytest.mark.parametrize("shape", [(96, 96), (100, 130), (203, 151)])
    def test_full_coverage(self, shape):
        """Test the union of patches covers the whole image."""
        height, width = shape
        marker = np.arange(height * width, dtype=np.float32).reshape(height, width)
        pair = ImagePair(
            clean=np.stack([marker] * 3, axis=2), noisy=None, condition=CONDITION, scene_id="s"
        )
        seen = set()
        for patch in extract_patches(pair, 96, 48):
            seen.update(patch.clean[..., 0].astype(np.int64).ravel().tolist())
        assert seen == set(range(height * width))

    def test_too_small(self):
        """Test images smaller than a patch are rejected."""
        with pytest.raises(ValidationError):
            extract_patches(make_pair(64, 128), 96, 48)

    def test_patches_inherit_metadata(self):
        """Test patches keep condition and scene id."""
        for patch in extract_patches(make_pair(150, 150), 96, 48):
            assert patch.condition == CONDITION
            assert patch.scene_id == "s1"


@pytest.mark.unit
class TestAugmentation:
    """Test dihedral augmentation."""

    def test_identity(self):
        """Test transform 0 is the identity."""
        array = np.random.default_rng(0).random((5, 5, 3))
        np.testing.assert_array_equal(dihedral_transform(array, 0), array)

    def test_flip_involution(self):
        """Test a flip applied twice restores the patch."""
        array = np.random.default_rng(0).random((5, 5, 3))
        np.testing.assert_array_equal(dihedral_transform(dihedral_transform(array, 4), 4), array)

    def test_rotation_closure(self):
        """Test four quarter turns restore the patch."""
        array = np.random.default_rng(0).random((5, 5, 3))
        out = array
        for _ in range(4):
            out = dihedral_transform(out, 1)
        np.testing.assert_array_equal(out, array)

    def test_preserves_values_and_alignment(self):
        """Test clean and noisy move together and keep their values."""
        pair = make_pair(16, 16)
        rng = np.random.default_rng(3)
        for _ in range(8):
            out = augment(pair, rng)
            np.testing.assert_array_equal(
                np.sort(out.clean, axis=None), np.sort(pair.clean, axis=None)
            )
            np.testing.assert_array_equal(
                np.sort(out.noise, axis=None), np.sort(pair.noise, axis=None)
            )

    def test_non_square(self):
        """Test non-square patches are rejected."""
        with pytest.raises(ValidationError):
            augment(make_pair(16, 18), np.random.default_rng(0))


@pytest.mark.unit
class TestSplitAndLoading:
    """Test scene split and deterministic loading."""

    def test_split_by_scene(self, oracle_manifest):
        """Test no scene lands on both sides of the split."""
        train, val = split_by_scene(oracle_manifest, 0.25, seed=0)
        assert len(train) == 3 and len(val) == 1
        assert not {e.scene_id for e in train.entries} & {e.scene_id for e in val.entries}

    def test_loader_order_depends_on_seed_and_epoch(self):
        """Test batch order is a pure function of (seed, epoch)."""
        patches = [make_pair(16, 16, seed=i) for i in range(10)]

        def first_batch(seed, epoch):
            dataset = PatchDataset(patches, seed=seed)
            return next(iter(epoch_loader(dataset, 4, seed, epoch)))["clean"]

        assert torch_equal(first_batch(1, 2), first_batch(1, 2))
        assert not torch_equal(first_batch(1, 2), first_batch(1, 3))

    def test_dataset_requires_noisy(self):
        """Test training patches need noisy images."""
        with pytest.raises(ValidationError):
            PatchDataset([make_pair(16, 16, noisy=False)])


def torch_equal(a, b) -> bool:
    return bool((a == b).all())
