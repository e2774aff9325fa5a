import json
import os
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from difashion.exceptions import DataError
from engine.rng import Rng
from wardrobe.item_path import item_image_path, slot_image_path
from wardrobe.models import WorldConfig
from wardrobe.serializers import ManifestSerializer, WorldConfigSerializer
from wardrobe.storage import MANIFEST_NAME, load_dataset, write_dataset
from wardrobe.world import generate_world


def sample_world(**params):
    """Create a world of two users at 16x16"""
    defaults = {"height": 16, "width": 16, "num_users": 2, "outfits_per_user": 5, "seed": 4}
    defaults.update(params)
    config = WorldConfig(**defaults)
    return generate_world(config, Rng(config.seed).spawn("data"))


class ItemPathTests(SimpleTestCase):
    def test_item_and_slot_paths(self):
        """Test image files are named by key under their directory"""
        self.assertEqual(item_image_path(7), os.path.join("items", "7.png"))
        self.assertEqual(slot_image_path("top"), os.path.join("slots", "top.png"))


class WorldConfigSerializerTests(SimpleTestCase):
    def test_defaults(self):
        """Test an empty payload gives the default world"""
        serializer = WorldConfigSerializer(data={})

        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save(), WorldConfig())

    def test_unknown_key_rejected(self):
        """Test keys the world config does not declare are refused"""
        serializer = WorldConfigSerializer(data={"users": 3})

        self.assertFalse(serializer.is_valid())
        self.assertIn("users", serializer.errors)

    def test_delta_validated(self):
        """Test the serializer shares the delta rule with the record"""
        serializer = WorldConfigSerializer(data={"delta": 0.3})

        self.assertFalse(serializer.is_valid())
        self.assertIn("delta", serializer.errors)


class DatasetStorageTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.directory = Path(self.tmp.name) / "data"
        self.dataset = sample_world()
        write_dataset(self.dataset, self.directory)

    def tearDown(self):
        self.tmp.cleanup()

    def rewrite_manifest(self, change):
        path = self.directory / MANIFEST_NAME
        payload = json.loads(path.read_text(encoding="utf-8"))
        change(payload)
        path.write_text(json.dumps(payload), encoding="utf-8")

    def test_layout(self):
        """Test a manifest and one PNG per item are written"""
        self.assertTrue((self.directory / MANIFEST_NAME).is_file())
        self.assertEqual(len(list((self.directory / "items").glob("*.png"))), len(self.dataset))

    def test_round_trip(self):
        """Test loading reproduces the manifest and the 8-bit images"""
        loaded = load_dataset(self.directory)

        self.assertEqual(ManifestSerializer(loaded.manifest).data, ManifestSerializer(self.dataset.manifest).data)
        self.assertEqual(loaded.config, self.dataset.config)
        self.assertEqual(loaded.user(1).item_ids_by_category, self.dataset.user(1).item_ids_by_category)
        for item_id in self.dataset.manifest.items:
            np.testing.assert_array_equal(loaded.raw_image(item_id), self.dataset.raw_image(item_id))

    def test_same_seed_same_bytes(self):
        """Test two generations from one seed write byte-identical files"""
        other = Path(self.tmp.name) / "again"
        write_dataset(sample_world(), other)

        for path in sorted(self.directory.rglob("*")):
            if path.is_file():
                twin = other / path.relative_to(self.directory)
                self.assertEqual(path.read_bytes(), twin.read_bytes(), path.name)

    def test_empty_directory(self):
        """Test a directory without a manifest fails to load"""
        empty = Path(self.tmp.name) / "empty"
        empty.mkdir()

        with self.assertRaisesMessage(DataError, MANIFEST_NAME):
            load_dataset(empty)

    def test_missing_png(self):
        """Test a manifest referencing a missing image names the file"""
        (self.directory / item_image_path(3)).unlink()

        with self.assertRaisesMessage(DataError, "3.png"):
            load_dataset(self.directory)

    def test_corrupt_png(self):
        """Test an unreadable image names the file"""
        (self.directory / item_image_path(5)).write_bytes(b"not a png")

        with self.assertRaisesMessage(DataError, "5.png"):
            load_dataset(self.directory)

    def test_wrong_image_size(self):
        """Test an image of the wrong resolution is refused"""
        write_dataset(sample_world(height=20, width=20), Path(self.tmp.name) / "big")
        big = Path(self.tmp.name) / "big" / item_image_path(0)
        (self.directory / item_image_path(0)).write_bytes(big.read_bytes())

        with self.assertRaisesMessage(DataError, "0.png"):
            load_dataset(self.directory)

    def test_corrupt_manifest(self):
        """Test a manifest that is not JSON fails to load"""
        (self.directory / MANIFEST_NAME).write_text("{", encoding="utf-8")

        with self.assertRaises(DataError):
            load_dataset(self.directory)

    def test_unknown_format(self):
        """Test a manifest of another format is refused"""
        self.rewrite_manifest(lambda payload: payload.update(format="difashion-world/0"))

        with self.assertRaisesMessage(DataError, "format"):
            load_dataset(self.directory)

    def test_unknown_config_key(self):
        """Test an undeclared world config key is refused"""
        self.rewrite_manifest(lambda payload: payload["config"].update(colour="red"))

        with self.assertRaisesMessage(DataError, "colour"):
            load_dataset(self.directory)

    def test_dangling_item_reference(self):
        """Test an outfit referencing an unknown item is refused"""

        def change(payload):
            payload["outfits"][0]["item_ids"][0] = 9999

        self.rewrite_manifest(change)

        with self.assertRaisesMessage(DataError, "9999"):
            load_dataset(self.directory)

    def test_broken_split(self):
        """Test a user split that is not 8:1:1 is refused"""

        def change(payload):
            for outfit in payload["outfits"]:
                outfit["split"] = "train"

        self.rewrite_manifest(change)

        with self.assertRaisesMessage(DataError, "8:1:1"):
            load_dataset(self.directory)
