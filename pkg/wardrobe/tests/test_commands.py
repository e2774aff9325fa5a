import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from difashion.run_config import EFFECTIVE_CONFIG_NAME
from difashion.tests.test_run_config import sample_config_file
from wardrobe.storage import MANIFEST_NAME, load_dataset


def run_command(name, *args):
    """Call a management command quietly and return its stdout"""
    out = StringIO()
    call_command(name, *args, "--no-progress", stdout=out, stderr=StringIO())
    return out.getvalue()


class GenDataCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.directory = Path(self.tmp.name)
        self.config = sample_config_file(self.directory)

    def tearDown(self):
        self.tmp.cleanup()

    def test_writes_loadable_dataset(self):
        """Test the generated directory loads and the summary counts are printed"""
        output = run_command("gen_data", "--config", str(self.config))

        dataset = load_dataset(self.directory / "data")
        self.assertEqual(len(dataset.manifest.users), 3)
        self.assertIn("30 outfits (24/3/3)", output)
        self.assertTrue((self.directory / "data" / EFFECTIVE_CONFIG_NAME).is_file())

    def test_flags_override_config(self):
        """Test world flags replace the config file values"""
        out = self.directory / "other"
        run_command("gen_data", "--config", str(self.config), "--out", str(out), "--users", "2", "--size", "20")

        dataset = load_dataset(out)
        self.assertEqual(len(dataset.manifest.users), 2)
        self.assertEqual(dataset.image_shape, (3, 20, 20))
        echo = json.loads((out / EFFECTIVE_CONFIG_NAME).read_text(encoding="utf-8"))
        self.assertEqual(echo["world"]["num_users"], 2)

    def test_same_seed_same_directory(self):
        """Test two runs with --seed 7 write identical files"""
        first, second = self.directory / "first", self.directory / "second"
        for out in (first, second):
            run_command("gen_data", "--config", str(self.config), "--seed", "7", "--out", str(out))

        names = sorted(path.relative_to(first) for path in first.rglob("*") if path.is_file())
        self.assertEqual(names, sorted(path.relative_to(second) for path in second.rglob("*") if path.is_file()))
        for name in names:
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), str(name))

    def test_bad_delta_is_a_config_error(self):
        """Test an out-of-range delta exits with the config error code"""
        with self.assertRaises(CommandError) as context:
            run_command("gen_data", "--config", str(self.config), "--delta", "0.3")

        self.assertEqual(context.exception.returncode, 2)
        self.assertFalse((self.directory / "data").exists())

    def test_refuses_non_empty_directory(self):
        """Test an existing dataset is kept unless --force is given"""
        run_command("gen_data", "--config", str(self.config))

        with self.assertRaises(CommandError) as context:
            run_command("gen_data", "--config", str(self.config), "--users", "2")
        self.assertEqual(context.exception.returncode, 3)
        self.assertEqual(len(load_dataset(self.directory / "data").manifest.users), 3)

        run_command("gen_data", "--config", str(self.config), "--users", "2", "--force")
        self.assertEqual(len(load_dataset(self.directory / "data").manifest.users), 2)
        self.assertTrue((self.directory / "data" / MANIFEST_NAME).is_file())
