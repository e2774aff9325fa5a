import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase, override_settings

from difashion.commands import given_items
from difashion.exceptions import ConfigError, RequestError
from difashion.run_config import EFFECTIVE_CONFIG_NAME, load_run_config, merge, write_effective_config
from diffusion.guidance import GuidanceScales

TINY_TRAIN = {
    "batch_size": 2,
    "total_steps": 3,
    "T": 5,
    "base_width": 8,
    "groups": 4,
    "time_dim": 8,
    "checkpoint_interval": 0,
    "validation_interval": 0,
}
TINY_CLASSIFIER = {"width": 8, "feature_dim": 8, "steps": 20, "lr": 3e-3, "min_accuracy": 0.0}


def sample_config_file(directory, **sections):
    """Write a run config for a tiny world, model and classifier under ``directory``"""
    directory = Path(directory)
    payload = {
        "world": {"height": 16, "width": 16, "num_users": 3, "outfits_per_user": 10},
        "train": dict(TINY_TRAIN),
        "classifier": dict(TINY_CLASSIFIER),
        "paths": {"data": str(directory / "data"), "runs": str(directory / "runs")},
    }
    payload.update(sections)
    path = directory / "run.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class MergeTests(SimpleTestCase):
    def test_flags_overlay_file_keys(self):
        """Test given flags replace file values and absent flags keep them"""
        base = {"seed": 1, "train": {"T": 10, "eta": 0.2}}

        merged = merge(base, {"seed": None, "train": {"T": 20, "eta": None}, "paths": {"data": "x"}})

        self.assertEqual(merged, {"seed": 1, "train": {"T": 20, "eta": 0.2}, "paths": {"data": "x"}})
        self.assertEqual(base["train"]["T"], 10)

    def test_dict_values_are_replaced(self):
        """Test a flag holding a mapping replaces the file's mapping whole"""
        base = {"sample": {"given": {"top": 1, "hat": 2}}}

        merged = merge(base, {"sample": {"given": {"shoes": 3}}})

        self.assertEqual(merged["sample"]["given"], {"shoes": 3})


class GivenItemsTests(SimpleTestCase):
    def test_parse(self):
        """Test category=item pairs are parsed"""
        self.assertEqual(given_items("top=12, shoes=40"), {"top": 12, "shoes": 40})

    def test_malformed(self):
        """Test pairs without an integer item id are refused"""
        for value in ("top", "top=x", "top=-1"):
            with self.subTest(value=value):
                with self.assertRaises(ConfigError):
                    given_items(value)


class LoadRunConfigTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.directory = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    @override_settings(DIFASHION={"DATA_DIR": Path("/d"), "RUNS_DIR": Path("/r"), "SEED": 5, "PROGRESS": False})
    def test_defaults(self):
        """Test no file and no flags give every section's defaults and the settings paths"""
        run_config = load_run_config()

        self.assertEqual(run_config.seed, 5)
        self.assertEqual(run_config.world.seed, 5)
        self.assertEqual(run_config.train.T, 200)
        self.assertEqual(run_config.guidance, GuidanceScales())
        self.assertEqual(run_config.data_dir, Path("/d"))
        self.assertEqual(run_config.runs_dir, Path("/r"))

    def test_seed_reaches_every_section(self):
        """Test the top-level seed overrides the seed of every seeded section"""
        path = sample_config_file(self.directory, seed=9, train={**TINY_TRAIN, "seed": 1})

        run_config = load_run_config(path)

        for section in (run_config.world, run_config.train, run_config.sample,
                        run_config.evaluation, run_config.classifier):
            self.assertEqual(section.seed, 9)

    def test_flag_overrides(self):
        """Test flag values win over the file"""
        path = sample_config_file(self.directory)

        run_config = load_run_config(path, {"seed": 3, "train": {"T": 7}, "guidance": {"s_h": 2.0}})

        self.assertEqual(run_config.seed, 3)
        self.assertEqual(run_config.train.T, 7)
        self.assertEqual(run_config.train.batch_size, 2)
        self.assertEqual(run_config.sample.scales.s_h, 2.0)
        self.assertEqual(run_config.evaluation.scales.s_h, 2.0)

    def test_unknown_keys(self):
        """Test unknown top-level and section keys are refused"""
        for sections in ({"colour": 1}, {"world": {"users": 3}}, {"train": {**TINY_TRAIN, "epochs": 2}}):
            with self.subTest(sections=sections):
                path = sample_config_file(self.directory, **sections)

                with self.assertRaises(ConfigError):
                    load_run_config(path)

    def test_invalid_sample_is_a_request_error(self):
        """Test a request with nothing to generate is a request error"""
        path = sample_config_file(
            self.directory, sample={"mode": "generalized", "categories": ["top"], "given": {"top": 1}}
        )

        with self.assertRaises(RequestError):
            load_run_config(path)

    def test_unreadable_file(self):
        """Test a missing or malformed file is a config error"""
        with self.assertRaisesMessage(ConfigError, "missing.json"):
            load_run_config(self.directory / "missing.json")
        broken = self.directory / "broken.json"
        broken.write_text("[1, 2]", encoding="utf-8")
        with self.assertRaises(ConfigError):
            load_run_config(broken)

    def test_effective_config_echo(self):
        """Test the echoed config is the merged, validated configuration"""
        path = sample_config_file(self.directory, seed=4)
        run_config = load_run_config(path, {"world": {"delta": 0.05}})

        echo = write_effective_config(run_config, self.directory / "out")
        data = json.loads(echo.read_text(encoding="utf-8"))

        self.assertEqual(echo.name, EFFECTIVE_CONFIG_NAME)
        self.assertEqual(data["seed"], 4)
        self.assertEqual(data["world"]["delta"], 0.05)
        self.assertEqual(data["train"]["total_steps"], 3)
        self.assertEqual(data["guidance"], {"s_t": 12.0, "s_m": 4.0, "s_h": 4.0})
        self.assertEqual(data["paths"]["runs"], str(self.directory / "runs"))
        self.assertNotIn("scales", data["sample"])
