import csv
import json
import tempfile
from pathlib import Path

from django.core.management.base import CommandError
from django.test import SimpleTestCase

from difashion.run_config import EFFECTIVE_CONFIG_NAME
from difashion.tests.test_run_config import TINY_CLASSIFIER, TINY_TRAIN, sample_config_file
from evaluation.classifier import CLASSIFIER_NAME, load_classifier
from evaluation.management.commands.evaluate import METRICS_NAME
from evaluation.models import REPORT_METRICS
from wardrobe.tests.test_commands import run_command


class EvaluationCommandTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.directory = Path(cls.tmp.name)
        cls.config = str(sample_config_file(cls.directory))
        cls.runs = cls.directory / "runs"
        run_command("gen_data", "--config", cls.config)
        run_command("train", "--config", cls.config)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def read_metrics(self, out):
        return json.loads((out / METRICS_NAME).read_text(encoding="utf-8"))

    def test_train_classifier_caches(self):
        """Test the classifier is written once and kept without --force"""
        out = self.directory / "classifier"
        first = run_command("train_classifier", "--config", self.config, "--out", str(out))
        second = run_command("train_classifier", "--config", self.config, "--out", str(out))

        self.assertTrue((out / CLASSIFIER_NAME).is_file())
        self.assertIn("held-out accuracy", first)
        self.assertIn("--force", second)

    def test_train_classifier_replaces_stale_cache(self):
        """Test a cached classifier trained with other settings is retrained without --force"""
        out = self.directory / "stale"
        run_command("train_classifier", "--config", self.config, "--out", str(out))
        again = run_command("train_classifier", "--config", self.config, "--out", str(out), "--steps", "3")

        self.assertIn("held-out accuracy", again)
        self.assertEqual(load_classifier(out / CLASSIFIER_NAME).config.steps, 3)

    def test_classifier_below_floor(self):
        """Test a classifier under its accuracy floor exits with the runtime error code"""
        strict = self.directory / "strict"
        strict.mkdir()
        config = sample_config_file(
            strict,
            classifier={**TINY_CLASSIFIER, "steps": 1, "min_accuracy": 1.0},
            paths={"data": str(self.directory / "data"), "runs": str(strict / "runs")},
        )

        with self.assertRaises(CommandError) as context:
            run_command("train_classifier", "--config", str(config))

        self.assertEqual(context.exception.returncode, 4)

    def test_evaluate_model(self):
        """Test evaluating the latest checkpoint writes a full report and the config echo"""
        out = self.directory / "eval-model"
        output = run_command("evaluate", "--config", self.config, "--out", str(out))

        data = self.read_metrics(out)
        self.assertEqual(data["format"], "difashion-metrics/1")
        self.assertEqual(list(data["metrics"]), list(REPORT_METRICS))
        self.assertEqual(data["counts"]["outfits"], 3)
        self.assertEqual(data["config"]["checkpoint"], "step-000003.nt@3")
        self.assertTrue((out / EFFECTIVE_CONFIG_NAME).is_file())
        self.assertTrue((self.runs / CLASSIFIER_NAME).is_file())
        self.assertIn("fid", output)

    def test_same_seed_same_report(self):
        """Test re-running an evaluation with one seed reproduces the report"""
        reports = []
        for name in ("first", "second"):
            out = self.directory / name
            run_command("evaluate", "--config", self.config, "--out", str(out), "--source", "noise")
            reports.append(self.read_metrics(out))

        self.assertEqual(reports[0], reports[1])

    def test_real_source_defaults_to_run_directory(self):
        """Test the real baseline needs no checkpoint and lands in the eval directory"""
        run_command("evaluate", "--config", self.config, "--source", "real", "--split", "valid", "--seed", "0")

        data = self.read_metrics(self.runs / "eval" / "real-valid-seed0")
        self.assertAlmostEqual(data["metrics"]["cis"], 1.0, places=9)
        self.assertIsNone(data["config"]["checkpoint"])

    def test_too_few_samples(self):
        """Test a budget too small for fid exits with the config error code"""
        with self.assertRaises(CommandError) as context:
            run_command("evaluate", "--config", self.config, "--source", "real", "--n-samples", "1")

        self.assertEqual(context.exception.returncode, 2)
        self.assertIn("fid", str(context.exception))

    def test_sweep(self):
        """Test a sweep writes one row per value as JSON, CSV and a figure"""
        out = self.directory / "sweep"
        run_command(
            "sweep", "--config", self.config, "--out", str(out), "--parameter", "s_h", "--values", "1,3,5",
            "--source", "real",
        )

        data = json.loads((out / "sweep.json").read_text(encoding="utf-8"))
        self.assertEqual(data["parameter"], "s_h")
        self.assertEqual([row["value"] for row in data["rows"]], [1.0, 3.0, 5.0])
        with open(out / "sweep.csv", encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(rows[0], ["s_h", *REPORT_METRICS])
        self.assertEqual(len(rows), 4)
        self.assertTrue((out / "sweep.png").is_file())

    def test_sweep_rejects_unknown_parameter(self):
        """Test an unknown sweep parameter exits with the config error code"""
        with self.assertRaises(CommandError) as context:
            run_command(
                "sweep", "--config", self.config, "--parameter", "s_x", "--values", "1", "--source", "real",
            )

        self.assertEqual(context.exception.returncode, 2)

    def test_sweep_rejects_empty_values(self):
        """Test a sweep without values exits with the config error code"""
        with self.assertRaises(CommandError) as context:
            run_command(
                "sweep", "--config", self.config, "--parameter", "eta", "--values", ",", "--source", "real",
            )

        self.assertEqual(context.exception.returncode, 2)


class PipelineDeterminismTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.directory = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def run_pipeline(self, name):
        """Generate, train, sample and evaluate under ``name`` with seed 5"""
        root = self.directory / name
        root.mkdir()
        config = str(sample_config_file(root, train={**TINY_TRAIN, "total_steps": 10}))
        for command in ("gen_data", "train"):
            run_command(command, "--config", config, "--seed", "5")
        run_command(
            "sample", "--config", config, "--seed", "5", "--out", str(root / "sample"), "--mode", "gor",
            "--user", "1",
        )
        run_command("evaluate", "--config", config, "--seed", "5", "--out", str(root / "eval"))
        return root

    def test_same_seed_same_outputs(self):
        """Test the whole pipeline run twice with one seed writes identical images and metrics"""
        first, second = self.run_pipeline("first"), self.run_pipeline("second")

        pngs = sorted(path.relative_to(first) for path in first.rglob("*.png"))
        self.assertTrue(any(str(path).startswith("sample") for path in pngs))
        self.assertEqual(pngs, sorted(path.relative_to(second) for path in second.rglob("*.png")))
        for path in pngs:
            self.assertEqual((first / path).read_bytes(), (second / path).read_bytes(), str(path))
        self.assertEqual(
            (first / "eval" / METRICS_NAME).read_bytes(), (second / "eval" / METRICS_NAME).read_bytes()
        )
