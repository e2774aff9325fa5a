"""
Django command to score samples of a checkpoint (or the real / noise
baselines) with the full metrics report.
"""
import json

from difashion.commands import DifashionCommand, guidance_arguments, guidance_overrides
from diffusion.checkpoint import load_checkpoint
from diffusion.trainer import latest_checkpoint
from evaluation.classifier import load_or_train_classifier
from evaluation.models import REPORT_METRICS, SOURCES
from evaluation.protocol import evaluate
from evaluation.serializers import MetricsReportSerializer
from wardrobe.storage import load_dataset

METRICS_NAME = "metrics.json"


def write_report(report, path):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(MetricsReportSerializer(report).data, handle, indent=1)
        handle.write("\n")
    return path


class Command(DifashionCommand):
    help = "Evaluate generated outfits with the metrics report"

    def add_command_arguments(self, parser):
        parser.add_argument("--data", help="Dataset directory")
        parser.add_argument("--checkpoint", help="Checkpoint file; defaults to the latest of the train run")
        parser.add_argument("--split", choices=("train", "valid", "test"))
        parser.add_argument("--n-samples", type=int, help="Outfits to evaluate")
        parser.add_argument("--source", choices=SOURCES, help="Where the evaluated images come from")
        parser.add_argument("--eta", type=float, help="Mutual mixing ratio; defaults to the trained one")
        parser.add_argument(
            "--same-category-negatives", action="store_true", help="Draw retrieval negatives from the blank's category"
        )
        guidance_arguments(parser)

    def overrides(self, options):
        return {
            "paths": {"data": options.get("data")},
            "evaluation": {
                "split": options.get("split"),
                "n_samples": options.get("n_samples"),
                "source": options.get("source"),
                "eta": options.get("eta"),
                "same_category_negatives": True if options.get("same_category_negatives") else None,
            },
            "guidance": guidance_overrides(options),
        }

    def prepare(self, run_config, options):
        """Dataset, classifier, model (None for the baselines) and checkpoint label."""
        dataset = load_dataset(run_config.data_dir)
        classifier = load_or_train_classifier(
            dataset, run_config.runs_dir, run_config.classifier, progress=self.progress(options)
        )
        if run_config.evaluation.source != "model":
            return dataset, classifier, None, None
        path = options.get("checkpoint") or latest_checkpoint(run_config.runs_dir / "train")
        checkpoint = load_checkpoint(path)
        return dataset, classifier, checkpoint.model, checkpoint.label

    def write_metrics(self, report):
        for name in REPORT_METRICS:
            value = getattr(report, name)
            shown = "undefined" if value is None else f"{value:.4f}"
            self.stdout.write(f"  {name:<26}{shown:>12}  (n={report.counts.get(name, 0)})")

    def run(self, run_config, options):
        dataset, classifier, model, label = self.prepare(run_config, options)
        config = run_config.evaluation
        report = evaluate(dataset, classifier, config, model, progress=self.progress(options))
        report.config["checkpoint"] = label

        out = self.out_dir(
            options, run_config.runs_dir / "eval" / f"{config.source}-{config.split}-seed{config.seed}"
        )
        self.echo_config(run_config, out)
        write_report(report, out / METRICS_NAME)
        self.write_metrics(report)
        self.stdout.write(self.style.SUCCESS(f"Metrics for {report.counts['outfits']} outfits in {out}"))
