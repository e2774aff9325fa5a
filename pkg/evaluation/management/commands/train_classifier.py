"""
Django command to fit the category classifier behind the feature metrics.
"""
from difashion.commands import DifashionCommand
from evaluation.classifier import CLASSIFIER_NAME, cached_classifier, save_classifier, train_classifier
from wardrobe.storage import load_dataset


class Command(DifashionCommand):
    help = "Train and cache the evaluation classifier"

    def add_command_arguments(self, parser):
        parser.add_argument("--data", help="Dataset directory")
        parser.add_argument("--steps", type=int, help="Optimisation steps")

    def overrides(self, options):
        return {"paths": {"data": options.get("data")}, "classifier": {"steps": options.get("steps")}}

    def run(self, run_config, options):
        out = self.out_dir(options, run_config.runs_dir)
        path = out / CLASSIFIER_NAME
        dataset = load_dataset(run_config.data_dir)
        if not options["force"] and cached_classifier(path, dataset, run_config.classifier) is not None:
            self.stdout.write(
                self.style.WARNING(f"{path} matches this dataset and config; pass --force to retrain")
            )
            return
        classifier = train_classifier(dataset, run_config.classifier, progress=self.progress(options))
        save_classifier(path, classifier)
        self.echo_config(run_config, out)
        self.stdout.write(
            self.style.SUCCESS(f"Classifier held-out accuracy {classifier.accuracy:.4f}; saved to {path}")
        )
