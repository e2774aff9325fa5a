"""
Django command to evaluate one checkpoint over a grid of guidance scales
or mixing ratios.
"""
import csv
import json

from difashion.commands import comma_list
from difashion.exceptions import ConfigError
from evaluation.figures import sweep_figure
from evaluation.management.commands.evaluate import Command as EvaluateCommand
from evaluation.models import REPORT_METRICS, SWEEP_PARAMETERS
from evaluation.protocol import sweep
from evaluation.serializers import MetricsReportSerializer


def float_list(value):
    try:
        return [float(part) for part in comma_list(value)]
    except ValueError as exc:
        raise ConfigError(f"Sweep values must be comma-separated numbers, got {value!r}") from exc


class Command(EvaluateCommand):
    help = "Evaluate a checkpoint across values of one guidance scale or eta"

    def add_command_arguments(self, parser):
        super().add_command_arguments(parser)
        parser.add_argument("--parameter", required=True, help=f"One of {', '.join(SWEEP_PARAMETERS)}")
        parser.add_argument("--values", required=True, help="Comma-separated values, e.g. 1,3,5")

    def run(self, run_config, options):
        parameter = options["parameter"]
        if parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"Unknown sweep parameter {parameter!r}, expected one of {SWEEP_PARAMETERS}")
        values = float_list(options["values"])
        dataset, classifier, model, label = self.prepare(run_config, options)
        config = run_config.evaluation
        rows = sweep(dataset, classifier, config, parameter, values, model, progress=self.progress(options))

        out = self.out_dir(options, run_config.runs_dir / "sweeps" / f"{parameter}-{config.source}-seed{config.seed}")
        self.echo_config(run_config, out)
        with open(out / "sweep.json", "w", encoding="utf-8") as handle:
            json.dump(
                {
                    "parameter": parameter,
                    "checkpoint": label,
                    "rows": [{"value": value, **MetricsReportSerializer(report).data} for value, report in rows],
                },
                handle,
                indent=1,
            )
            handle.write("\n")
        with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow([parameter, *REPORT_METRICS])
            for value, report in rows:
                writer.writerow([value, *("" if v is None else v for v in report.values().values())])
        sweep_figure(rows, parameter, out / "sweep.png")

        for value, report in rows:
            self.stdout.write(f"{parameter} = {value}")
            self.write_metrics(report)
        self.stdout.write(self.style.SUCCESS(f"Sweep of {len(rows)} values written to {out}"))
