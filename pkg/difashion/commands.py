"""
Base class of the experiment subcommands.

Every subcommand reads the run configuration (``--config`` plus its own
flags as overrides) and maps project errors onto exit codes: 2 for config
and request errors, 3 for data errors, 4 for runtime contract failures.
"""
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from difashion.exceptions import ConfigError, DifashionError
from difashion.run_config import load_run_config, write_effective_config


def comma_list(value):
    return [part.strip() for part in value.split(",") if part.strip()]


class DifashionCommand(BaseCommand):
    def add_arguments(self, parser):
        parser.add_argument("--config", help="JSON run configuration file")
        parser.add_argument("--seed", type=int, help="Top-level seed for every random sub-stream")
        parser.add_argument("--out", help="Output directory")
        parser.add_argument("--force", action="store_true", help="Overwrite existing outputs")
        parser.add_argument("--no-progress", action="store_true", help="Hide progress bars")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def overrides(self, options):
        """Run-config sections set by this command's flags."""
        return {}

    def run(self, run_config, options):
        raise NotImplementedError

    def progress(self, options):
        return settings.DIFASHION["PROGRESS"] and not options.get("no_progress")

    def out_dir(self, options, default):
        return Path(options["out"]) if options.get("out") else Path(default)

    def echo_config(self, run_config, out_dir):
        write_effective_config(run_config, out_dir)

    def handle(self, *args, **options):
        try:
            overrides = {"seed": options.get("seed"), **self.overrides(options)}
            run_config = load_run_config(options.get("config"), overrides)
            self.run(run_config, options)
        except DifashionError as exc:
            self.stderr.write(self.style.ERROR(f"{type(exc).__name__}: {exc}"))
            raise CommandError(str(exc), returncode=exc.exit_code) from exc


def given_items(value):
    """``top=12,shoes=40`` as ``{"top": 12, "shoes": 40}``."""
    given = {}
    for part in comma_list(value):
        name, sep, item_id = part.partition("=")
        if not sep or not item_id.strip().isdigit():
            raise ConfigError(f"Given items look like category=item_id, got {part!r}")
        given[name.strip()] = int(item_id)
    return given


def guidance_arguments(parser):
    parser.add_argument("--st", type=float, help="Category guidance scale")
    parser.add_argument("--sm", type=float, help="Mutual guidance scale")
    parser.add_argument("--sh", type=float, help="History guidance scale")


def guidance_overrides(options):
    return {"s_t": options.get("st"), "s_m": options.get("sm"), "s_h": options.get("sh")}
