"""
Django command to generate the synthetic fashion world and write it as a
PNG directory plus manifest.
"""
import shutil

from difashion.commands import DifashionCommand
from difashion.exceptions import DataError
from engine.rng import Rng
from wardrobe.storage import write_dataset
from wardrobe.world import generate_world


class Command(DifashionCommand):
    help = "Generate the synthetic fashion world"

    def add_command_arguments(self, parser):
        parser.add_argument("--delta", type=float, help="Hue spread of outfits and users")
        parser.add_argument("--users", type=int, help="Number of users")
        parser.add_argument("--outfits-per-user", type=int, help="Outfits per user")
        parser.add_argument("--size", type=int, help="Image height and width")

    def overrides(self, options):
        return {
            "world": {
                "delta": options.get("delta"),
                "num_users": options.get("users"),
                "outfits_per_user": options.get("outfits_per_user"),
                "height": options.get("size"),
                "width": options.get("size"),
            }
        }

    def run(self, run_config, options):
        out = self.out_dir(options, run_config.data_dir)
        if out.exists() and any(out.iterdir()):
            if not options["force"]:
                raise DataError(f"{out} exists and is not empty; pass --force to replace it")
            self.stdout.write(self.style.WARNING(f"Replacing {out}"))
            shutil.rmtree(out)

        config = run_config.world
        dataset = generate_world(config, Rng(config.seed).spawn("data"))
        write_dataset(dataset, out)
        self.echo_config(run_config, out)

        splits = {name: len(dataset.outfits_in(name)) for name in ("train", "valid", "test")}
        self.stdout.write(
            self.style.SUCCESS(
                f"Wrote {len(dataset.manifest.users)} users, {len(dataset.manifest.outfits)} outfits "
                f"({splits['train']}/{splits['valid']}/{splits['test']}) and {len(dataset)} items to {out}"
            )
        )
