"""
Django command to train the outfit diffusion model on a generated world.
"""
import shutil

from difashion.commands import DifashionCommand
from difashion.exceptions import DataError
from diffusion.trainer import CHECKPOINT_DIR, LOSS_LOG_NAME, train
from wardrobe.storage import load_dataset


class Command(DifashionCommand):
    help = "Train the denoiser and mutual encoder"

    def add_command_arguments(self, parser):
        parser.add_argument("--data", help="Dataset directory")
        parser.add_argument("--resume", help="Checkpoint to continue from")
        parser.add_argument("--steps", type=int, help="Total optimisation steps")
        parser.add_argument("--batch-size", type=int, help="Outfits per step")
        parser.add_argument("--lr", type=float, help="Learning rate, overriding the preset")
        parser.add_argument("--lr-preset", choices=("desk", "full-scale"))
        parser.add_argument("--eta", type=float, help="Mutual mixing ratio")
        parser.add_argument("--T", type=int, dest="T", help="Diffusion steps")
        parser.add_argument("--no-mutual", action="store_true", help="Train without the mutual condition")
        parser.add_argument("--no-history", action="store_true", help="Train without the history condition")
        parser.add_argument("--no-mutual-mlp", action="store_true", help="Plain average as mutual encoder")

    def overrides(self, options):
        return {
            "paths": {"data": options.get("data")},
            "train": {
                "total_steps": options.get("steps"),
                "batch_size": options.get("batch_size"),
                "lr": options.get("lr"),
                "lr_preset": options.get("lr_preset"),
                "eta": options.get("eta"),
                "T": options.get("T"),
                "use_mutual": False if options.get("no_mutual") else None,
                "use_history": False if options.get("no_history") else None,
                "mutual_mlp": False if options.get("no_mutual_mlp") else None,
            },
        }

    def run(self, run_config, options):
        out = self.out_dir(options, run_config.runs_dir / "train")
        checkpoints = out / CHECKPOINT_DIR
        if not options.get("resume") and checkpoints.exists() and any(checkpoints.iterdir()):
            if not options["force"]:
                raise DataError(f"{out} already holds checkpoints; pass --force or --resume")
            self.stdout.write(self.style.WARNING(f"Overwriting the run in {out}"))
            shutil.rmtree(checkpoints)

        dataset = load_dataset(run_config.data_dir)
        self.echo_config(run_config, out)
        result = train(
            dataset,
            run_config.train,
            out,
            resume=options.get("resume"),
            progress=self.progress(options),
        )
        losses = [entry["loss"] for entry in result.log if "loss" in entry]
        if losses:
            self.stdout.write(f"Loss {losses[0]:.4f} at the first step, {losses[-1]:.4f} at the last")
        self.stdout.write(
            self.style.SUCCESS(
                f"Trained to step {result.step}; {len(result.checkpoints)} checkpoints and "
                f"{LOSS_LOG_NAME} in {out}"
            )
        )
