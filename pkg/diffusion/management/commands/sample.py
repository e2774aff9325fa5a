"""
Django command to generate outfit items with a trained checkpoint.
"""
from difashion.commands import DifashionCommand, comma_list, given_items, guidance_arguments, guidance_overrides
from diffusion.checkpoint import load_checkpoint
from diffusion.models import SAMPLE_MODES
from diffusion.sampling import sample, write_sample_outputs
from diffusion.trainer import latest_checkpoint
from wardrobe.models import CATEGORIES
from wardrobe.storage import load_dataset


class Command(DifashionCommand):
    help = "Sample a fill-in-the-blank item, a whole outfit or any empty slots"

    def add_command_arguments(self, parser):
        parser.add_argument("--data", help="Dataset directory")
        parser.add_argument("--checkpoint", help="Checkpoint file; defaults to the latest of the train run")
        parser.add_argument("--mode", choices=SAMPLE_MODES)
        parser.add_argument("--user", type=int, help="User the outfit is for")
        parser.add_argument("--categories", type=comma_list, help=f"Outfit slots, from {','.join(CATEGORIES)}")
        parser.add_argument("--given", help="Clean items for given slots, as category=item_id,...")
        parser.add_argument("--eta", type=float, help="Mutual mixing ratio; defaults to the trained one")
        parser.add_argument("--steps", type=int, help="Sampling steps; must equal the trained T")
        guidance_arguments(parser)

    def overrides(self, options):
        return {
            "paths": {"data": options.get("data")},
            "sample": {
                "mode": options.get("mode"),
                "user_id": options.get("user"),
                "categories": options.get("categories"),
                "given": given_items(options["given"]) if options.get("given") else None,
                "eta": options.get("eta"),
                "steps": options.get("steps"),
            },
            "guidance": guidance_overrides(options),
        }

    def run(self, run_config, options):
        path = options.get("checkpoint") or latest_checkpoint(run_config.runs_dir / "train")
        checkpoint = load_checkpoint(path)
        dataset = load_dataset(run_config.data_dir)
        request = run_config.sample

        result = sample(request, checkpoint.model, dataset, progress=self.progress(options))
        out = self.out_dir(options, run_config.runs_dir / "samples" / f"{request.mode}-user{request.user_id}-seed{request.seed}")
        write_sample_outputs(result, out, checkpoint.label)
        self.echo_config(run_config, out)
        self.stdout.write(
            self.style.SUCCESS(
                f"Generated {len(result.images)} {request.mode} item(s) for user {request.user_id} "
                f"from {checkpoint.label} into {out}"
            )
        )
