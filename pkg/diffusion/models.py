"""
Training configuration, the trained model bundle and sampling requests.

Images enter diffusion space as ``2 * image - 1`` and leave it through the
inverse map followed by a clamp to [0, 1].
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from difashion.exceptions import ConfigError, RequestError
from diffusion.conditioning import (
    MUTUAL_HIDDEN,
    init_mutual_encoder,
    validate_eta,
    validate_ratios,
)
from diffusion.denoiser import DenoiserConfig, init_denoiser
from diffusion.guidance import GuidanceScales
from diffusion.schedule import linear_schedule, scaled_betas
from engine.tensor import Tensor
from wardrobe.models import CATEGORIES

LR_PRESETS = {"desk": 1e-4, "full-scale": 1e-5}
TIMESTEP_MODES = ("outfit", "item")
SAMPLE_MODES = ("pfitb", "gor", "generalized")


def encode_images(images):
    return 2.0 * np.asarray(images, dtype=np.float64) - 1.0


def decode_images(values):
    return np.clip((np.asarray(values, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)


@dataclass(frozen=True)
class TrainConfig:
    lr_preset: str = "desk"
    lr: float = None
    batch_size: int = 8
    total_steps: int = 2000
    eta: float = 0.1
    joint_mask_ratio: float = 0.3
    individual_mask_ratio: float = 0.2
    T: int = 200
    beta_start: float = None
    beta_end: float = None
    seed: int = 0
    checkpoint_interval: int = 500
    validation_interval: int = 250
    validation_outfits: int = 32
    grad_clip: float = 0.0
    timestep_mode: str = "outfit"
    use_mutual: bool = True
    use_history: bool = True
    mutual_mlp: bool = True
    history_limit: int = None
    base_width: int = 32
    groups: int = 8
    time_dim: int = 64

    @staticmethod
    def validate_lr(lr_preset, lr, error_to_raise):
        if lr_preset not in LR_PRESETS:
            raise error_to_raise(
                {"lr_preset": f"Unknown preset {lr_preset!r}, expected one of {sorted(LR_PRESETS)}"}
            )
        if lr is not None and lr <= 0:
            raise error_to_raise({"lr": f"Learning rate must be positive, got {lr}"})

    @staticmethod
    def validate_counts(batch_size, total_steps, T, error_to_raise):
        if batch_size < 1:
            raise error_to_raise({"batch_size": "Batch size must be positive."})
        if total_steps < 0:
            raise error_to_raise({"total_steps": "Total steps cannot be negative."})
        if T < 1:
            raise error_to_raise({"T": "At least one diffusion step is required."})

    @staticmethod
    def validate_intervals(checkpoint_interval, validation_interval, error_to_raise):
        for name, value in (
            ("checkpoint_interval", checkpoint_interval),
            ("validation_interval", validation_interval),
        ):
            if value < 0:
                raise error_to_raise({name: f"{name} cannot be negative, got {value}"})

    @staticmethod
    def validate_timestep_mode(timestep_mode, error_to_raise):
        if timestep_mode not in TIMESTEP_MODES:
            raise error_to_raise(
                {"timestep_mode": f"Unknown timestep mode {timestep_mode!r}, expected {TIMESTEP_MODES}"}
            )

    def clean(self):
        self.validate_lr(self.lr_preset, self.lr, ConfigError)
        self.validate_counts(self.batch_size, self.total_steps, self.T, ConfigError)
        self.validate_intervals(self.checkpoint_interval, self.validation_interval, ConfigError)
        self.validate_timestep_mode(self.timestep_mode, ConfigError)
        validate_eta(self.eta, ConfigError)
        validate_ratios(self.joint_mask_ratio, self.individual_mask_ratio, ConfigError)
        if self.grad_clip < 0:
            raise ConfigError({"grad_clip": "Gradient clipping norm cannot be negative."})
        if self.history_limit is not None and self.history_limit < 1:
            raise ConfigError({"history_limit": "History limit must be positive when set."})
        self.denoiser_config().clean()

    @property
    def learning_rate(self):
        return self.lr if self.lr is not None else LR_PRESETS[self.lr_preset]

    @property
    def betas(self):
        """Explicit schedule endpoints, or endpoints scaled to T where unset."""
        start, end = scaled_betas(self.T)
        return (
            self.beta_start if self.beta_start is not None else start,
            self.beta_end if self.beta_end is not None else end,
        )

    def denoiser_config(self):
        return DenoiserConfig(
            base_width=self.base_width,
            groups=self.groups,
            time_dim=self.time_dim,
            num_categories=len(CATEGORIES),
        )

    def to_dict(self):
        return asdict(self)


@dataclass
class DiFashionModel:
    """
    Denoiser, mutual encoder, schedule and the mutual mixing ratio used in
    training. A model trained without the mutual or history condition only
    ever receives its null form.
    """

    denoiser: object
    mutual: object
    schedule: object
    eta: float = 0.1
    use_mutual: bool = True
    use_history: bool = True

    @property
    def num_categories(self):
        return self.denoiser.config.num_categories

    @property
    def null_category(self):
        return self.denoiser.null_category

    def parameters(self):
        named = {f"denoiser/{name}": tensor for name, tensor in self.denoiser.tensors.items()}
        named.update({f"mutual/{name}": tensor for name, tensor in self.mutual.tensors.items()})
        return named

    def parameter_count(self):
        return self.denoiser.parameter_count() + self.mutual.parameter_count()

    def frozen(self):
        """The same weights as constants, so forward passes record no graph."""
        return DiFashionModel(
            denoiser=type(self.denoiser)(
                self.denoiser.config,
                {name: Tensor(t.data, name=name) for name, t in self.denoiser.tensors.items()},
            ),
            mutual=type(self.mutual)(
                {name: Tensor(t.data, name=name) for name, t in self.mutual.tensors.items()},
                mlp=self.mutual.mlp,
            ),
            schedule=self.schedule,
            eta=self.eta,
            use_mutual=self.use_mutual,
            use_history=self.use_history,
        )

    def describe(self):
        return {
            "denoiser": self.denoiser.config.to_dict(),
            "mutual": {"hidden": MUTUAL_HIDDEN, "mlp": self.mutual.mlp},
            "schedule": self.schedule.to_header(),
            "eta": self.eta,
            "conditions": {"mutual": self.use_mutual, "history": self.use_history},
            "parameters": self.parameter_count(),
        }


def init_model(config, rng):
    config.clean()
    return DiFashionModel(
        denoiser=init_denoiser(config.denoiser_config(), rng.spawn("denoiser")),
        mutual=init_mutual_encoder(rng.spawn("mutual"), mlp=config.mutual_mlp),
        schedule=linear_schedule(config.T, *config.betas),
        eta=config.eta,
        use_mutual=config.use_mutual,
        use_history=config.use_history,
    )


@dataclass(frozen=True)
class SampleRequest:
    """
    One generation job. ``categories`` are category ids, one per outfit slot;
    ``given`` maps a category id to the clean catalogue item filling it.
    """

    mode: str
    user_id: int
    categories: tuple
    given: dict = field(default_factory=dict)
    scales: GuidanceScales = GuidanceScales()
    eta: float = None
    seed: int = 0
    steps: int = None

    @staticmethod
    def validate_mode(mode, error_to_raise):
        if mode not in SAMPLE_MODES:
            raise error_to_raise({"mode": f"Unknown mode {mode!r}, expected one of {SAMPLE_MODES}"})

    @staticmethod
    def validate_slots(mode, categories, given, error_to_raise):
        if not categories:
            raise error_to_raise({"categories": "At least one outfit slot is required."})
        if len(set(categories)) != len(categories):
            raise error_to_raise({"categories": f"Outfit categories must be distinct, got {list(categories)}"})
        stray = sorted(set(given) - set(categories))
        if stray:
            raise error_to_raise(
                {"given": f"Given items for categories {stray} outside the outfit {list(categories)}"}
            )
        n = len(categories)
        if mode == "pfitb" and (n < 2 or len(given) != n - 1):
            raise error_to_raise(
                {"given": f"pfitb needs exactly {max(n - 1, 1)} given items for {n} slots, got {len(given)}"}
            )
        if mode == "gor" and given:
            raise error_to_raise({"given": "gor generates every slot and takes no given items."})
        if mode == "generalized" and len(given) >= n:
            raise error_to_raise({"given": "Every slot is given; nothing is left to generate."})

    def clean(self):
        self.validate_mode(self.mode, RequestError)
        self.validate_slots(self.mode, self.categories, self.given, RequestError)
        self.scales.clean()
        if self.eta is not None:
            validate_eta(self.eta, RequestError)

    @property
    def generated_categories(self):
        return tuple(category for category in self.categories if category not in self.given)

    def to_dict(self):
        return {
            "mode": self.mode,
            "user_id": self.user_id,
            "categories": [CATEGORIES[category] for category in self.categories],
            "given": {CATEGORIES[category]: item_id for category, item_id in sorted(self.given.items())},
            "scales": self.scales.to_dict(),
            "eta": self.eta,
            "seed": self.seed,
            "steps": self.steps,
        }
