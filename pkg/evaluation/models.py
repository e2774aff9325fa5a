"""
Records of the evaluation protocol: the classifier's training budget, the
settings of one evaluation run and the report it produces.
"""
import math
from dataclasses import asdict, dataclass, field

from difashion.exceptions import ConfigError, ContractError
from diffusion.conditioning import validate_eta
from diffusion.guidance import GuidanceScales

SOURCES = ("model", "real", "noise")
SWEEP_PARAMETERS = ("s_t", "s_m", "s_h", "eta")
REPORT_METRICS = (
    "fid",
    "modified_is",
    "is_acc",
    "cis",
    "lpips_proxy",
    "compatibility",
    "personalization_feature",
    "personalization_hue",
    "retrieval_accuracy",
    "retrieval_compatibility",
)


@dataclass(frozen=True)
class ClassifierConfig:
    width: int = 16
    feature_dim: int = 64
    steps: int = 300
    batch_size: int = 32
    lr: float = 1e-3
    min_accuracy: float = 0.98
    seed: int = 0

    @staticmethod
    def validate_sizes(width, feature_dim, steps, batch_size, error_to_raise):
        for name, value in (
            ("width", width),
            ("feature_dim", feature_dim),
            ("steps", steps),
            ("batch_size", batch_size),
        ):
            if value < 1:
                raise error_to_raise({name: f"Must be at least 1, got {value}"})

    def clean(self):
        self.validate_sizes(self.width, self.feature_dim, self.steps, self.batch_size, ConfigError)
        if self.lr <= 0:
            raise ConfigError({"lr": f"Learning rate must be positive, got {self.lr}"})
        if not 0.0 <= self.min_accuracy <= 1.0:
            raise ConfigError({"min_accuracy": f"Must lie in [0, 1], got {self.min_accuracy}"})

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EvaluationConfig:
    split: str = "test"
    n_samples: int = 100
    source: str = "model"
    seed: int = 0
    scales: GuidanceScales = GuidanceScales()
    eta: float = None
    same_category_negatives: bool = False

    @staticmethod
    def validate_source(source, error_to_raise):
        if source not in SOURCES:
            raise error_to_raise({"source": f"Unknown sample source {source!r}, expected one of {SOURCES}"})

    def clean(self):
        self.validate_source(self.source, ConfigError)
        if self.split not in ("train", "valid", "test"):
            raise ConfigError({"split": f"Unknown split {self.split!r}"})
        if self.n_samples < 1:
            raise ConfigError({"n_samples": f"Must be at least 1, got {self.n_samples}"})
        self.scales.clean()
        if self.eta is not None:
            validate_eta(self.eta, ConfigError)

    def to_dict(self):
        data = asdict(self)
        data["scales"] = self.scales.to_dict()
        return data


@dataclass
class MetricsReport:
    """
    One value per metric, ``None`` where a metric had no usable samples,
    and the number of samples behind each value.
    """

    fid: float = None
    modified_is: float = None
    is_acc: float = None
    cis: float = None
    lpips_proxy: float = None
    compatibility: float = None
    personalization_feature: float = None
    personalization_hue: float = None
    retrieval_accuracy: float = None
    retrieval_compatibility: float = None
    counts: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def clean(self):
        for name in REPORT_METRICS:
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value):
                raise ContractError(f"Metric {name} is not finite: {value}")
            if self.counts.get(name, 0) < 1:
                raise ContractError(f"Metric {name} has no samples behind it")

    def values(self):
        return {name: getattr(self, name) for name in REPORT_METRICS}
