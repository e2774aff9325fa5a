"""
RunConfig: the JSON experiment file every subcommand reads.

Sections mirror the domain configs (``world``, ``train``, ``sample``,
``guidance``, ``evaluation``, ``classifier``) plus ``paths``; a top-level
``seed`` overrides every section's seed so one number fixes a whole run.
Command flags are merged in as overrides before validation, and the
effective result is echoed into every output directory.
"""
import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from difashion.exceptions import ConfigError, RequestError
from difashion.serializers import StrictSerializer
from diffusion.serializers import GuidanceScalesSerializer, SampleRequestSerializer, TrainConfigSerializer
from evaluation.serializers import ClassifierConfigSerializer, EvaluationConfigSerializer
from wardrobe.serializers import WorldConfigSerializer

logger = logging.getLogger(__name__)

EFFECTIVE_CONFIG_NAME = "effective_config.json"
SECTIONS = ("world", "train", "sample", "guidance", "evaluation", "classifier", "paths")
SEEDED_SECTIONS = ("world", "train", "sample", "evaluation", "classifier")


class PathsSerializer(StrictSerializer):
    data = serializers.CharField(default=None, allow_null=True)
    runs = serializers.CharField(default=None, allow_null=True)


class RunConfigSerializer(StrictSerializer):
    seed = serializers.IntegerField(default=None, allow_null=True, min_value=0)
    world = WorldConfigSerializer(default=dict)
    train = TrainConfigSerializer(default=dict)
    sample = SampleRequestSerializer(default=dict)
    guidance = GuidanceScalesSerializer(default=dict)
    evaluation = EvaluationConfigSerializer(default=dict)
    classifier = ClassifierConfigSerializer(default=dict)
    paths = PathsSerializer(default=dict)


@dataclass
class RunConfig:
    seed: int
    world: object
    train: object
    sample: object
    guidance: object
    evaluation: object
    classifier: object
    paths: dict = field(default_factory=dict)
    effective: dict = field(default_factory=dict)

    @property
    def data_dir(self):
        return Path(self.paths.get("data") or settings.DIFASHION["DATA_DIR"])

    @property
    def runs_dir(self):
        return Path(self.paths.get("runs") or settings.DIFASHION["RUNS_DIR"])


def merge(base, overrides):
    """
    Overlay flag values onto a copy of the file config, key by key within
    each section. ``None`` means the flag was not given.
    """
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key, {}), dict):
            section = merged.setdefault(key, {})
            section.update({name: item for name, item in value.items() if item is not None})
        elif value is not None:
            merged[key] = value
    return merged


def read_config_file(path):
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"No config file at {path}") from exc
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot read config file {path}", str(exc)) from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return payload


def load_run_config(path=None, overrides=None):
    raw = read_config_file(path) if path else {}
    raw = merge(raw, overrides or {})
    seed = raw.get("seed")
    if seed is None:
        seed = settings.DIFASHION["SEED"]
    raw["seed"] = seed
    for section in SECTIONS:
        raw.setdefault(section, {})
        if section in SEEDED_SECTIONS and isinstance(raw[section], dict):
            raw[section] = {**raw[section], "seed": seed}

    serializer = RunConfigSerializer(data=raw)
    if not serializer.is_valid():
        errors = serializer.errors
        error_class = RequestError if set(errors) == {"sample"} else ConfigError
        raise error_class("Invalid run configuration", errors)
    data = serializer.validated_data

    guidance = GuidanceScalesSerializer().create(dict(data["guidance"]))
    run_config = RunConfig(
        seed=data["seed"],
        world=WorldConfigSerializer().create(dict(data["world"])),
        train=TrainConfigSerializer().create(dict(data["train"])),
        sample=SampleRequestSerializer().create({**data["sample"], "scales": guidance}),
        guidance=guidance,
        evaluation=EvaluationConfigSerializer().create({**data["evaluation"], "scales": guidance}),
        classifier=ClassifierConfigSerializer().create(dict(data["classifier"])),
        paths=dict(data["paths"]),
    )
    run_config.effective = effective_config(run_config)
    return run_config


def effective_config(run_config):
    return {
        "seed": run_config.seed,
        "world": run_config.world.to_dict(),
        "train": run_config.train.to_dict(),
        "sample": {
            key: value for key, value in run_config.sample.to_dict().items() if key != "scales"
        },
        "guidance": run_config.guidance.to_dict(),
        "evaluation": {
            key: value for key, value in run_config.evaluation.to_dict().items() if key != "scales"
        },
        "classifier": run_config.classifier.to_dict(),
        "paths": {"data": str(run_config.data_dir), "runs": str(run_config.runs_dir)},
    }


def write_effective_config(run_config, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / EFFECTIVE_CONFIG_NAME
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(run_config.effective, handle, indent=1, sort_keys=True)
        handle.write("\n")
    logger.debug("wrote %s", path)
    return path
