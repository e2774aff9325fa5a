"""
Checkpoints: a named-tensor container whose header echoes the training
configuration, model shape, schedule, step counter and latest metrics.

Tensor names::

    denoiser/<parameter>   mutual/<parameter>
    adam/m/<parameter>     adam/v/<parameter>
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from difashion.exceptions import CheckpointError
from diffusion.conditioning import MutualEncoderParams, init_mutual_encoder
from diffusion.denoiser import DenoiserConfig, DenoiserParams, init_denoiser
from diffusion.models import DiFashionModel, TrainConfig
from diffusion.schedule import DiffusionSchedule
from engine.container import read_tensors, write_tensors
from engine.optim import AdamState
from engine.rng import Rng
from engine.tensor import Tensor

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "difashion-checkpoint/1"


@dataclass
class Checkpoint:
    model: DiFashionModel
    optimizer: AdamState
    step: int
    train_config: TrainConfig = None
    metrics: dict = field(default_factory=dict)
    path: Path = None

    @property
    def label(self):
        return f"{self.path.name if self.path else 'checkpoint'}@{self.step}"


def save_checkpoint(path, model, optimizer, step, train_config=None, metrics=None):
    tensors = {name: tensor.data for name, tensor in model.parameters().items()}
    for name in model.parameters():
        if name in optimizer.m:
            tensors[f"adam/m/{name}"] = optimizer.m[name]
            tensors[f"adam/v/{name}"] = optimizer.v[name]
    header = {
        "format": CHECKPOINT_FORMAT,
        "step": int(step),
        "model": model.describe(),
        "adam": optimizer.hyperparameters(),
        "eta": model.eta,
        "train_config": train_config.to_dict() if train_config else None,
        "metrics": metrics or {},
    }
    if train_config:
        header["mask_ratios"] = {
            "joint": train_config.joint_mask_ratio,
            "individual": train_config.individual_mask_ratio,
        }
    path = write_tensors(path, tensors, header)
    logger.debug("saved checkpoint %s at step %d", path, step)
    return path


def _take(tensors, name, shape, source):
    if name not in tensors:
        raise CheckpointError(f"{source} has no tensor {name!r}")
    array = tensors[name]
    if array.shape != tuple(shape):
        raise CheckpointError(f"{source}: tensor {name!r} is {array.shape}, expected {tuple(shape)}")
    return array


def load_checkpoint(path):
    path = Path(path)
    tensors, header = read_tensors(path)
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"{path} is incompatible: checkpoint format {header.get('format')!r}, "
            f"expected {CHECKPOINT_FORMAT!r}"
        )
    try:
        description = header["model"]
        denoiser_config = DenoiserConfig(**description["denoiser"])
        schedule = DiffusionSchedule.from_header(description["schedule"])
        mlp = bool(description["mutual"]["mlp"])
        adam = header["adam"]
        train_config = TrainConfig(**header["train_config"]) if header.get("train_config") else None
        conditions = description.get("conditions") or {
            "mutual": train_config.use_mutual if train_config else True,
            "history": train_config.use_history if train_config else True,
        }
        use_mutual, use_history = bool(conditions["mutual"]), bool(conditions["history"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path} has an incomplete header", str(exc)) from exc

    # a freshly initialised model fixes the expected names and shapes
    template = DiFashionModel(
        denoiser=init_denoiser(denoiser_config, Rng(0)),
        mutual=init_mutual_encoder(Rng(0), mlp=mlp),
        schedule=schedule,
        eta=float(header.get("eta", description.get("eta", 0.1))),
    )
    denoiser, mutual = {}, {}
    for name, tensor in template.parameters().items():
        value = Tensor(_take(tensors, name, tensor.shape, path), requires_grad=True)
        prefix, short = name.split("/", 1)
        value.name = short
        (denoiser if prefix == "denoiser" else mutual)[short] = value
    model = DiFashionModel(
        denoiser=DenoiserParams(denoiser_config, denoiser),
        mutual=MutualEncoderParams(mutual, mlp=mlp),
        schedule=schedule,
        eta=template.eta,
        use_mutual=use_mutual,
        use_history=use_history,
    )

    optimizer = AdamState(
        lr=adam["lr"], beta1=adam["beta1"], beta2=adam["beta2"], eps=adam["eps"], step=adam["step"]
    )
    for name, tensor in model.parameters().items():
        if f"adam/m/{name}" in tensors:
            optimizer.m[name] = _take(tensors, f"adam/m/{name}", tensor.shape, path)
            optimizer.v[name] = _take(tensors, f"adam/v/{name}", tensor.shape, path)
    for name, array in tensors.items():
        if not np.all(np.isfinite(array)):
            raise CheckpointError(f"{path}: tensor {name!r} is not finite")

    logger.debug("loaded checkpoint %s at step %d", path, header["step"])
    return Checkpoint(
        model=model,
        optimizer=optimizer,
        step=int(header["step"]),
        train_config=train_config,
        metrics=header.get("metrics", {}),
        path=path,
    )
