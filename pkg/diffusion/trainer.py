"""
Training loop: per-outfit noise-prediction loss under condition dropout.

Every item of an outfit is noised (at one shared timestep by default), the
other items' noisy images form its mutual condition, and the owner's clean
train-split history in the item's category forms its history condition.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
from tqdm import tqdm

from difashion.exceptions import DataError
from diffusion.checkpoint import load_checkpoint, save_checkpoint
from diffusion.conditioning import MaskFlags, history_condition, mix_mutual, mutual_condition, sample_mask
from diffusion.denoiser import predict_noise
from diffusion.models import encode_images, init_model
from diffusion.schedule import q_sample
from engine.optim import AdamState, adam_step, clip_grad_norm
from engine.rng import Rng
from engine.tensor import Tensor, backward, channel_concat, mask_rows, mse
from wardrobe.models import CATEGORIES

logger = logging.getLogger(__name__)

LOSS_LOG_NAME = "loss_log.jsonl"
CHECKPOINT_DIR = "checkpoints"


def checkpoint_name(step):
    return f"step-{step:06d}.nt"


def latest_checkpoint(out_dir):
    paths = sorted((Path(out_dir) / CHECKPOINT_DIR).glob("step-*.nt"))
    if not paths:
        raise DataError(f"No checkpoints under {Path(out_dir) / CHECKPOINT_DIR}")
    return paths[-1]


@dataclass
class OutfitBatch:
    """Rows are outfit-major: row ``b * slots + k`` is item ``k`` of outfit ``b``."""

    outfit_ids: tuple
    x0: np.ndarray
    categories: np.ndarray
    history: np.ndarray
    history_empty: np.ndarray
    slots: int

    def __len__(self):
        return len(self.outfit_ids)


def build_batch(dataset, outfit_ids, history_limit=None):
    slots = len(CATEGORIES)
    shape = dataset.image_shape
    x0, categories, history, empty = [], [], [], []
    for outfit_id in outfit_ids:
        outfit = dataset.outfit(outfit_id)
        if len(outfit.item_ids) != slots:
            raise DataError(f"Outfit {outfit_id} has {len(outfit.item_ids)} items, expected {slots}")
        for item_id in outfit.item_ids:
            category = dataset.item(item_id).category_id
            x0.append(encode_images(dataset.image(item_id)))
            categories.append(category)
            past = dataset.user_history(
                outfit.user_id, category, exclude=outfit.item_ids, limit=history_limit
            )
            mean, masked = history_condition(
                [encode_images(dataset.image(past_id)) for past_id in past], shape
            )
            history.append(mean.data)
            empty.append(masked)
    return OutfitBatch(
        outfit_ids=tuple(outfit_ids),
        x0=np.stack(x0),
        categories=np.asarray(categories, dtype=np.int64),
        history=np.stack(history),
        history_empty=np.asarray(empty, dtype=bool),
        slots=slots,
    )


def co_item_stacks(values, slots):
    """
    For rows laid out outfit-major, ``slots - 1`` arrays whose row ``(b, k)``
    holds the ``j``-th other item of outfit ``b``.
    """
    grouped = values.reshape((-1, slots) + values.shape[1:])
    others = np.array([[v for v in range(slots) if v != k] for k in range(slots)])
    return [
        grouped[:, others[:, j]].reshape(values.shape) for j in range(slots - 1)
    ]


def sample_timesteps(rng, outfits, slots, steps, mode):
    if mode == "outfit":
        return np.repeat(rng.integers(1, steps + 1, size=outfits), slots)
    return rng.integers(1, steps + 1, size=outfits * slots)


def compute_loss(batch, model, rng, config, masking=True, predictor=None):
    """
    Mean noise-prediction MSE over every item of the batch, and the number of
    outfits whose category, mutual and history conditions were dropped.

    ``predictor(x_in, t, categories)`` replaces the denoiser when given.
    """
    outfits, slots = len(batch), batch.slots
    t = sample_timesteps(rng, outfits, slots, model.schedule.steps, config.timestep_mode)
    noise = rng.normal(batch.x0.shape)
    x_t = q_sample(Tensor(batch.x0), t, Tensor(noise), model.schedule).data

    flags = [
        sample_mask(rng, config.joint_mask_ratio, config.individual_mask_ratio)
        if masking
        else MaskFlags()
        for _ in range(outfits)
    ]
    drop_category = np.repeat([flag.category for flag in flags], slots)
    drop_mutual = np.repeat([flag.mutual or not config.use_mutual for flag in flags], slots)
    drop_history = np.repeat([flag.history or not config.use_history for flag in flags], slots)

    mutual = mutual_condition([Tensor(co) for co in co_item_stacks(x_t, slots)], model.mutual)
    mutual = mask_rows(mutual, ~drop_mutual)
    mixed = mix_mutual(Tensor(x_t), mutual, model.eta)
    keep_history = ~(drop_history | batch.history_empty)
    history = Tensor(batch.history * keep_history[:, None, None, None])
    x_in = channel_concat([mixed, history])
    categories = np.where(drop_category, model.null_category, batch.categories)

    predictor = predictor or partial(predict_noise, model.denoiser)
    loss = mse(predictor(x_in, t, categories), Tensor(noise))
    tallies = {
        "category": int(drop_category[::slots].sum()),
        "mutual": int(drop_mutual[::slots].sum()),
        "history": int(drop_history[::slots].sum()),
    }
    return loss, tallies


@dataclass
class StepResult:
    loss: float
    tallies: dict
    grad_norm: float


def training_step(batch, model, optimizer, rng, config):
    params = model.parameters()
    for tensor in params.values():
        tensor.zero_grad()
    loss, tallies = compute_loss(batch, model, rng, config)
    gradients = backward(loss)
    grads = {name: gradients[tensor] for name, tensor in params.items()}
    grads, norm = clip_grad_norm(grads, config.grad_clip)
    adam_step(params, grads, optimizer)
    return StepResult(loss=loss.item(), tallies=tallies, grad_norm=norm)


def validation_loss(model, rng, config, batch_cache):
    frozen = model.frozen()
    losses = []
    for batch in batch_cache:
        loss, _ = compute_loss(batch, frozen, rng, config, masking=False)
        losses.append(loss.item() * len(batch))
    return sum(losses) / sum(len(batch) for batch in batch_cache)


def batch_outfits(train_ids, step, batch_size, rng):
    """Outfits of 1-based ``step``: epochs are fixed permutations, tails dropped."""
    size = min(batch_size, len(train_ids))
    per_epoch = len(train_ids) // size
    epoch, index = divmod(step - 1, per_epoch)
    order = rng.spawn(f"epoch-{epoch}").permutation(len(train_ids))
    return [train_ids[int(position)] for position in order[index * size:(index + 1) * size]]


def ensure_writable(directory):
    directory = Path(directory)
    try:
        (directory / CHECKPOINT_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"Cannot create run directory {directory}", str(exc)) from exc
    if not os.access(directory / CHECKPOINT_DIR, os.W_OK):
        raise DataError(f"Run directory {directory} is not writable")


@dataclass
class TrainResult:
    model: object
    optimizer: AdamState
    step: int
    log: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)


def train(dataset, config, out_dir, resume=None, progress=True):
    """
    Run ``config.total_steps`` optimisation steps, appending one JSON line
    per step (and per validation) to the loss log and writing checkpoints
    at step 0, every checkpoint interval and the final step.
    """
    config.clean()
    out_dir = Path(out_dir)
    ensure_writable(out_dir)
    train_ids = dataset.outfits_in("train")
    if not train_ids:
        raise DataError("The dataset has no train-split outfits")
    rng = Rng(config.seed).spawn("train")

    if resume:
        checkpoint = load_checkpoint(resume)
        model, optimizer, start = checkpoint.model, checkpoint.optimizer, checkpoint.step
        logger.info("resuming from %s at step %d", resume, start)
    else:
        model = init_model(config, rng.spawn("init"))
        optimizer = AdamState(lr=config.learning_rate)
        start = 0
    result = TrainResult(model=model, optimizer=optimizer, step=start)

    checkpoint_dir = out_dir / CHECKPOINT_DIR
    if not resume:
        result.checkpoints.append(
            save_checkpoint(checkpoint_dir / checkpoint_name(0), model, optimizer, 0, config)
        )

    valid_batches = []
    valid_ids = dataset.outfits_in("valid")[: config.validation_outfits]
    if config.validation_interval and valid_ids:
        valid_batches = [
            build_batch(dataset, valid_ids[i:i + config.batch_size], config.history_limit)
            for i in range(0, len(valid_ids), config.batch_size)
        ]

    logger.info(
        "training %d parameters on %d outfits for %d steps",
        model.parameter_count(),
        len(train_ids),
        config.total_steps,
    )
    metrics = {}
    if resume:
        truncate_loss_log(out_dir / LOSS_LOG_NAME, start)
    with open(out_dir / LOSS_LOG_NAME, "a" if resume else "w", encoding="utf-8") as log:
        steps = tqdm(
            range(start + 1, config.total_steps + 1),
            desc="train",
            disable=not progress,
            initial=start,
            total=config.total_steps,
        )
        for step in steps:
            batch = build_batch(
                dataset, batch_outfits(train_ids, step, config.batch_size, rng), config.history_limit
            )
            outcome = training_step(batch, model, optimizer, rng.spawn(f"step-{step}"), config)
            entry = {"step": step, "loss": outcome.loss, "masked": outcome.tallies}
            metrics["loss"] = outcome.loss
            log.write(json.dumps(entry) + "\n")
            result.log.append(entry)
            steps.set_postfix(loss=f"{outcome.loss:.4f}")

            if valid_batches and step % config.validation_interval == 0:
                value = validation_loss(model, rng.spawn(f"valid-{step}"), config, valid_batches)
                metrics["valid_loss"] = value
                entry = {"step": step, "valid_loss": value}
                log.write(json.dumps(entry) + "\n")
                result.log.append(entry)
                logger.info("step %d validation loss %.4f", step, value)
            log.flush()

            if (config.checkpoint_interval and step % config.checkpoint_interval == 0) or (
                step == config.total_steps
            ):
                result.checkpoints.append(
                    save_checkpoint(
                        checkpoint_dir / checkpoint_name(step), model, optimizer, step, config, metrics
                    )
                )
            result.step = step
    return result


def read_loss_log(path):
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def truncate_loss_log(path, step):
    """Drop the log entries after ``step``, so a resumed run continues the log."""
    path = Path(path)
    if not path.exists():
        return
    kept = [entry for entry in read_loss_log(path) if entry["step"] <= step]
    with open(path, "w", encoding="utf-8") as handle:
        handle.writelines(json.dumps(entry) + "\n" for entry in kept)
