"""
The three guidance signals (category, mutual, history), their null forms and
the training-time condition dropout.
"""
from dataclasses import dataclass

import numpy as np

from difashion.exceptions import ConfigError, ContractError
from engine.tensor import Tensor, add, average, conv2d, reshape, scale, silu
from wardrobe.models import CATEGORIES

MUTUAL_HIDDEN = 256
CONDITION_KINDS = ("category", "mutual", "history")


class MutualEncoderParams:
    """
    Per-position MLP 3 -> 256 -> 3 with SiLU, run as two 1×1 convolutions.
    With ``mlp=False`` the encoder passes the co-item average through.
    """

    def __init__(self, tensors, mlp=True):
        self.tensors = tensors
        self.mlp = mlp

    def __getitem__(self, name):
        return self.tensors[name]

    def named_tensors(self):
        return dict(self.tensors)

    def parameter_count(self):
        return int(sum(tensor.size for tensor in self.tensors.values()))


def init_mutual_encoder(rng, mlp=True, hidden=MUTUAL_HIDDEN):
    arrays = {
        "fc1.weight": rng.normal((hidden, 3, 1, 1)) * np.sqrt(2.0 / 3),
        "fc1.bias": np.zeros(hidden),
        "fc2.weight": rng.normal((3, hidden, 1, 1)) * np.sqrt(1.0 / hidden),
        "fc2.bias": np.zeros(3),
    }
    return MutualEncoderParams(
        {name: Tensor(value, requires_grad=True, name=name) for name, value in arrays.items()},
        mlp=mlp,
    )


def mutual_condition(co_items, params):
    """
    Average the co-items element-wise, then apply the encoder at every
    spatial position. Accepts 3×H×W items or [N, 3, H, W] batches.
    """
    co_items = list(co_items)
    if not co_items:
        raise ContractError(
            "mutual_condition needs at least one co-item; use the null mutual condition"
        )
    mean = average(co_items)
    if not params.mlp:
        return mean
    single = mean.ndim == 3
    x = reshape(mean, (1,) + mean.shape) if single else mean
    hidden = silu(conv2d(x, params["fc1.weight"], params["fc1.bias"]))
    out = conv2d(hidden, params["fc2.weight"], params["fc2.bias"])
    return reshape(out, out.shape[1:]) if single else out


def validate_eta(eta, error_to_raise):
    if not 0.0 <= eta <= 1.0:
        raise error_to_raise({"eta": f"eta must lie in [0, 1], got {eta}"})


def mix_mutual(i_t, m, eta):
    """(1 - eta) * i_t + eta * m."""
    validate_eta(eta, ConfigError)
    if i_t.shape != m.shape:
        raise ContractError(f"mix_mutual: shape mismatch {i_t.shape} vs {m.shape}")
    if eta == 0.0:
        return scale(i_t, 1.0)
    if eta == 1.0:
        return scale(m, 1.0)
    return add(scale(i_t, 1.0 - eta), scale(m, eta))


def history_condition(images, shape):
    """
    Mean of clean history images, and whether the result is the null form
    (an empty history).
    """
    images = [np.asarray(getattr(image, "data", image), dtype=np.float64) for image in images]
    if not images:
        return Tensor(np.zeros(shape)), True
    for image in images:
        if image.shape != tuple(shape):
            raise ContractError(f"history_condition: image {image.shape}, expected {tuple(shape)}")
    return average([Tensor(image) for image in images]), False


@dataclass(frozen=True)
class MaskFlags:
    category: bool = False
    mutual: bool = False
    history: bool = False

    def as_dict(self):
        return {"category": self.category, "mutual": self.mutual, "history": self.history}


def validate_ratios(joint_ratio, individual_ratio, error_to_raise):
    for name, ratio in (("joint_mask_ratio", joint_ratio), ("individual_mask_ratio", individual_ratio)):
        if not 0.0 <= ratio <= 1.0:
            raise error_to_raise({name: f"Mask ratio must lie in [0, 1], got {ratio}"})


def sample_mask(rng, joint_ratio=0.3, individual_ratio=0.2):
    """
    Joint draw first: with ``joint_ratio`` drop mutual and history together
    and keep the category. Otherwise drop each condition independently with
    ``individual_ratio``.
    """
    validate_ratios(joint_ratio, individual_ratio, ConfigError)
    if rng.bernoulli(joint_ratio):
        return MaskFlags(category=False, mutual=True, history=True)
    return MaskFlags(
        category=rng.bernoulli(individual_ratio),
        mutual=rng.bernoulli(individual_ratio),
        history=rng.bernoulli(individual_ratio),
    )


def null_condition(kind, shape=None, num_categories=len(CATEGORIES)):
    """Reserved null category id, or a zero tensor for mutual and history."""
    if kind == "category":
        return num_categories
    if kind in ("mutual", "history"):
        if shape is None:
            raise ContractError(f"null {kind} condition needs a shape")
        return Tensor(np.zeros(shape))
    raise ContractError(f"Unknown condition kind {kind!r}, expected one of {CONDITION_KINDS}")


@dataclass
class ConditionBundle:
    category_id: int
    mutual: Tensor
    history: Tensor
    flags: MaskFlags = MaskFlags()
    num_categories: int = len(CATEGORIES)

    def clean(self):
        if self.mutual.shape != self.history.shape:
            raise ContractError(
                f"mutual {self.mutual.shape} and history {self.history.shape} differ"
            )
        if self.flags.category and self.category_id != self.num_categories:
            raise ContractError("A masked category must carry the null category id")
        for kind in ("mutual", "history"):
            payload = getattr(self, kind).data
            if getattr(self.flags, kind) and np.any(payload):
                raise ContractError(f"A masked {kind} condition must be all zeros")
            if not np.all(np.isfinite(payload)):
                raise ContractError(f"{kind} condition is not finite")

    def masked(self, flags):
        """The bundle with the conditions named by ``flags`` replaced by their null form."""
        combined = MaskFlags(
            category=self.flags.category or flags.category,
            mutual=self.flags.mutual or flags.mutual,
            history=self.flags.history or flags.history,
        )
        shape = self.mutual.shape
        return ConditionBundle(
            category_id=null_condition("category", num_categories=self.num_categories)
            if combined.category
            else self.category_id,
            mutual=null_condition("mutual", shape) if combined.mutual else self.mutual,
            history=null_condition("history", shape) if combined.history else self.history,
            flags=combined,
            num_categories=self.num_categories,
        )
