import logging
from dataclasses import dataclass, field

import numpy as np

from difashion.exceptions import ConfigError, ContractError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("Adam learning rate must be positive", self.lr)
        if self.step < 0:
            raise ContractError("Adam step counter must be non-negative", self.step)

    def hyperparameters(self):
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step,
        }


def adam_step(params, grads, state):
    """
    Apply one bias-corrected Adam update in place.

    ``params`` maps names to parameter tensors, ``grads`` maps the same names
    to gradient arrays; a missing gradient counts as zero.
    """
    for name in state.m:
        if name not in params:
            raise ContractError(f"Adam state has no parameter named {name!r}")
    state.step += 1
    k = state.step
    correction1 = 1.0 - state.beta1**k
    correction2 = 1.0 - state.beta2**k

    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros(param.shape)
        if grad.shape != param.shape:
            raise ContractError(
                f"gradient for {name!r} has shape {grad.shape}, parameter {param.shape}"
            )
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(param.shape)
            v = np.zeros(param.shape)
        elif m.shape != param.shape:
            raise ContractError(f"Adam moments for {name!r} do not match {param.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.data = param.data - update
    return params, state


def clip_grad_norm(grads, max_norm):
    """Scale gradients so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total > max_norm > 0:
        factor = max_norm / total
        logger.debug("clipping gradient norm %.4f to %.4f", total, max_norm)
        return {name: g * factor for name, g in grads.items()}, total
    return grads, total
