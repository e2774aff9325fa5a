"""
Noise schedule and the two diffusion-time maps: closed-form forward
corruption and the ancestral reverse step with fixed variance beta_t.
Timesteps are 1-based: t = 1..T.
"""
from dataclasses import dataclass

import numpy as np

from difashion.exceptions import ConfigError, ContractError
from engine.tensor import Tensor


@dataclass(frozen=True)
class DiffusionSchedule:
    steps: int
    beta_start: float
    beta_end: float
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __repr__(self):
        return (
            f"DiffusionSchedule(T={self.steps}, "
            f"beta=[{self.beta_start:g}, {self.beta_end:g}])"
        )

    def check_step(self, t):
        if not 1 <= int(t) <= self.steps:
            raise ContractError(f"Timestep {t} outside [1, {self.steps}]")
        return int(t)

    def beta(self, t):
        return float(self.betas[self.check_step(t) - 1])

    def alpha(self, t):
        return float(self.alphas[self.check_step(t) - 1])

    def alpha_bar(self, t):
        return float(self.alpha_bars[self.check_step(t) - 1])

    def to_header(self):
        return {"T": self.steps, "beta_start": self.beta_start, "beta_end": self.beta_end}

    @classmethod
    def from_header(cls, header):
        return linear_schedule(header["T"], header["beta_start"], header["beta_end"])


DEFAULT_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
MAX_BETA = 0.5


def linear_schedule(steps=DEFAULT_STEPS, beta_start=DEFAULT_BETA_START, beta_end=DEFAULT_BETA_END):
    if steps < 1:
        raise ConfigError({"T": f"At least one diffusion step is required, got {steps}"})
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigError(
            {"beta": f"Need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"}
        )
    betas = np.linspace(beta_start, beta_end, steps)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return DiffusionSchedule(
        steps=int(steps),
        beta_start=float(beta_start),
        beta_end=float(beta_end),
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
    )


def scaled_betas(steps):
    """
    Linear-schedule endpoints stretched by 1000 / steps, so a short chain ends
    as close to pure noise as the default 1000-step one. Capped at 0.5.
    """
    factor = DEFAULT_STEPS / steps
    return (
        min(DEFAULT_BETA_START * factor, MAX_BETA),
        min(DEFAULT_BETA_END * factor, MAX_BETA),
    )


def _per_row(values, rows):
    """Broadcastable coefficient array for a batch of ``rows`` samples."""
    return np.asarray(values, dtype=np.float64).reshape((-1,) + (1,) * (rows - 1))


def q_sample(x0, t, noise, schedule):
    """
    x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise.

    ``t`` is a scalar step, or one step per leading row of ``x0``.
    """
    if noise.shape != x0.shape:
        raise ContractError(f"q_sample: noise {noise.shape} does not match x0 {x0.shape}")
    steps = np.atleast_1d(np.asarray(t, dtype=np.int64))
    for step in steps:
        schedule.check_step(step)
    alpha_bar = schedule.alpha_bars[steps - 1]
    if steps.size == 1:
        signal, spread = np.sqrt(alpha_bar[0]), np.sqrt(1.0 - alpha_bar[0])
    elif steps.size == x0.shape[0]:
        signal = _per_row(np.sqrt(alpha_bar), x0.ndim)
        spread = _per_row(np.sqrt(1.0 - alpha_bar), x0.ndim)
    else:
        raise ContractError(f"q_sample: {steps.size} steps for batch {x0.shape}")
    return Tensor(signal * x0.data + spread * noise.data)


def posterior_mean(x_t, eps_hat, t, schedule):
    t = schedule.check_step(t)
    alpha = schedule.alphas[t - 1]
    coefficient = (1.0 - alpha) / np.sqrt(1.0 - schedule.alpha_bars[t - 1])
    return (x_t.data - coefficient * eps_hat.data) / np.sqrt(alpha)


def posterior_step(x_t, eps_hat, t, schedule, noise=None):
    """
    One ancestral step x_t -> x_{t-1} with variance beta_t. No noise is added
    at t = 1, so the final step is deterministic given ``eps_hat``.
    """
    if eps_hat.shape != x_t.shape:
        raise ContractError(
            f"posterior_step: eps_hat {eps_hat.shape} does not match x_t {x_t.shape}"
        )
    mean = posterior_mean(x_t, eps_hat, t, schedule)
    if int(t) == 1:
        return Tensor(mean)
    if noise is None or noise.shape != x_t.shape:
        raise ContractError(f"posterior_step at t={t} needs noise shaped {x_t.shape}")
    return Tensor(mean + np.sqrt(schedule.betas[int(t) - 1]) * noise.data)
