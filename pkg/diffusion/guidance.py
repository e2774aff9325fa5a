"""
Classifier-free guidance over three nested conditions.

The four branches are evaluated with the condition sets (none), (category),
(category, mutual) and (category, mutual, history), in that order.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from difashion.exceptions import ConfigError, ContractError
from diffusion.conditioning import MaskFlags

BRANCH_NAMES = ("none", "t", "tm", "tmh")
BRANCH_MASKS = (
    MaskFlags(category=True, mutual=True, history=True),
    MaskFlags(category=False, mutual=True, history=True),
    MaskFlags(category=False, mutual=False, history=True),
    MaskFlags(category=False, mutual=False, history=False),
)


@dataclass(frozen=True)
class GuidanceScales:
    s_t: float = 12.0
    s_m: float = 4.0
    s_h: float = 4.0

    @staticmethod
    def validate_scale(name, value, error_to_raise):
        if not math.isfinite(value) or value < 0:
            raise error_to_raise({name: f"Guidance scale must be finite and non-negative, got {value}"})

    def clean(self):
        for name, value in asdict(self).items():
            self.validate_scale(name, value, ConfigError)

    @property
    def is_unit(self):
        return self.s_t == self.s_m == self.s_h == 1.0

    def to_dict(self):
        return asdict(self)


def compose_cfg(eps_none, eps_t, eps_tm, eps_tmh, scales):
    """
    eps_none + s_t (eps_t - eps_none) + s_m (eps_tm - eps_t) + s_h (eps_tmh - eps_tm).

    Unit scales return the fully conditioned prediction unchanged.
    """
    branches = [np.asarray(getattr(eps, "data", eps), dtype=np.float64)
                for eps in (eps_none, eps_t, eps_tm, eps_tmh)]
    shapes = {branch.shape for branch in branches}
    if len(shapes) != 1:
        raise ContractError(f"compose_cfg: branch shapes differ: {sorted(shapes)}")
    none, t, tm, tmh = branches
    if scales.is_unit:
        return tmh.copy()
    return none + scales.s_t * (t - none) + scales.s_m * (tm - t) + scales.s_h * (tmh - tm)
