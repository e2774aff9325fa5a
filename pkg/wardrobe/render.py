"""
Item sprites and the hue oracle.

Every item is a fixed silhouette per category painted in a single hue on a
white background. Patterns only lower the HSV value inside the motif, so the
hue of every foreground pixel equals the item hue.
"""
import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from difashion.exceptions import ContractError
from wardrobe.models import CATEGORIES, PATTERNS, category_id

SATURATION = 0.9
VALUE = 0.9
MOTIF_VALUE = 0.55
FOREGROUND_SATURATION = 0.1


def _grid(height, width):
    ys = ((np.arange(height) + 0.5) / height)[:, None]
    xs = ((np.arange(width) + 0.5) / width)[None, :]
    return ys, xs


def _inside(lo, value, hi):
    return (lo <= value) & (value <= hi)


def hat_mask(ys, xs):
    crown = (((xs - 0.5) / 0.28) ** 2 + ((ys - 0.62) / 0.36) ** 2 <= 1.0) & (ys <= 0.62)
    brim = _inside(0.62, ys, 0.72) & _inside(0.12, xs, 0.88)
    return crown | brim


def top_mask(ys, xs):
    torso = _inside(0.3, xs, 0.7) & _inside(0.2, ys, 0.88)
    sleeves = _inside(0.1, xs, 0.9) & _inside(0.2, ys, 0.42)
    return torso | sleeves


def bottom_mask(ys, xs):
    waist = _inside(0.28, xs, 0.72) & _inside(0.1, ys, 0.28)
    legs = (_inside(0.28, xs, 0.47) | _inside(0.53, xs, 0.72)) & _inside(0.28, ys, 0.92)
    return waist | legs


def shoes_mask(ys, xs):
    left = ((xs - 0.28) / 0.17) ** 2 + ((ys - 0.66) / 0.13) ** 2 <= 1.0
    right = ((xs - 0.72) / 0.17) ** 2 + ((ys - 0.66) / 0.13) ** 2 <= 1.0
    return left | right


SHAPE_MASKS = {
    CATEGORIES.index("hat"): hat_mask,
    CATEGORIES.index("top"): top_mask,
    CATEGORIES.index("bottom"): bottom_mask,
    CATEGORIES.index("shoes"): shoes_mask,
}


def category_mask(category, height, width):
    ys, xs = _grid(height, width)
    return np.broadcast_to(SHAPE_MASKS[category_id(category)](ys, xs), (height, width))


def motif_mask(pattern_id, height, width):
    """Pixels painted with the darker motif value."""
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    pattern = PATTERNS[pattern_id]
    if pattern == "solid":
        return np.zeros((height, width), dtype=bool)
    if pattern == "stripes":
        band = max(1, height // 8)
        return np.broadcast_to((rows // band) % 2 == 1, (height, width))
    period = max(4, height // 4)
    centre = (period - 1) / 2.0
    radius = period / 4.0
    return ((rows % period) - centre) ** 2 + ((cols % period) - centre) ** 2 <= radius**2


def render_item(category, hue, pattern_id, height, width):
    """Render one item as float64 3×H×W in [0, 1] on a white background."""
    if not 0.0 <= hue < 1.0:
        raise ContractError(f"Hue must lie in [0, 1), got {hue}")
    if height < 16 or width < 16:
        raise ContractError(f"Items render at 16×16 or larger, got {height}×{width}")
    if not 0 <= pattern_id < len(PATTERNS):
        raise ContractError(f"Unknown pattern id {pattern_id}")

    shape = category_mask(category, height, width)
    motif = shape & motif_mask(pattern_id, height, width)
    image = np.ones((height, width, 3))
    image[shape] = hsv_to_rgb([hue, SATURATION, VALUE])
    image[motif] = hsv_to_rgb([hue, SATURATION, MOTIF_VALUE])
    return image.transpose(2, 0, 1).copy()


def dominant_hue(image):
    """
    Circular mean hue of the foreground (saturation above 0.1) of a 3×H×W
    image, or None when the image has no foreground.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ContractError(f"dominant_hue expects a 3×H×W image, got {image.shape}")
    hsv = rgb_to_hsv(np.clip(image.transpose(1, 2, 0), 0.0, 1.0))
    foreground = hsv[..., 1] > FOREGROUND_SATURATION
    if not foreground.any():
        return None
    angles = 2.0 * np.pi * hsv[..., 0][foreground]
    mean = np.arctan2(np.sin(angles).mean(), np.cos(angles).mean()) / (2.0 * np.pi)
    hue = float(mean % 1.0)
    return 0.0 if hue >= 1.0 else hue


def quantize(image):
    """[0, 1] floats to uint8 with round-half-up."""
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def dequantize(pixels):
    return pixels.astype(np.float64) / 255.0
