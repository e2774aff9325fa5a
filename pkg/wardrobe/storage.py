"""
Dataset directory layout::

    manifest.json        world config, items, outfits (with split), users
    items/<item_id>.png  8-bit RGB, [0, 1] mapped to [0, 255] with round-half-up
"""
import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from difashion.exceptions import DataError
from wardrobe.item_path import item_image_path
from wardrobe.models import FashionDataset
from wardrobe.serializers import ManifestSerializer

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def save_png(pixels, path):
    """Write uint8 3×H×W pixels as an RGB PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0)), mode="RGB").save(
        path, format="PNG"
    )
    return path


def read_png(path, height, width):
    path = Path(path)
    try:
        with Image.open(path) as image:
            image.load()
            if image.mode != "RGB" or image.size != (width, height):
                raise DataError(
                    f"{path} is {image.mode} {image.size[0]}x{image.size[1]}, "
                    f"expected RGB {width}x{height}"
                )
            return np.asarray(image, dtype=np.uint8).transpose(2, 0, 1).copy()
    except FileNotFoundError as exc:
        raise DataError(f"Missing item image {path}") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"Corrupt item image {path}", str(exc)) from exc


def write_dataset(dataset, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for item_id in sorted(dataset.manifest.items):
        save_png(dataset.raw_image(item_id), directory / item_image_path(item_id))
    payload = ManifestSerializer(dataset.manifest).data
    with open(directory / MANIFEST_NAME, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=1)
        handle.write("\n")
    logger.info("wrote %d items to %s", len(dataset), directory)
    return directory


def load_dataset(directory):
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DataError(f"No dataset manifest at {manifest_path}")
    try:
        with open(manifest_path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"Cannot read {manifest_path}", str(exc)) from exc

    serializer = ManifestSerializer(data=payload)
    if not serializer.is_valid():
        raise DataError(f"Invalid manifest {manifest_path}", serializer.errors)
    manifest = serializer.save()
    manifest.clean()

    config = manifest.config
    images = {
        item_id: read_png(directory / item_image_path(item_id), config.height, config.width)
        for item_id in sorted(manifest.items)
    }
    logger.info("loaded %d items from %s", len(images), directory)
    return FashionDataset(manifest, images)
