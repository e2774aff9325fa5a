"""
Small convolutional category classifier. Its penultimate layer is the
feature space every feature-based metric and retrieval works in.

    conv3x3(3 -> W) silu pool2 | conv3x3(W -> 2W) silu pool2 |
    global pool | linear(2W -> F) silu = features | linear(F -> 4) = logits
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import softmax
from tqdm import tqdm

from difashion.exceptions import CheckpointError, ClassifierAccuracyError, ContractError, DataError
from engine.container import read_tensors, write_tensors
from engine.optim import AdamState, adam_step
from engine.rng import Rng
from engine.tensor import Tensor, avgpool2d, backward, conv2d, cross_entropy, linear, reshape, silu
from evaluation.models import ClassifierConfig
from wardrobe.models import CATEGORIES

logger = logging.getLogger(__name__)

CLASSIFIER_FORMAT = "difashion-classifier/1"
CLASSIFIER_NAME = "classifier.nt"
CHUNK = 64


def _he_normal(rng, shape, fan_in):
    return rng.normal(shape) * np.sqrt(2.0 / fan_in)


@dataclass
class ClassifierParams:
    config: ClassifierConfig
    tensors: dict
    accuracy: float = None
    dataset: str = None

    def __getitem__(self, name):
        return self.tensors[name]

    @property
    def feature_dim(self):
        return self.config.feature_dim

    def _forward(self, images):
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        if images.ndim != 4 or images.shape[1] != 3:
            raise ContractError(f"Classifier expects N×3×H×W images, got {images.shape}")
        if images.shape[2] % 4 or images.shape[2] != images.shape[3]:
            raise ContractError(f"Classifier needs square images divisible by 4, got {images.shape[2:]}")
        x = Tensor(2.0 * images - 1.0)
        x = avgpool2d(silu(conv2d(x, self["conv1.weight"], self["conv1.bias"], pad=1)))
        x = avgpool2d(silu(conv2d(x, self["conv2.weight"], self["conv2.bias"], pad=1)))
        x = avgpool2d(x, kernel=x.shape[2])
        features = silu(linear(reshape(x, (x.shape[0], x.shape[1])), self["fc.weight"], self["fc.bias"]))
        return features, linear(features, self["head.weight"], self["head.bias"])

    def _chunked(self, images, index):
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        return np.concatenate(
            [self._forward(images[start:start + CHUNK])[index].data for start in range(0, len(images), CHUNK)]
        )

    def features(self, images):
        """Penultimate activations [N, F] of images in [0, 1]."""
        return self._chunked(images, 0)

    def logits(self, images):
        return self._chunked(images, 1)

    def probabilities(self, images):
        return softmax(self.logits(images), axis=1)

    def predict(self, images):
        return np.argmax(self.logits(images), axis=1)

    def frozen(self):
        return ClassifierParams(
            self.config,
            {name: Tensor(t.data, name=name) for name, t in self.tensors.items()},
            self.accuracy,
            self.dataset,
        )


def init_classifier(config, rng):
    config.clean()
    width, features = config.width, config.feature_dim
    arrays = {
        "conv1.weight": _he_normal(rng, (width, 3, 3, 3), 27),
        "conv1.bias": np.zeros(width),
        "conv2.weight": _he_normal(rng, (2 * width, width, 3, 3), width * 9),
        "conv2.bias": np.zeros(2 * width),
        "fc.weight": _he_normal(rng, (features, 2 * width), 2 * width),
        "fc.bias": np.zeros(features),
        "head.weight": _he_normal(rng, (len(CATEGORIES), features), features) * 0.5,
        "head.bias": np.zeros(len(CATEGORIES)),
    }
    return ClassifierParams(
        config, {name: Tensor(array, requires_grad=True, name=name) for name, array in arrays.items()}
    )


def dataset_fingerprint(dataset):
    """Digest of the world config and every item image; a cached classifier is only valid for it."""
    digest = hashlib.sha256(json.dumps(dataset.config.to_dict(), sort_keys=True).encode("utf-8"))
    for item_id in sorted(dataset.manifest.items):
        digest.update(f"{item_id}:".encode("utf-8"))
        digest.update(np.ascontiguousarray(dataset.raw_image(item_id)).tobytes())
    return digest.hexdigest()


def labelled_items(dataset, splits):
    item_ids = sorted(
        item_id
        for outfit_id in sorted(dataset.manifest.splits)
        if dataset.split_of(outfit_id) in splits
        for item_id in dataset.outfit(outfit_id).item_ids
    )
    return item_ids, np.array([dataset.item(item_id).category_id for item_id in item_ids])


def accuracy(classifier, dataset, item_ids, labels):
    if not item_ids:
        raise DataError("No held-out items to measure classifier accuracy on")
    return float(np.mean(classifier.predict(dataset.images(item_ids)) == labels))


def train_classifier(dataset, config=None, rng=None, progress=True):
    """
    Fit the classifier on train-split items with cross-entropy and Adam, then
    require ``config.min_accuracy`` on the valid and test items.
    """
    config = config or ClassifierConfig()
    config.clean()
    rng = rng or Rng(config.seed)
    train_ids, train_labels = labelled_items(dataset, ("train",))
    if not train_ids:
        raise DataError("The dataset has no train-split items to fit the classifier on")
    held_ids, held_labels = labelled_items(dataset, ("valid", "test"))

    classifier = init_classifier(config, rng.spawn("init"))
    optimizer = AdamState(lr=config.lr)
    size = min(config.batch_size, len(train_ids))
    steps = tqdm(range(1, config.steps + 1), desc="classifier", disable=not progress)
    for step in steps:
        picks = rng.spawn(f"batch-{step}").permutation(len(train_ids))[:size]
        for tensor in classifier.tensors.values():
            tensor.zero_grad()
        _, logits = classifier._forward(dataset.images([train_ids[i] for i in picks]))
        loss = cross_entropy(logits, train_labels[picks])
        gradients = backward(loss)
        adam_step(
            classifier.tensors,
            {name: gradients[tensor] for name, tensor in classifier.tensors.items()},
            optimizer,
        )
        steps.set_postfix(loss=f"{loss.item():.4f}")

    classifier = classifier.frozen()
    classifier.dataset = dataset_fingerprint(dataset)
    classifier.accuracy = accuracy(classifier, dataset, held_ids, held_labels)
    logger.info("classifier held-out accuracy %.4f on %d items", classifier.accuracy, len(held_ids))
    if classifier.accuracy < config.min_accuracy:
        raise ClassifierAccuracyError(
            f"Classifier reached {classifier.accuracy:.4f} held-out accuracy, "
            f"below the {config.min_accuracy} floor; feature metrics would be meaningless"
        )
    return classifier


def save_classifier(path, classifier):
    header = {
        "format": CLASSIFIER_FORMAT,
        "config": classifier.config.to_dict(),
        "accuracy": classifier.accuracy,
        "dataset": classifier.dataset,
    }
    return write_tensors(path, {name: t.data for name, t in classifier.tensors.items()}, header)


def load_classifier(path):
    tensors, header = read_tensors(path)
    if header.get("format") != CLASSIFIER_FORMAT:
        raise CheckpointError(
            f"{path} is incompatible: classifier format {header.get('format')!r}, "
            f"expected {CLASSIFIER_FORMAT!r}"
        )
    config = ClassifierConfig(**header["config"])
    template = init_classifier(config, Rng(0))
    loaded = {}
    for name, tensor in template.tensors.items():
        if name not in tensors or tensors[name].shape != tensor.shape:
            raise CheckpointError(f"{path}: tensor {name!r} is missing or misshapen")
        loaded[name] = Tensor(tensors[name], name=name)
    return ClassifierParams(config, loaded, header.get("accuracy"), header.get("dataset"))


def cached_classifier(path, dataset, config=None):
    """
    The classifier cached at ``path``, or None when there is none or it was
    trained with another config or on another dataset.
    """
    path = Path(path)
    if not path.is_file():
        return None
    config = config or ClassifierConfig()
    classifier = load_classifier(path)
    if classifier.config.to_dict() != config.to_dict():
        logger.info("cached classifier %s has another config; retraining", path)
        return None
    if classifier.dataset != dataset_fingerprint(dataset):
        logger.info("cached classifier %s was trained on another dataset; retraining", path)
        return None
    return classifier


def load_or_train_classifier(dataset, run_dir, config=None, progress=True):
    """Reuse ``run_dir/classifier.nt`` when it matches the dataset and config, otherwise train and cache it."""
    path = Path(run_dir) / CLASSIFIER_NAME
    classifier = cached_classifier(path, dataset, config)
    if classifier is not None:
        logger.info("using cached classifier %s", path)
        return classifier
    classifier = train_classifier(dataset, config, progress=progress)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_classifier(path, classifier)
    return classifier
