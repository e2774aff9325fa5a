"""
Dense float64 tensors with reverse-mode differentiation.

Each kernel computes its forward value with numpy and, when any input
requires a gradient, records its parents and a closure that maps the output
gradient to one gradient per parent. ``backward`` replays those closures in
reverse topological order. A graph lives as long as the tensors that
reference it; nothing is kept globally.
"""
import logging

import numpy as np
from scipy.special import expit, logsumexp

from difashion.exceptions import ContractError, InvalidShapeError

logger = logging.getLogger(__name__)


class Tensor:
    """N-dimensional float64 array, row-major, with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return not self._parents

    def item(self):
        if self.size != 1:
            raise ContractError("item() needs a single-element tensor", self.shape)
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


class GradientMap(dict):
    """Leaf tensor -> accumulated gradient. Tensors off the loss path read as zeros."""

    def __missing__(self, tensor):
        return np.zeros(tensor.shape)


def randn(shape, rng):
    """Standard-normal tensor drawn from ``rng``."""
    shape = tuple(int(extent) for extent in shape)
    if not shape or any(extent <= 0 for extent in shape):
        raise InvalidShapeError("randn needs positive extents", shape)
    return Tensor(rng.normal(shape))


def _result(data, parents, backward):
    out = Tensor(data)
    if any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _same_shape(kernel, a, b):
    if a.shape != b.shape:
        raise InvalidShapeError(f"{kernel}: shape mismatch {a.shape} vs {b.shape}")


def _require_rank(kernel, tensor, rank):
    if tensor.ndim != rank:
        raise InvalidShapeError(
            f"{kernel}: expected rank {rank}, got shape {tensor.shape}"
        )


def add(a, b):
    _same_shape("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    _same_shape("sub", a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    _same_shape("mul", a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a, factor):
    factor = float(factor)
    return _result(a.data * factor, (a,), lambda g: (g * factor,))


def average(tensors):
    """Element-wise mean of equally shaped tensors."""
    tensors = tuple(tensors)
    if not tensors:
        raise ContractError("average needs at least one tensor")
    for tensor in tensors[1:]:
        _same_shape("average", tensors[0], tensor)
    count = len(tensors)
    total = tensors[0].data.copy()
    for tensor in tensors[1:]:
        total += tensor.data
    return _result(
        total / count, tensors, lambda g: tuple(g / count for _ in range(count))
    )


def reshape(a, shape):
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise InvalidShapeError(f"reshape: cannot view {a.shape} as {shape}")
    source = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(source),))


def matmul(a, b):
    _require_rank("matmul", a, 2)
    _require_rank("matmul", b, 2)
    if a.shape[1] != b.shape[0]:
        raise InvalidShapeError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    return _result(
        a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g)
    )


def linear(x, weight, bias):
    """``x @ weight.T + bias`` for x [N, in], weight [out, in], bias [out]."""
    _require_rank("linear", x, 2)
    _require_rank("linear", weight, 2)
    if x.shape[1] != weight.shape[1] or bias.shape != (weight.shape[0],):
        raise InvalidShapeError(
            f"linear: shape mismatch {x.shape} vs {weight.shape} / {bias.shape}"
        )

    def backward(g):
        return g @ weight.data, g.T @ x.data, g.sum(axis=0)

    return _result(x.data @ weight.data.T + bias.data, (x, weight, bias), backward)


def conv2d(x, weight, bias=None, stride=1, pad=0):
    """Cross-correlation of x [N, C, H, W] with weight [O, C, kh, kw]."""
    _require_rank("conv2d", x, 4)
    _require_rank("conv2d", weight, 4)
    n, channels, height, width = x.shape
    out_channels, in_channels, kh, kw = weight.shape
    if in_channels != channels:
        raise InvalidShapeError(f"conv2d: shape mismatch {x.shape} vs {weight.shape}")
    if bias is not None and bias.shape != (out_channels,):
        raise InvalidShapeError(f"conv2d: shape mismatch {bias.shape} vs {weight.shape}")
    if stride < 1 or pad < 0:
        raise InvalidShapeError(f"conv2d: invalid stride {stride} / pad {pad}")

    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out_h = (height + 2 * pad - kh) // stride + 1
    out_w = (width + 2 * pad - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise InvalidShapeError(f"conv2d: kernel {weight.shape} larger than {x.shape}")

    cols = np.empty((n, channels, kh, kw, out_h, out_w))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = padded[
                :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
            ]
    out = np.tensordot(cols, weight.data, axes=([1, 2, 3], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(g):
        grad_weight = np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))
        grad_cols = np.tensordot(g, weight.data, axes=([1], [0]))
        grad_cols = grad_cols.transpose(0, 3, 4, 5, 1, 2)
        grad_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                grad_padded[
                    :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
                ] += grad_cols[:, :, i, j]
        grad_x = grad_padded[:, :, pad : pad + height, pad : pad + width]
        if bias is None:
            return grad_x, grad_weight
        return grad_x, grad_weight, g.sum(axis=(0, 2, 3))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward)


def avgpool2d(x, kernel=2):
    _require_rank("avgpool2d", x, 4)
    n, channels, height, width = x.shape
    if height % kernel or width % kernel:
        raise InvalidShapeError(f"avgpool2d: {x.shape} not divisible by {kernel}")
    blocks = x.data.reshape(n, channels, height // kernel, kernel, width // kernel, kernel)

    def backward(g):
        spread = np.repeat(np.repeat(g, kernel, axis=2), kernel, axis=3)
        return (spread / (kernel * kernel),)

    return _result(blocks.mean(axis=(3, 5)), (x,), backward)


def nearest_upsample2x(x):
    _require_rank("nearest_upsample2x", x, 4)
    n, channels, height, width = x.shape

    def backward(g):
        return (g.reshape(n, channels, height, 2, width, 2).sum(axis=(3, 5)),)

    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    return _result(out, (x,), backward)


def channel_concat(tensors):
    """Concatenate [N, C_i, H, W] tensors along the channel axis."""
    tensors = tuple(tensors)
    if not tensors:
        raise ContractError("channel_concat needs at least one tensor")
    head = tensors[0]
    _require_rank("channel_concat", head, 4)
    for tensor in tensors[1:]:
        _require_rank("channel_concat", tensor, 4)
        if tensor.shape[0] != head.shape[0] or tensor.shape[2:] != head.shape[2:]:
            raise InvalidShapeError(
                f"channel_concat: shape mismatch {head.shape} vs {tensor.shape}"
            )
    bounds = np.cumsum([tensor.shape[1] for tensor in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=1))

    return _result(
        np.concatenate([tensor.data for tensor in tensors], axis=1), tensors, backward
    )


def slice_channels(x, start, stop):
    _require_rank("slice_channels", x, 4)
    if not 0 <= start < stop <= x.shape[1]:
        raise InvalidShapeError(f"slice_channels: [{start}:{stop}] outside {x.shape}")

    def backward(g):
        grad = np.zeros_like(x.data)
        grad[:, start:stop] = g
        return (grad,)

    return _result(x.data[:, start:stop], (x,), backward)


def groupnorm(x, gamma, beta, groups=8, eps=1e-5):
    """Group normalization over [N, C, H, W] followed by a per-channel affine map."""
    _require_rank("groupnorm", x, 4)
    n, channels, height, width = x.shape
    if channels % groups:
        raise InvalidShapeError(f"groupnorm: {channels} channels not divisible by {groups}")
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise InvalidShapeError(
            f"groupnorm: shape mismatch {x.shape} vs {gamma.shape} / {beta.shape}"
        )
    grouped = x.data.reshape(n, groups, channels // groups, height, width)
    mean = grouped.mean(axis=(2, 3, 4), keepdims=True)
    var = grouped.var(axis=(2, 3, 4), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normed = ((grouped - mean) * inv_std).reshape(x.shape)
    out = normed * gamma.data[None, :, None, None] + beta.data[None, :, None, None]
    members = grouped[0].size

    def backward(g):
        grad_gamma = (g * normed).sum(axis=(0, 2, 3))
        grad_beta = g.sum(axis=(0, 2, 3))
        grad_normed = (g * gamma.data[None, :, None, None]).reshape(grouped.shape)
        normed_grouped = normed.reshape(grouped.shape)
        grad_x = (
            inv_std
            / members
            * (
                members * grad_normed
                - grad_normed.sum(axis=(2, 3, 4), keepdims=True)
                - normed_grouped
                * (grad_normed * normed_grouped).sum(axis=(2, 3, 4), keepdims=True)
            )
        )
        return grad_x.reshape(x.shape), grad_gamma, grad_beta

    return _result(out, (x, gamma, beta), backward)


def silu(x):
    sig = expit(x.data)
    return _result(
        x.data * sig, (x,), lambda g: (g * sig * (1.0 + x.data * (1.0 - sig)),)
    )


def embed_lookup(table, ids):
    """Rows of ``table`` [V, D] selected by integer ``ids`` [N]."""
    _require_rank("embed_lookup", table, 2)
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ContractError(f"embed_lookup: ids outside [0, {table.shape[0]})", ids)

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids, g)
        return (grad,)

    return _result(table.data[ids], (table,), backward)


def add_spatial(x, vector):
    """Add a per-sample channel vector [N, C] to every position of x [N, C, H, W]."""
    _require_rank("add_spatial", x, 4)
    if vector.shape != x.shape[:2]:
        raise InvalidShapeError(f"add_spatial: shape mismatch {x.shape} vs {vector.shape}")
    return _result(
        x.data + vector.data[:, :, None, None],
        (x, vector),
        lambda g: (g, g.sum(axis=(2, 3))),
    )


def mask_rows(x, keep):
    """Multiply each batch row of x by the constant ``keep[row]``."""
    keep = np.asarray(keep, dtype=np.float64).reshape(-1)
    if keep.shape[0] != x.shape[0]:
        raise InvalidShapeError(f"mask_rows: shape mismatch {x.shape} vs {keep.shape}")
    factor = keep.reshape((-1,) + (1,) * (x.ndim - 1))
    return _result(x.data * factor, (x,), lambda g: (g * factor,))


def mse(a, b):
    """Mean squared error, returned as a 0-d tensor."""
    _same_shape("mse", a, b)
    diff = a.data - b.data
    count = diff.size

    def backward(g):
        grad = 2.0 * diff * g / count
        return grad, -grad

    return _result(np.asarray(np.mean(diff * diff)), (a, b), backward)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy of logits [N, K] against integer labels [N]."""
    _require_rank("cross_entropy", logits, 2)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != logits.shape[0]:
        raise InvalidShapeError(
            f"cross_entropy: shape mismatch {logits.shape} vs {labels.shape}"
        )
    rows = np.arange(labels.shape[0])
    lse = logsumexp(logits.data, axis=1)
    loss = np.mean(lse - logits.data[rows, labels])

    def backward(g):
        grad = np.exp(logits.data - lse[:, None])
        grad[rows, labels] -= 1.0
        return (grad * g / labels.shape[0],)

    return _result(np.asarray(loss), (logits,), backward)


def _topological_order(root):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss):
    """
    Accumulate dLoss/dLeaf into ``.grad`` of every leaf that requires a
    gradient and return those gradients keyed by tensor.
    """
    if loss.size != 1:
        raise ContractError("backward needs a single-element loss", loss.shape)
    gradients = GradientMap()
    if not loss.requires_grad:
        return gradients

    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node.is_leaf:
            if node.requires_grad:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                gradients[node] = node.grad
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + parent_grad if key in pending else parent_grad
    return gradients
